//! Square banded matrices and their LU factorization with partial pivoting.

use crate::error::{require, Error, Result};

/// `n × n` matrix with `kl` sub- and `ku` super-diagonals.
///
/// Row `i` keeps columns `i - kl ..= i + kl + ku`; the extra `kl` slots hold
/// fill-in created by row swaps during factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || j + self.kl < i || j > i + self.kl + self.ku {
            return None;
        }
        Some(i * self.width + (j + self.kl - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Panics if `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "({i}, {j}) outside band kl = {}, ku = {}", self.kl, self.ku);
        let k = self.slot(i, j).expect("index inside matrix");
        self.data[k] = value;
    }

    /// Writes inside the fill-in region too; used by the factorization.
    fn put(&mut self, i: usize, j: usize, value: f64) {
        let k = self.slot(i, j).expect("index inside stored band");
        self.data[k] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let v = self.get(i, j);
        self.set(i, j, v + value);
    }

    /// `a·self + b·I`.
    pub fn scaled_plus_identity(&self, a: f64, b: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= a;
        }
        for i in 0..self.n {
            out.add(i, i, b);
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Shape { expected: self.n, got: x.len() });
        }
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn factor(&self) -> Result<BandedLu> {
        BandedLu::new(self.clone())
    }
}

/// `P A = L U` for a banded `A`; reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct BandedLu {
    u: BandedMatrix,
    multipliers: Vec<Vec<f64>>,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn new(mut a: BandedMatrix) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let reach = kl + a.ku;
        let mut multipliers = Vec::with_capacity(n);
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let p = (k..=last_row)
                .max_by(|&i, &j| a.get(i, k).abs().total_cmp(&a.get(j, k).abs()))
                .expect("non-empty pivot range");
            let piv = a.get(p, k);
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::Singular(k));
            }
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (x, y) = (a.get(k, j), a.get(p, j));
                    a.put(k, j, y);
                    a.put(p, j, x);
                }
            }
            pivots.push(p);
            let mut ls = Vec::with_capacity(last_row - k);
            for i in k + 1..=last_row {
                let l = a.get(i, k) / piv;
                ls.push(l);
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let v = a.get(i, j) - l * a.get(k, j);
                        a.put(i, j, v);
                    }
                }
                a.put(i, k, 0.0);
            }
            multipliers.push(ls);
        }
        Ok(Self { u: a, multipliers, pivots })
    }

    pub fn n(&self) -> usize {
        self.u.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let n = self.u.n;
        if b.len() != n {
            return Err(Error::Shape { expected: n, got: b.len() });
        }
        for k in 0..n {
            b.swap(k, self.pivots[k]);
            let bk = b[k];
            for (off, l) in self.multipliers[k].iter().enumerate() {
                b[k + 1 + off] -= l * bk;
            }
        }
        let reach = self.u.kl + self.u.ku;
        for i in (0..n).rev() {
            let hi = (i + reach).min(n - 1);
            let mut acc = b[i];
            for j in i + 1..=hi {
                acc -= self.u.get(i, j) * b[j];
            }
            b[i] = acc / self.u.get(i, i);
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Dense LU with partial pivoting; used as a reference solver.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    require(a.len() == n && a.iter().all(|r| r.len() == n), || "dense_solve needs a square system".into())?;
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        if m[p][k] == 0.0 {
            return Err(Error::Singular(k));
        }
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..n {
            let l = m[i][k] / m[k][k];
            if l != 0.0 {
                for j in k..n {
                    m[i][j] -= l * m[k][j];
                }
                x[i] -= l * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (x[i] - s) / m[i][i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> BandedMatrix {
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        a
    }

    #[test]
    fn agrees_with_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 2), (40, 1, 2), (33, 2, 2), (20, 3, 1)] {
            let a = random_banded(n, kl, ku, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = a.factor().unwrap().solve(&b).unwrap();
            let y = dense_solve(&a.to_dense(), &b).unwrap();
            let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (xi, yi) in x.iter().zip(&y) {
                assert!((xi - yi).abs() < 1e-10 * scale, "n={n} kl={kl} ku={ku}");
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let mut a = BandedMatrix::zeros(3, 1, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 1.0);
        a.set(2, 2, 1.0);
        let x = a.factor().unwrap().solve(&[2.0, 4.0, 5.0]).unwrap();
        let back = a.matvec(&x).unwrap();
        for (u, v) in back.iter().zip([2.0, 4.0, 5.0]) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = BandedMatrix::zeros(4, 1, 1);
        assert!(matches!(a.factor(), Err(Error::Singular(0))));
    }

    #[test]
    fn shape_mismatch() {
        let lu = BandedMatrix::identity(3, 1, 1).factor().unwrap();
        assert!(matches!(lu.solve(&[1.0]), Err(Error::Shape { expected: 3, got: 1 })));
    }

    #[test]
    #[should_panic]
    fn set_outside_band_panics() {
        BandedMatrix::zeros(5, 1, 1).set(0, 3, 1.0);
    }
}
