//! Boundary stabilization of the linear (and controlled nonlinear) KdV
//! equation on a bounded interval, via a truncated series kernel.

pub mod banded;
pub mod error;
pub mod kernel;
pub mod numeric;
pub mod poly;
pub mod simulator;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use kernel::{DecayReport, KernelDump, PseudoKernel};
pub use poly::{Monomial, Poly1, Poly2, Var};
pub use simulator::{fit_decay_rate, init_cell_average, simulate, Mode, SchemeConfig, SimTrace, Stencil};
pub use spectral::{find_eigenvalues, spectral_abscissa, EigRecord};
pub use transform::{discretize_k, DiscreteK, GridFunction, SuccessionRule};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
