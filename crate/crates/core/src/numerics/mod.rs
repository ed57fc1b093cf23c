//! Numerical kernels shared by the estimators and tests.

pub mod ecdf;
pub mod minimax;
pub mod optimize;
pub mod quadrature;
pub mod special;

pub use ecdf::{ecdf_ks, Ecdf, Reference, ReferenceCdf};
pub use minimax::{minimax, minimax_with, MinimaxOptions, MinimaxReport};
pub use optimize::{
    fd_gradient, maximize, minimize, FnObjective, GradObjective, Objective, OptimizeOptions,
    OptimizeReport, ParamBox, Region,
};
pub use quadrature::{integrate, integrate_box, integrate_vec, kronrod_nodes, QuadratureOptions};
pub use special::{
    chi2_cdf, chi2_pdf, chi2_quantile, chi2_sf, gamma_p, gamma_q, ln_gamma, normal_cdf,
    normal_pdf, normal_quantile,
};
