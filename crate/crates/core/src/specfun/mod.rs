//! Special functions: Bessel K of real order, normal CDFs in one to many
//! dimensions, and the quadrature used to mix them over a latent scale.

pub mod bessel;
pub mod mvn;
pub mod normal;
pub mod quadrature;

pub use bessel::{bessel_k_ratio, dlog_bessel_k_darg, dlog_bessel_k_dorder, log_bessel_k};
pub use mvn::{bvn_upper, mvn_rectangle_prob, mvn_rectangle_prob_lattice, MvnSpec, NormalRectangle};
pub use normal::{log_norm_cdf, norm_cdf, norm_inv_cdf, norm_pdf, norm_sf};
pub use quadrature::{integrate, integrate_log_scaled, integrate_vec, QuadratureSpec, Transform};
