//! Grid-sampled fields, Cartesian and gauge-ball quadrature, sphere rules and
//! the bubble-frame quadrature used by the multi-bump solver.

pub mod frames;
pub mod gauge;
pub mod grid;
pub mod quad;
pub mod sphere;

pub use frames::{Frame, FrameRule, Nodes};
pub use gauge::{integrate_ball, integrate_ball_fn, integrate_sphere, integrate_sphere_fn, GaugeRule};
pub use grid::{GridField, GridSpec};
pub use quad::{grad_inner, integrate, integrate_fn, pairwise_sum, QuadratureResult};
pub use sphere::{gauss_legendre, SphereRule};
