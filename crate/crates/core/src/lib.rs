//! Minimum energy paths and transition states on analytic 2D surfaces.
//!
//! A reaction path is represented as a continuous function of a reaction
//! coordinate `t ∈ [0, 1]`,
//!
//! ```text
//! x(t) = b(t) + t (1 - t) g(t)
//! ```
//!
//! where `b` is a fixed base path pinned to the endpoints and `g` is a small
//! tanh network. The network is trained with a stop-gradient loss that keeps
//! only the energy gradient orthogonal to the path (nudging) plus a climbing
//! term at the highest-energy sample. A discrete climbing-image NEB with FIRE
//! is provided as the baseline, and [`generalize`] trains one conditioned
//! network to predict paths for unseen systems.
//!
//! Module map:
//!
//! * [`potential`]: LEPS, Müller–Brown, Sine and Wells surfaces, minimizer, saddle refiner
//! * [`autodiff`]: scalar tape with a forward tangent channel, stop-gradient, Adam
//! * [`pathmodel`]: base paths, the MLP and the endpoint-pinned path
//! * [`loss`]: projections, modified energy and the total loss
//! * [`sampling`]: uniform and growing samplers
//! * [`trainer`]: the training loop, TS estimates and hyperparameter sweeps
//! * [`neb`]: climbing-image NEB relaxed with FIRE
//! * [`generalize`]: Wells dataset, conditioned training and baselines

pub mod autodiff;
pub mod csvfmt;
pub mod generalize;
pub mod loss;
pub mod neb;
pub mod pathmodel;
pub mod potential;
pub mod sampling;
pub mod trainer;

/// A point or vector in the plane.
pub type Vec2 = nalgebra::Vector2<f64>;

pub use potential::{Potential2D, PotentialError, PotentialKind, Surface};

/// Largest distance between consecutive points, as a percentage of `|b - a|`.
pub fn max_separation_pct(points: &[Vec2], a: Vec2, b: Vec2) -> f64 {
    let span = (b - a).norm();
    let max = points
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .fold(0.0, f64::max);
    100.0 * max / span
}
