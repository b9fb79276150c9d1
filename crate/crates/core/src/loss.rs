//! Path losses: plain mean energy, the nudged (stop-gradient) energy, the
//! speed-variance spacing term and the climbing term.

use thiserror::Error;

use crate::autodiff::{AdError, Tape, Var, VarRange};
use crate::pathmodel::{PathError, PathModel};
use crate::potential::{PotentialError, Surface};
use crate::Vec2;

/// Tangents shorter than this mean the path has collapsed.
pub const MIN_TANGENT_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("degenerate tangent (norm {norm:e}) at t = {t}")]
    DegenerateTangent { t: f64, norm: f64 },
    #[error("a batch needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid loss coefficient {name} = {value}")]
    InvalidCoefficient { name: &'static str, value: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// `((g·d)/|d|²) d`, the part of `grad` along `tangent`.
pub fn project_tangential(grad: Vec2, tangent: Vec2) -> Result<Vec2, LossError> {
    let n2 = tangent.norm_squared();
    if n2.sqrt() <= MIN_TANGENT_NORM {
        return Err(LossError::DegenerateTangent {
            t: f64::NAN,
            norm: n2.sqrt(),
        });
    }
    Ok(tangent * (grad.dot(&tangent) / n2))
}

/// Index of the largest value; ties go to the first.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec2,
    pub tangent: Vec2,
    pub energy: f64,
    pub grad: Vec2,
    pub grad_par: Vec2,
    pub x_vars: [Var; 2],
    pub tangent_vars: [Var; 2],
}

impl Sample {
    pub fn grad_perp(&self) -> Vec2 {
        self.grad - self.grad_par
    }
}

/// One iteration's samples, recorded on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<Sample>,
    /// Highest-energy sample.
    pub ts_index: usize,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.samples.iter().map(|s| s.x).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy).collect()
    }

    pub fn ts(&self) -> &Sample {
        &self.samples[self.ts_index]
    }

    pub fn max_grad_perp(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.grad_perp().norm())
            .fold(0.0, f64::max)
    }
}

/// Evaluate the path at each `t`, query the surface and record everything
/// needed by the losses.
pub fn evaluate_batch<S: Surface + ?Sized>(
    tape: &mut Tape,
    theta: VarRange,
    model: &PathModel,
    ts: &[f64],
    surface: &S,
) -> Result<SampleBatch, LossError> {
    let mut samples = Vec::with_capacity(ts.len());
    for &t in ts {
        let (x_vars, tangent_vars) = model.eval_tape(tape, theta, t)?;
        let x = Vec2::new(tape.value(x_vars[0]), tape.value(x_vars[1]));
        let tangent = Vec2::new(tape.value(tangent_vars[0]), tape.value(tangent_vars[1]));
        let (energy, grad) = surface.energy_grad(x)?;
        let grad_par = project_tangential(grad, tangent).map_err(|e| match e {
            LossError::DegenerateTangent { norm, .. } => LossError::DegenerateTangent { t, norm },
            other => other,
        })?;
        samples.push(Sample {
            t,
            x,
            tangent,
            energy,
            grad,
            grad_par,
            x_vars,
            tangent_vars,
        });
    }
    let energies: Vec<f64> = samples.iter().map(|s| s.energy).collect();
    Ok(SampleBatch {
        ts_index: argmax_first(&energies),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_s: f64,
    pub lambda_cl: f64,
    pub use_stop_gradient: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_s: 0.0,
            lambda_cl: 1.0,
            use_stop_gradient: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [("lambda_s", self.lambda_s), ("lambda_cl", self.lambda_cl)] {
            if !value.is_finite() || value < 0.0 {
                return Err(LossError::InvalidCoefficient { name, value });
            }
        }
        Ok(())
    }
}

/// `U(x)` as a tape node whose gradient is the analytic `∇U`.
pub fn raw_energy(tape: &mut Tape, s: &Sample) -> Result<Var, LossError> {
    Ok(tape.external(&s.x_vars, s.energy, &[s.grad.x, s.grad.y])?)
}

/// `c·x` for a constant vector `c`; constants carry no gradient, which is
/// exactly a stop-gradient on `c`.
fn frozen_dot(tape: &mut Tape, c: Vec2, x: [Var; 2]) -> Var {
    let a = tape.scale(x[0], c.x);
    let b = tape.scale(x[1], c.y);
    tape.add(a, b)
}

/// `Ũ = U - stop(∇U_∥)·x`; its gradient in `x` is `∇U_⊥`.
pub fn modified_energy(tape: &mut Tape, s: &Sample) -> Result<Var, LossError> {
    let u = raw_energy(tape, s)?;
    let lin = frozen_dot(tape, s.grad_par, s.x_vars);
    Ok(tape.sub(u, lin))
}

/// Population variance of the speeds `|x'(t_i)|`.
pub fn speed_variance(tape: &mut Tape, batch: &SampleBatch) -> Result<Var, LossError> {
    let n = batch.len() as f64;
    let mut speeds = Vec::with_capacity(batch.len());
    for s in &batch.samples {
        let a = tape.powi(s.tangent_vars[0], 2);
        let b = tape.powi(s.tangent_vars[1], 2);
        let sq = tape.add(a, b);
        speeds.push(tape.sqrt(sq)?);
    }
    let total = tape.sum(&speeds);
    let mean = tape.scale(total, 1.0 / n);
    let devs: Vec<Var> = speeds
        .iter()
        .map(|&v| {
            let d = tape.sub(v, mean);
            tape.powi(d, 2)
        })
        .collect();
    let ss = tape.sum(&devs);
    Ok(tape.scale(ss, 1.0 / n))
}

/// Mean (modified or raw) energy, plus `λ_s` times the speed variance, minus
/// `λ_Cl` times the frozen tangential term at the highest sample.
pub fn total_loss(
    tape: &mut Tape,
    batch: &SampleBatch,
    cfg: &LossConfig,
) -> Result<Var, LossError> {
    cfg.validate()?;
    if batch.len() < 2 {
        return Err(LossError::TooFewSamples(batch.len()));
    }
    let n = batch.len() as f64;
    let mut terms = Vec::with_capacity(batch.len());
    for s in &batch.samples {
        terms.push(if cfg.use_stop_gradient {
            modified_energy(tape, s)?
        } else {
            raw_energy(tape, s)?
        });
    }
    let sum = tape.sum(&terms);
    let mut loss = tape.scale(sum, 1.0 / n);
    if cfg.lambda_s > 0.0 {
        let var = speed_variance(tape, batch)?;
        let term = tape.scale(var, cfg.lambda_s);
        loss = tape.add(loss, term);
    }
    if cfg.lambda_cl > 0.0 {
        let ts = batch.ts();
        let climb = frozen_dot(tape, ts.grad_par, ts.x_vars);
        let term = tape.scale(climb, cfg.lambda_cl);
        loss = tape.sub(loss, term);
    }
    Ok(loss)
}
