//! Closed-form 2D potential energy surfaces.
//!
//! Every surface returns its energy together with the exact analytic
//! gradient, and counts combined energy+gradient calls so that methods can be
//! compared by cost. The counter is atomic: batches may be evaluated from
//! several threads.

use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Matrix2, SymmetricEigen};
use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("LEPS needs positive interatomic distances, got ({x}, {y})")]
    NonPositiveDistance { x: f64, y: f64 },
    #[error("LEPS exchange term vanishes at ({x}, {y}); gradient undefined")]
    DegenerateExchange { x: f64, y: f64 },
    #[error("minimizer did not converge after {iterations} iterations (|g| = {grad_norm:e} at ({}, {}))", last.x, last.y)]
    NoConvergence {
        last: Vec2,
        grad_norm: f64,
        iterations: usize,
    },
    #[error("saddle search left the trust radius {radius} around the initial guess")]
    Diverged { last: Vec2, radius: f64 },
    #[error("stationary point at ({}, {}) has {negative} negative Hessian eigenvalues, not a first-order saddle", point.x, point.y)]
    NotFirstOrderSaddle { point: Vec2, negative: usize },
    #[error("singular Hessian at ({}, {})", point.x, point.y)]
    SingularHessian { point: Vec2 },
    #[error("unknown potential `{0}`")]
    UnknownPotential(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("invalid value `{value}` for parameter `{key}`")]
    InvalidParameter { key: String, value: String },
}

/// Anything that can report an energy and its gradient at a point.
///
/// Implementations must count each successful call exactly once.
pub trait Surface: Sync {
    fn energy_grad(&self, p: Vec2) -> Result<(f64, Vec2), PotentialError>;
    fn eval_count(&self) -> u64;

    fn energy(&self, p: Vec2) -> Result<f64, PotentialError> {
        self.energy_grad(p).map(|(e, _)| e)
    }
}

/// Parameters of the London–Eyring–Polanyi–Sato surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LepsParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d_ab: f64,
    pub d_bc: f64,
    pub d_ac: f64,
    pub r0: f64,
    pub alpha: f64,
}

impl Default for LepsParams {
    fn default() -> Self {
        LepsParams {
            a: 0.05,
            b: 0.3,
            c: 0.05,
            d_ab: 4.746,
            d_bc: 4.746,
            d_ac: 3.445,
            r0: 0.742,
            alpha: 1.942,
        }
    }
}

impl LepsParams {
    /// Coulomb integral `Q(r, d)` and its derivative in `r`.
    pub fn coulomb(&self, r: f64, d: f64) -> (f64, f64) {
        let e1 = (-self.alpha * (r - self.r0)).exp();
        let e2 = e1 * e1;
        let q = 0.5 * d * (1.5 * e2 - e1);
        let dq = 0.5 * d * self.alpha * (-3.0 * e2 + e1);
        (q, dq)
    }

    /// Exchange integral `J(r, d)` and its derivative in `r`.
    pub fn exchange(&self, r: f64, d: f64) -> (f64, f64) {
        let e1 = (-self.alpha * (r - self.r0)).exp();
        let e2 = e1 * e1;
        let j = 0.25 * d * (e2 - 6.0 * e1);
        let dj = 0.25 * d * self.alpha * (-2.0 * e2 + 6.0 * e1);
        (j, dj)
    }
}

/// One Gaussian term of the Müller–Brown surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MbTerm {
    pub amp: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub x0: f64,
    pub y0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuellerBrownParams {
    pub terms: [MbTerm; 4],
}

impl Default for MuellerBrownParams {
    fn default() -> Self {
        let a = [-1.0, -1.0, -6.5, 0.7];
        let b = [0.0, 0.0, 11.0, 0.6];
        let c = [-10.0, -10.0, -6.5, 0.7];
        let x0 = [1.0, 0.0, -0.5, -1.0];
        let y0 = [0.0, 0.5, 1.5, 1.0];
        let amp = [-200.0, -100.0, -170.0, 15.0];
        let terms = std::array::from_fn(|i| MbTerm {
            amp: amp[i],
            a: a[i],
            b: b[i],
            c: c[i],
            x0: x0[i],
            y0: y0[i],
        });
        MuellerBrownParams { terms }
    }
}

/// The variable peak of the Wells family, `φ = (μ_px, μ_py, σ_p, c_p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellsParams {
    pub mu_px: f64,
    pub mu_py: f64,
    pub sigma_p: f64,
    pub c_p: f64,
}

impl Default for WellsParams {
    fn default() -> Self {
        WellsParams {
            mu_px: 0.5,
            mu_py: 0.0,
            sigma_p: 0.15,
            c_p: 0.6,
        }
    }
}

impl WellsParams {
    pub fn as_array(&self) -> [f64; 4] {
        [self.mu_px, self.mu_py, self.sigma_p, self.c_p]
    }

    pub fn from_array(phi: [f64; 4]) -> Self {
        WellsParams {
            mu_px: phi[0],
            mu_py: phi[1],
            sigma_p: phi[2],
            c_p: phi[3],
        }
    }
}

/// Width of the two fixed wells.
pub const WELL_SIGMA: f64 = 0.4;

/// Isotropic bivariate normal density and its gradient.
pub fn normal_density(p: Vec2, mu: Vec2, sigma: f64) -> (f64, Vec2) {
    let d = p - mu;
    let s2 = sigma * sigma;
    let n = (-0.5 * d.norm_squared() / s2).exp() / (2.0 * PI * s2);
    (n, -d * (n / s2))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Leps(LepsParams),
    MuellerBrown(MuellerBrownParams),
    Sine,
    Wells(WellsParams),
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::Leps(_) => "leps",
            PotentialKind::MuellerBrown(_) => "mb",
            PotentialKind::Sine => "sine",
            PotentialKind::Wells(_) => "wells",
        }
    }
}

/// An analytic surface with an evaluation counter.
#[derive(Debug)]
pub struct Potential2D {
    kind: PotentialKind,
    evals: AtomicU64,
}

impl Clone for Potential2D {
    /// The clone starts with a fresh counter.
    fn clone(&self) -> Self {
        Potential2D::new(self.kind.clone())
    }
}

impl fmt::Display for Potential2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())
    }
}

impl Potential2D {
    pub fn new(kind: PotentialKind) -> Self {
        Potential2D {
            kind,
            evals: AtomicU64::new(0),
        }
    }

    pub fn leps() -> Self {
        Self::new(PotentialKind::Leps(LepsParams::default()))
    }

    pub fn mueller_brown() -> Self {
        Self::new(PotentialKind::MuellerBrown(MuellerBrownParams::default()))
    }

    pub fn sine() -> Self {
        Self::new(PotentialKind::Sine)
    }

    pub fn wells(params: WellsParams) -> Self {
        Self::new(PotentialKind::Wells(params))
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Build a surface from its name and `prefix.key=value` overrides,
    /// e.g. `wells.mu_px=0.4` or `leps.alpha=2.0`.
    pub fn from_name(name: &str, overrides: &[(String, String)]) -> Result<Self, PotentialError> {
        let mut kind = match name.to_ascii_lowercase().as_str() {
            "leps" => PotentialKind::Leps(LepsParams::default()),
            "mb" | "mueller-brown" | "muller-brown" | "muellerbrown" => {
                PotentialKind::MuellerBrown(MuellerBrownParams::default())
            }
            "sine" => PotentialKind::Sine,
            "wells" => PotentialKind::Wells(WellsParams::default()),
            other => return Err(PotentialError::UnknownPotential(other.to_string())),
        };
        for (key, value) in overrides {
            let parsed: f64 = value
                .parse()
                .map_err(|_| PotentialError::InvalidParameter {
                    key: key.clone(),
                    value: value.clone(),
                })?;
            if !parsed.is_finite() {
                return Err(PotentialError::InvalidParameter {
                    key: key.clone(),
                    value: value.clone(),
                });
            }
            let (prefix, field) = key
                .split_once('.')
                .ok_or_else(|| PotentialError::UnknownParameter(key.clone()))?;
            if prefix != kind.name() {
                return Err(PotentialError::UnknownParameter(key.clone()));
            }
            let slot = match &mut kind {
                PotentialKind::Leps(p) => match field {
                    "a" => &mut p.a,
                    "b" => &mut p.b,
                    "c" => &mut p.c,
                    "d_ab" => &mut p.d_ab,
                    "d_bc" => &mut p.d_bc,
                    "d_ac" => &mut p.d_ac,
                    "r0" => &mut p.r0,
                    "alpha" => &mut p.alpha,
                    _ => return Err(PotentialError::UnknownParameter(key.clone())),
                },
                PotentialKind::Wells(p) => match field {
                    "mu_px" => &mut p.mu_px,
                    "mu_py" => &mut p.mu_py,
                    "sigma_p" => &mut p.sigma_p,
                    "c_p" => &mut p.c_p,
                    _ => return Err(PotentialError::UnknownParameter(key.clone())),
                },
                _ => return Err(PotentialError::UnknownParameter(key.clone())),
            };
            *slot = parsed;
        }
        Ok(Potential2D::new(kind))
    }

    /// Evaluate without touching the counter.
    pub fn evaluate(&self, p: Vec2) -> Result<(f64, Vec2), PotentialError> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(PotentialError::NonFinite { x: p.x, y: p.y });
        }
        match &self.kind {
            PotentialKind::Leps(params) => leps(params, p),
            PotentialKind::MuellerBrown(params) => Ok(mueller_brown(params, p)),
            PotentialKind::Sine => Ok(sine(p)),
            PotentialKind::Wells(params) => Ok(wells(params, p)),
        }
    }

    pub fn reset_count(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }
}

impl Surface for Potential2D {
    fn energy_grad(&self, p: Vec2) -> Result<(f64, Vec2), PotentialError> {
        let out = self.evaluate(p)?;
        self.evals.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }
}

fn leps(params: &LepsParams, p: Vec2) -> Result<(f64, Vec2), PotentialError> {
    let (rab, rbc) = (p.x, p.y);
    if rab <= 0.0 || rbc <= 0.0 {
        return Err(PotentialError::NonPositiveDistance { x: rab, y: rbc });
    }
    let rac = rab + rbc;
    let (qab, dqab) = params.coulomb(rab, params.d_ab);
    let (qbc, dqbc) = params.coulomb(rbc, params.d_bc);
    let (qac, dqac) = params.coulomb(rac, params.d_ac);
    let (jab, djab) = params.exchange(rab, params.d_ab);
    let (jbc, djbc) = params.exchange(rbc, params.d_bc);
    let (jac, djac) = params.exchange(rac, params.d_ac);
    let (sa, sb, sc) = (1.0 + params.a, 1.0 + params.b, 1.0 + params.c);

    let coulomb = qab / sa + qbc / sb + qac / sc;
    let (ja, jb, jc) = (jab / sa, jbc / sb, jac / sc);
    let ex2 = ja * ja + jb * jb + jc * jc - ja * jb - jb * jc - ja * jc;
    if ex2 <= 0.0 {
        return Err(PotentialError::DegenerateExchange { x: rab, y: rbc });
    }
    let ex = ex2.sqrt();
    let energy = coulomb - ex;

    // d(ex2)/dJ for each scaled exchange integral
    let da = 2.0 * ja - jb - jc;
    let db = 2.0 * jb - ja - jc;
    let dc = 2.0 * jc - ja - jb;
    let half_inv = 0.5 / ex;
    // r_ac depends on both coordinates
    let gx = dqab / sa + dqac / sc - half_inv * (da * djab / sa + dc * djac / sc);
    let gy = dqbc / sb + dqac / sc - half_inv * (db * djbc / sb + dc * djac / sc);
    Ok((energy, Vec2::new(gx, gy)))
}

fn mueller_brown(params: &MuellerBrownParams, p: Vec2) -> (f64, Vec2) {
    let mut energy = 0.0;
    let mut grad = Vec2::zeros();
    for t in &params.terms {
        let dx = p.x - t.x0;
        let dy = p.y - t.y0;
        let e = t.amp * (t.a * dx * dx + t.b * dx * dy + t.c * dy * dy).exp();
        energy += e;
        grad.x += e * (2.0 * t.a * dx + t.b * dy);
        grad.y += e * (t.b * dx + 2.0 * t.c * dy);
    }
    (energy, grad)
}

fn sine(p: Vec2) -> (f64, Vec2) {
    let (x, y) = (p.x, p.y);
    let (sin_y, cos_y) = (PI * y).sin_cos();
    let eu = (-6.0 * x * x - cos_y * cos_y).exp();
    let f1 = 1.0 - eu;
    let f1x = 12.0 * x * eu;
    let f1y = -eu * 2.0 * PI * sin_y * cos_y;

    let s = x + 0.5 * cos_y;
    let ew = (-20.0 * s * s).exp();
    let en = (-100.0 * x * x).exp();
    let f2 = 1.0 - 0.1 * en - 0.6 * ew;
    let f2x = 20.0 * x * en + 24.0 * s * ew;
    let f2y = -12.0 * PI * s * sin_y * ew;

    let energy = f1 * f2 + 0.1 * x * x;
    let grad = Vec2::new(f1x * f2 + f1 * f2x + 0.2 * x, f1y * f2 + f1 * f2y);
    (energy, grad)
}

fn wells(params: &WellsParams, p: Vec2) -> (f64, Vec2) {
    let (n0, g0) = normal_density(p, Vec2::new(0.0, 0.0), WELL_SIGMA);
    let (n1, g1) = normal_density(p, Vec2::new(0.0, 1.0), WELL_SIGMA);
    let (np, gp) = normal_density(p, Vec2::new(params.mu_px, params.mu_py), params.sigma_p);
    (-n0 - n1 + params.c_p * np, -g0 - g1 + gp * params.c_p)
}

/// Minima of the Sine surface sit at `(0, n - 1/2)`.
pub fn sine_minimum(n: i32) -> Vec2 {
    Vec2::new(0.0, n as f64 - 0.5)
}

/// Options for [`find_minimum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-8,
            max_iters: 10_000,
        }
    }
}

/// Gradient descent with an Armijo backtracking line search.
///
/// The trial step is the Barzilai–Borwein length from the previous pair of
/// iterates, so the minimizer stays deterministic for a fixed start.
pub fn find_minimum<S: Surface + ?Sized>(
    surface: &S,
    start: Vec2,
    opts: MinimizeOptions,
) -> Result<Vec2, PotentialError> {
    let mut x = start;
    let (mut e, mut g) = surface.energy_grad(x)?;
    let mut step = 1e-3 / g.norm().max(1e-12);
    for _ in 0..opts.max_iters {
        let gnorm = g.norm();
        if gnorm < opts.tol {
            return Ok(x);
        }
        let mut alpha = step;
        let (x_new, e_new, g_new) = loop {
            let trial = x - g * alpha;
            match surface.energy_grad(trial) {
                Ok((et, gt)) if et <= e - 1e-4 * alpha * gnorm * gnorm => break (trial, et, gt),
                // near the minimum the decrease drops below energy rounding,
                // so fall back on the gradient norm
                Ok((et, gt)) if et <= e + 1e-14 * e.abs().max(1.0) && gt.norm() < gnorm => {
                    break (trial, et, gt)
                }
                // out-of-domain trials are treated like a failed descent test
                Ok(_) | Err(PotentialError::NonPositiveDistance { .. }) => {}
                Err(err) => return Err(err),
            }
            alpha *= 0.5;
            if alpha * gnorm < 1e-300 {
                return Err(PotentialError::NoConvergence {
                    last: x,
                    grad_norm: gnorm,
                    iterations: opts.max_iters,
                });
            }
        };
        let s = x_new - x;
        let yv = g_new - g;
        let sy = s.dot(&yv);
        step = if sy > 0.0 {
            s.norm_squared() / sy
        } else {
            alpha * 2.0
        };
        x = x_new;
        e = e_new;
        g = g_new;
    }
    let grad_norm = g.norm();
    if grad_norm < opts.tol {
        return Ok(x);
    }
    Err(PotentialError::NoConvergence {
        last: x,
        grad_norm,
        iterations: opts.max_iters,
    })
}

/// Central-difference Hessian of the analytic gradient, symmetrized.
pub fn fd_hessian<S: Surface + ?Sized>(
    surface: &S,
    p: Vec2,
    h: f64,
) -> Result<Matrix2<f64>, PotentialError> {
    let mut cols = [Vec2::zeros(); 2];
    for (i, col) in cols.iter_mut().enumerate() {
        let mut e = Vec2::zeros();
        e[i] = h;
        let (_, gp) = surface.energy_grad(p + e)?;
        let (_, gm) = surface.energy_grad(p - e)?;
        *col = (gp - gm) / (2.0 * h);
    }
    let m = Matrix2::from_columns(&cols);
    Ok((m + m.transpose()) * 0.5)
}

/// Options for [`refine_saddle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleOptions {
    pub tol: f64,
    pub trust_radius: f64,
    pub max_iters: usize,
    pub fd_step: f64,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            tol: 1e-10,
            trust_radius: 0.5,
            max_iters: 100,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saddle {
    pub point: Vec2,
    pub energy: f64,
    pub iterations: usize,
    /// Energy+gradient calls spent, including Hessian columns.
    pub evaluations: u64,
    pub eigenvalues: [f64; 2],
}

/// Newton iteration on `∇U = 0` from a guess near an index-1 saddle.
pub fn refine_saddle<S: Surface + ?Sized>(
    surface: &S,
    guess: Vec2,
    opts: SaddleOptions,
) -> Result<Saddle, PotentialError> {
    let start_count = surface.eval_count();
    let mut x = guess;
    for iter in 0..=opts.max_iters {
        let (energy, g) = surface.energy_grad(x)?;
        let hess = fd_hessian(surface, x, opts.fd_step)?;
        if g.norm() < opts.tol {
            let eig = SymmetricEigen::new(hess).eigenvalues;
            let negative = eig.iter().filter(|v| **v < 0.0).count();
            if negative != 1 {
                return Err(PotentialError::NotFirstOrderSaddle { point: x, negative });
            }
            let mut eigenvalues = [eig[0], eig[1]];
            eigenvalues.sort_by(f64::total_cmp);
            return Ok(Saddle {
                point: x,
                energy,
                iterations: iter,
                evaluations: surface.eval_count() - start_count,
                eigenvalues,
            });
        }
        let step = hess
            .lu()
            .solve(&(-g))
            .filter(|s| s.x.is_finite() && s.y.is_finite())
            .ok_or(PotentialError::SingularHessian { point: x })?;
        x += step;
        if (x - guess).norm() > opts.trust_radius {
            return Err(PotentialError::Diverged {
                last: x,
                radius: opts.trust_radius,
            });
        }
    }
    let (_, g) = surface.energy_grad(x)?;
    Err(PotentialError::NoConvergence {
        last: x,
        grad_norm: g.norm(),
        iterations: opts.max_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_grad(p: &Potential2D, x: Vec2, h: f64) -> Vec2 {
        let mut g = Vec2::zeros();
        for i in 0..2 {
            let mut e = Vec2::zeros();
            e[i] = h;
            let up = p.evaluate(x + e).unwrap().0;
            let dn = p.evaluate(x - e).unwrap().0;
            g[i] = (up - dn) / (2.0 * h);
        }
        g
    }

    fn assert_grad_matches(p: &Potential2D, lo: Vec2, hi: Vec2, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let x = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            let (_, g) = p.evaluate(x).unwrap();
            let fd = fd_grad(p, x, 1e-5);
            let scale = g.norm().max(fd.norm());
            // Central differences lose ~1e-10 absolute to rounding; compare
            // relative error at points where the gradient is not tiny.
            if scale < 1e-3 {
                assert!((g - fd).norm() < 1e-8, "{p} at {x:?}");
                continue;
            }
            let rel = (g - fd).norm() / scale;
            assert!(rel < 1e-6, "{p} at {x:?}: rel err {rel:e}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert_grad_matches(
            &Potential2D::leps(),
            Vec2::new(0.5, 0.5),
            Vec2::new(4.0, 4.0),
            1,
        );
        assert_grad_matches(
            &Potential2D::mueller_brown(),
            Vec2::new(-1.5, -0.5),
            Vec2::new(1.0, 2.0),
            2,
        );
        assert_grad_matches(
            &Potential2D::sine(),
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, 3.0),
            3,
        );
        assert_grad_matches(
            &Potential2D::wells(WellsParams::default()),
            Vec2::new(-0.5, -0.5),
            Vec2::new(1.0, 1.5),
            4,
        );
    }

    #[test]
    fn counter_increments_once_per_call() {
        let p = Potential2D::sine();
        assert_eq!(p.eval_count(), 0);
        p.energy_grad(Vec2::new(0.1, 0.2)).unwrap();
        assert_eq!(p.eval_count(), 1);
        p.evaluate(Vec2::new(0.1, 0.2)).unwrap();
        assert_eq!(p.eval_count(), 1);
        let _ = p.energy_grad(Vec2::new(f64::NAN, 0.0));
        assert_eq!(p.eval_count(), 1);
    }

    #[test]
    fn counter_is_thread_safe() {
        let p = Potential2D::mueller_brown();
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for i in 0..250 {
                        p.energy_grad(Vec2::new(0.001 * i as f64, 0.5)).unwrap();
                    }
                });
            }
        });
        assert_eq!(p.eval_count(), 1000);
    }

    #[test]
    fn leps_coulomb_at_equilibrium() {
        let params = LepsParams::default();
        let (q, _) = params.coulomb(params.r0, 4.746);
        assert_relative_eq!(q, 1.1865, epsilon = 1e-12);
    }

    #[test]
    fn leps_rejects_bad_input() {
        let p = Potential2D::leps();
        assert!(matches!(
            p.energy_grad(Vec2::new(-0.1, 1.0)),
            Err(PotentialError::NonPositiveDistance { .. })
        ));
        assert!(matches!(
            p.energy_grad(Vec2::new(0.0, 1.0)),
            Err(PotentialError::NonPositiveDistance { .. })
        ));
        assert!(matches!(
            p.energy_grad(Vec2::new(f64::INFINITY, 1.0)),
            Err(PotentialError::NonFinite { .. })
        ));
    }

    #[test]
    fn sine_minima_and_period() {
        let p = Potential2D::sine();
        for n in 0..4 {
            let (e, g) = p.evaluate(sine_minimum(n)).unwrap();
            assert_eq!(e, 0.0);
            assert!(g.norm() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
            let a = p.evaluate(x).unwrap().0;
            let b = p.evaluate(x + Vec2::new(0.0, 2.0)).unwrap().0;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_at_lower_minimum_is_zero() {
        let (e, _) = Potential2D::sine().evaluate(Vec2::new(0.0, 0.5)).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn mueller_brown_matches_direct_formula() {
        // independent evaluation straight from the four-term table
        let a = [-1.0, -1.0, -6.5, 0.7];
        let b = [0.0, 0.0, 11.0, 0.6];
        let c = [-10.0, -10.0, -6.5, 0.7];
        let x0 = [1.0, 0.0, -0.5, -1.0];
        let y0 = [0.0, 0.5, 1.5, 1.0];
        let amp = [-200.0, -100.0, -170.0, 15.0];
        let (x, y) = (-0.5582f64, 1.4417f64);
        let direct: f64 = (0..4)
            .map(|i| {
                amp[i]
                    * (a[i] * (x - x0[i]).powi(2)
                        + b[i] * (x - x0[i]) * (y - y0[i])
                        + c[i] * (y - y0[i]).powi(2))
                    .exp()
            })
            .sum();
        let p = Potential2D::mueller_brown();
        let (e, g) = p.evaluate(Vec2::new(x, y)).unwrap();
        assert_relative_eq!(e, direct, max_relative = 1e-14);
        // Curvature is in the hundreds, so four-digit rounding alone leaves
        // |g| ~ 0.14 at the quoted point. The true minimum is within 1e-4.
        assert!(g.norm() < 0.2, "gradient {}", g.norm());
        let m = find_minimum(&p, Vec2::new(x, y), MinimizeOptions::default()).unwrap();
        assert!((m - Vec2::new(x, y)).norm() < 1e-4);
        assert!(p.evaluate(m).unwrap().1.norm() < 1e-2);
    }

    #[test]
    fn wells_monotone_in_peak_height() {
        let mut params = WellsParams::default();
        let center = Vec2::new(params.mu_px, params.mu_py);
        let mut last = f64::INFINITY;
        for c in [1.0, 0.8, 0.5, 0.2, 0.0] {
            params.c_p = c;
            let e = Potential2D::wells(params).evaluate(center).unwrap().0;
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn normal_density_is_normalized() {
        let (n, g) = normal_density(Vec2::new(1.0, 2.0), Vec2::new(1.0, 2.0), 0.5);
        assert_relative_eq!(n, 1.0 / (2.0 * PI * 0.25), max_relative = 1e-15);
        assert_eq!(g, Vec2::zeros());
    }

    #[test]
    fn minimize_wells_symmetric_center() {
        let p = Potential2D::wells(WellsParams {
            c_p: 0.0,
            ..WellsParams::default()
        });
        let m = find_minimum(&p, Vec2::new(0.05, 0.05), MinimizeOptions::default()).unwrap();
        // the second well pulls the minimum slightly toward (0, 1)
        assert!(m.x.abs() < 1e-6, "{m:?}");
        let (_, g) = p.evaluate(m).unwrap();
        assert!(g.norm() < 1e-8);
        assert!(m.y > 0.0 && m.y < 0.1);
    }

    #[test]
    fn minimize_mueller_brown() {
        let p = Potential2D::mueller_brown();
        let m = find_minimum(&p, Vec2::new(-0.5, 1.4), MinimizeOptions::default()).unwrap();
        assert!((m - Vec2::new(-0.5582, 1.4417)).norm() < 1e-3, "{m:?}");
        let m = find_minimum(&p, Vec2::new(0.6, 0.05), MinimizeOptions::default()).unwrap();
        assert!((m - Vec2::new(0.6235, 0.0280)).norm() < 1e-3, "{m:?}");
    }

    #[test]
    fn minimize_is_deterministic() {
        let p = Potential2D::mueller_brown();
        let a = find_minimum(&p, Vec2::new(-0.5, 1.4), MinimizeOptions::default()).unwrap();
        let b = find_minimum(&p, Vec2::new(-0.5, 1.4), MinimizeOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn leps_entrance_channel_has_no_finite_minimum() {
        // r_ab relaxes onto the bond length while r_bc slides out along the
        // asymptotic channel, so the stated endpoint (0.75, 4.0) is not a
        // stationary point.
        let p = Potential2D::leps();
        let opts = MinimizeOptions {
            tol: 1e-8,
            max_iters: 10_000,
        };
        let last = match find_minimum(&p, Vec2::new(0.8, 3.9), opts) {
            Ok(m) => m,
            Err(PotentialError::NoConvergence { last, .. }) => last,
            Err(e) => panic!("{e}"),
        };
        assert!((last.x - 0.742).abs() < 1e-2, "{last:?}");
        assert!(last.y > 4.0, "{last:?}");
        let (e_stated, g_stated) = p.evaluate(Vec2::new(0.75, 4.0)).unwrap();
        assert!(g_stated.norm() > 0.1);
        assert!(p.evaluate(last).unwrap().0 < e_stated);
    }

    #[test]
    fn minimizer_reports_iteration_cap() {
        let p = Potential2D::mueller_brown();
        let opts = MinimizeOptions {
            tol: 1e-8,
            max_iters: 2,
        };
        match find_minimum(&p, Vec2::new(-0.3, 1.2), opts) {
            Err(PotentialError::NoConvergence { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refine_mueller_brown_saddle() {
        let p = Potential2D::mueller_brown();
        let s = refine_saddle(&p, Vec2::new(-0.8, 0.6), SaddleOptions::default()).unwrap();
        assert!((s.point - Vec2::new(-0.822, 0.6243)).norm() < 1e-3);
        assert_relative_eq!(s.energy, -40.66484, epsilon = 1e-4);
        assert!(s.eigenvalues[0] < 0.0 && s.eigenvalues[1] > 0.0);
        let (_, g) = p.evaluate(s.point).unwrap();
        assert!(g.norm() < 1e-10);
        assert!(s.evaluations >= 5 * s.iterations as u64);
    }

    #[test]
    fn refine_leps_barrier() {
        let p = Potential2D::leps();
        let s = refine_saddle(&p, Vec2::new(1.2, 0.9), SaddleOptions::default()).unwrap();
        let e_a = p.evaluate(Vec2::new(0.75, 4.0)).unwrap().0;
        assert!(
            (s.energy - e_a - 1.34).abs() < 0.01,
            "barrier {}",
            s.energy - e_a
        );
    }

    #[test]
    fn refine_sine_curved_saddle() {
        let p = Potential2D::sine();
        let s = refine_saddle(&p, Vec2::new(-0.45, 0.05), SaddleOptions::default()).unwrap();
        assert!((s.energy - 0.39).abs() < 0.02, "{}", s.energy);
        let s = refine_saddle(&p, Vec2::new(0.02, 0.0), SaddleOptions::default()).unwrap();
        assert!((s.energy - 0.566).abs() < 0.02, "{}", s.energy);
    }

    #[test]
    fn refine_rejects_minimum() {
        let p = Potential2D::mueller_brown();
        let err = refine_saddle(&p, Vec2::new(-0.55, 1.44), SaddleOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            PotentialError::NotFirstOrderSaddle { negative: 0, .. }
        ));
    }

    #[test]
    fn refine_respects_trust_radius() {
        let p = Potential2D::mueller_brown();
        let opts = SaddleOptions {
            trust_radius: 1e-4,
            ..SaddleOptions::default()
        };
        let err = refine_saddle(&p, Vec2::new(-0.7, 0.7), opts).unwrap_err();
        assert!(matches!(err, PotentialError::Diverged { .. }));
    }

    #[test]
    fn names_and_overrides() {
        let p = Potential2D::from_name("wells", &[("wells.mu_px".into(), "0.4".into())]).unwrap();
        match p.kind() {
            PotentialKind::Wells(w) => assert_eq!(w.mu_px, 0.4),
            k => panic!("{k:?}"),
        }
        assert!(Potential2D::from_name("nope", &[]).is_err());
        assert!(Potential2D::from_name("mb", &[("mb.x".into(), "1".into())]).is_err());
        assert!(Potential2D::from_name("leps", &[("wells.c_p".into(), "1".into())]).is_err());
        assert!(Potential2D::from_name("leps", &[("leps.a".into(), "abc".into())]).is_err());
        assert!(matches!(
            Potential2D::from_name("mueller-brown", &[]).unwrap().kind(),
            PotentialKind::MuellerBrown(_)
        ));
    }
}
