//! Climbing-image nudged elastic band relaxed with FIRE.

use thiserror::Error;

use crate::loss::argmax_first;
use crate::potential::{PotentialError, Surface};
use crate::trainer::{LogRow, RunLog, SnapshotRow};
use crate::{max_separation_pct, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NebError {
    #[error("a chain needs at least 3 images, got {0}")]
    TooFewImages(usize),
    #[error("images {0} and {1} coincide")]
    CoincidentImages(usize, usize),
    #[error("non-finite force on image {0}")]
    NonFiniteForce(usize),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FireParams {
    pub dt: f64,
    pub dt_max: f64,
    pub n_min: usize,
    pub f_inc: f64,
    pub f_dec: f64,
    pub alpha_start: f64,
    pub f_alpha: f64,
    /// Cap on the norm of one whole-chain displacement.
    pub max_step: f64,
}

impl Default for FireParams {
    fn default() -> Self {
        FireParams {
            dt: 0.1,
            dt_max: 1.0,
            n_min: 5,
            f_inc: 1.1,
            f_dec: 0.5,
            alpha_start: 0.1,
            f_alpha: 0.99,
            max_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NebConfig {
    pub n_images: usize,
    pub spring_k: f64,
    pub climbing: bool,
    pub f_max_tol: f64,
    pub max_iters: usize,
    pub fire: FireParams,
}

impl Default for NebConfig {
    fn default() -> Self {
        NebConfig {
            n_images: 17,
            spring_k: 0.1,
            climbing: true,
            f_max_tol: 1e-3,
            max_iters: 500,
            fire: FireParams::default(),
        }
    }
}

/// A discrete path with fixed end images.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub images: Vec<Vec2>,
    /// Energies from the latest force evaluation (endpoints from construction).
    pub energies: Vec<f64>,
    pub spring_k: f64,
    pub climbing: bool,
}

impl Chain {
    /// Takes ownership of the images and evaluates the two endpoints.
    pub fn new<S: Surface + ?Sized>(
        images: Vec<Vec2>,
        surface: &S,
        spring_k: f64,
        climbing: bool,
    ) -> Result<Self, NebError> {
        let n = images.len();
        if n < 3 {
            return Err(NebError::TooFewImages(n));
        }
        let mut energies = vec![f64::NAN; n];
        energies[0] = surface.energy_grad(images[0])?.0;
        energies[n - 1] = surface.energy_grad(images[n - 1])?.0;
        Ok(Chain {
            images,
            energies,
            spring_k,
            climbing,
        })
    }

    /// Straight-line chain of `n` images from `a` to `b`.
    pub fn linear<S: Surface + ?Sized>(
        a: Vec2,
        b: Vec2,
        n: usize,
        surface: &S,
        spring_k: f64,
        climbing: bool,
    ) -> Result<Self, NebError> {
        if n < 3 {
            return Err(NebError::TooFewImages(n));
        }
        let images = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (1.0 - t) * a + t * b
            })
            .collect();
        Chain::new(images, surface, spring_k, climbing)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn interior(&self) -> usize {
        self.images.len() - 2
    }

    /// Index of the highest interior image.
    pub fn highest_interior(&self) -> usize {
        1 + argmax_first(&self.energies[1..self.len() - 1])
    }

    pub fn max_energy(&self) -> f64 {
        self.energies
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Normalized arc index `i / (n - 1)` for each image.
    pub fn t_values(&self) -> Vec<f64> {
        crate::sampling::equidistant(self.len())
    }
}

/// Energy-weighted improved tangent at interior image `i`.
pub fn improved_tangent(images: &[Vec2], energies: &[f64], i: usize) -> Result<Vec2, NebError> {
    let tp = images[i + 1] - images[i];
    let tm = images[i] - images[i - 1];
    if tp.norm() < 1e-12 {
        return Err(NebError::CoincidentImages(i, i + 1));
    }
    if tm.norm() < 1e-12 {
        return Err(NebError::CoincidentImages(i - 1, i));
    }
    let (ep, e0, em) = (energies[i + 1], energies[i], energies[i - 1]);
    let tau = if ep > e0 && e0 > em {
        tp
    } else if ep < e0 && e0 < em {
        tm
    } else {
        let dmax = (ep - e0).abs().max((em - e0).abs());
        let dmin = (ep - e0).abs().min((em - e0).abs());
        if ep > em {
            tp * dmax + tm * dmin
        } else {
            tp * dmin + tm * dmax
        }
    };
    let n = tau.norm();
    if n > 0.0 && n.is_finite() {
        return Ok(tau / n);
    }
    // equal energies all round: bisect the two segments
    let bis = tp / tp.norm() + tm / tm.norm();
    let nb = bis.norm();
    Ok(if nb > 1e-12 { bis / nb } else { tp / tp.norm() })
}

/// Per-image forces from energies and gradients already known for every image.
///
/// Returns the forces (zero at the endpoints) and the climbing image, if any.
pub fn forces_from(
    images: &[Vec2],
    energies: &[f64],
    grads: &[Vec2],
    spring_k: f64,
    climbing: bool,
) -> Result<(Vec<Vec2>, Option<usize>), NebError> {
    let n = images.len();
    if n < 3 {
        return Err(NebError::TooFewImages(n));
    }
    let climber = climbing.then(|| 1 + argmax_first(&energies[1..n - 1]));
    let mut forces = vec![Vec2::zeros(); n];
    for i in 1..n - 1 {
        let tau = improved_tangent(images, energies, i)?;
        let g = grads[i];
        let g_par = tau * g.dot(&tau);
        forces[i] = if Some(i) == climber {
            -g + 2.0 * g_par
        } else {
            let stretch = (images[i + 1] - images[i]).norm() - (images[i] - images[i - 1]).norm();
            -(g - g_par) + tau * (spring_k * stretch)
        };
        if !forces[i].x.is_finite() || !forces[i].y.is_finite() {
            return Err(NebError::NonFiniteForce(i));
        }
    }
    Ok((forces, climber))
}

/// Evaluate interior images and return their NEB forces.
pub fn neb_forces<S: Surface + ?Sized>(
    chain: &mut Chain,
    surface: &S,
) -> Result<(Vec<Vec2>, Option<usize>), NebError> {
    let n = chain.len();
    let mut grads = vec![Vec2::zeros(); n];
    for i in 1..n - 1 {
        let (e, g) = surface.energy_grad(chain.images[i])?;
        chain.energies[i] = e;
        grads[i] = g;
    }
    forces_from(
        &chain.images,
        &chain.energies,
        &grads,
        chain.spring_k,
        chain.climbing,
    )
}

#[derive(Debug, Clone)]
pub struct NebResult {
    pub chain: Chain,
    pub converged: bool,
    /// Force evaluations performed.
    pub iterations: usize,
    /// Interior-image energy evaluations (`iterations × interior`).
    pub energy_evals: u64,
    /// Evaluations spent on the fixed endpoints when the chain was built.
    pub endpoint_evals: u64,
    pub max_force: f64,
    pub climbing_index: Option<usize>,
    pub log: RunLog,
}

impl NebResult {
    /// Highest image, as a TS estimate.
    pub fn ts(&self) -> (usize, Vec2, f64) {
        let i = self
            .climbing_index
            .unwrap_or_else(|| self.chain.highest_interior());
        (i, self.chain.images[i], self.chain.energies[i])
    }
}

/// Relax `chain` with FIRE until every image force is below `f_max_tol` or
/// `max_iters` force evaluations have been spent. Hitting the cap is reported
/// through `converged`, not as an error.
pub fn fire_relax<S: Surface + ?Sized>(
    mut chain: Chain,
    surface: &S,
    cfg: &NebConfig,
    snapshot_interval: usize,
) -> Result<NebResult, NebError> {
    let p = cfg.fire;
    let n = chain.len();
    let (a, b) = (chain.images[0], chain.images[n - 1]);
    let mut v = vec![Vec2::zeros(); n];
    let mut dt = p.dt;
    let mut alpha = p.alpha_start;
    let mut n_pos = 0usize;
    let mut first = true;
    let mut log = RunLog::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut max_force = f64::INFINITY;
    let mut climber = None;
    let t_values = chain.t_values();

    for it in 1..=cfg.max_iters.max(1) {
        let (forces, c) = neb_forces(&mut chain, surface)?;
        iterations = it;
        climber = c;
        max_force = forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let interior = &chain.energies[1..n - 1];
        let f_sq: f64 = forces.iter().map(|f| f.norm_squared()).sum();
        log.rows.push(LogRow {
            iter: it,
            loss: interior.iter().sum::<f64>() / interior.len() as f64,
            ts_energy: interior.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            rms_grad: (f_sq / (2 * (n - 2)) as f64).sqrt(),
            energy_evals: (it * (n - 2)) as u64,
            max_sep_pct: max_separation_pct(&chain.images, a, b),
        });
        if snapshot_interval > 0 && (it == 1 || it % snapshot_interval == 0) {
            for (i, x) in chain.images.iter().enumerate() {
                log.snapshots.push(SnapshotRow {
                    iter: it,
                    t: t_values[i],
                    x: x.x,
                    y: x.y,
                    energy: chain.energies[i],
                });
            }
        }
        if max_force < cfg.f_max_tol {
            converged = true;
            break;
        }
        if it == cfg.max_iters {
            break;
        }

        if !first {
            let vf: f64 = v.iter().zip(&forces).map(|(vi, fi)| vi.dot(fi)).sum();
            if vf > 0.0 {
                let v_norm = v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
                let f_norm = f_sq.sqrt();
                for (vi, fi) in v.iter_mut().zip(&forces) {
                    *vi = (1.0 - alpha) * *vi + fi * (alpha * v_norm / f_norm);
                }
                if n_pos > p.n_min {
                    dt = (dt * p.f_inc).min(p.dt_max);
                    alpha *= p.f_alpha;
                }
                n_pos += 1;
            } else {
                v.iter_mut().for_each(|x| *x = Vec2::zeros());
                alpha = p.alpha_start;
                dt *= p.f_dec;
                n_pos = 0;
            }
        }
        first = false;
        for (vi, fi) in v.iter_mut().zip(&forces) {
            *vi += fi * dt;
        }
        let mut dr: Vec<Vec2> = v.iter().map(|x| x * dt).collect();
        let dr_norm = dr.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
        if dr_norm > p.max_step {
            let s = p.max_step / dr_norm;
            dr.iter_mut().for_each(|x| *x *= s);
        }
        for i in 1..n - 1 {
            chain.images[i] += dr[i];
        }
    }

    Ok(NebResult {
        converged,
        iterations,
        energy_evals: (iterations * (n - 2)) as u64,
        endpoint_evals: 2,
        max_force,
        climbing_index: climber,
        chain,
        log,
    })
}

/// Build a straight chain and relax it.
pub fn run_neb<S: Surface + ?Sized>(
    surface: &S,
    a: Vec2,
    b: Vec2,
    cfg: &NebConfig,
    snapshot_interval: usize,
) -> Result<NebResult, NebError> {
    let chain = Chain::linear(a, b, cfg.n_images, surface, cfg.spring_k, cfg.climbing)?;
    fire_relax(chain, surface, cfg, snapshot_interval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{refine_saddle, Potential2D, SaddleOptions};
    use std::sync::atomic::{AtomicU64, Ordering};

    struct Flat(AtomicU64);

    impl Surface for Flat {
        fn energy_grad(&self, _p: Vec2) -> Result<(f64, Vec2), PotentialError> {
            self.0.fetch_add(1, Ordering::Relaxed);
            Ok((0.0, Vec2::zeros()))
        }
        fn eval_count(&self) -> u64 {
            self.0.load(Ordering::Relaxed)
        }
    }

    #[test]
    fn flat_straight_chain_has_no_force() {
        let flat = Flat(AtomicU64::new(0));
        let mut chain =
            Chain::linear(Vec2::zeros(), Vec2::new(1.0, 2.0), 9, &flat, 0.1, true).unwrap();
        let (f, _) = neb_forces(&mut chain, &flat).unwrap();
        assert!(f.iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn straight_chain_forces_are_perpendicular() {
        let pot = Potential2D::mueller_brown();
        let (a, b) = (Vec2::new(-0.5, 1.4), Vec2::new(0.6, 0.0));
        let mut chain = Chain::linear(a, b, 11, &pot, 0.1, true).unwrap();
        let (f, climber) = neb_forces(&mut chain, &pot).unwrap();
        let dir = (b - a).normalize();
        for i in 1..10 {
            if Some(i) != climber {
                assert!(
                    f[i].dot(&dir).abs() < 1e-9 * (1.0 + f[i].norm()),
                    "image {i}"
                );
            }
        }
    }

    #[test]
    fn climber_at_saddle_has_zero_force() {
        let pot = Potential2D::mueller_brown();
        let s = refine_saddle(&pot, Vec2::new(-0.82, 0.62), SaddleOptions::default()).unwrap();
        let images = vec![Vec2::new(-0.9, 1.0), s.point, Vec2::new(-0.6, 0.4)];
        let mut chain = Chain::new(images, &pot, 0.1, true).unwrap();
        chain.energies[0] = -1e3;
        chain.energies[2] = -1e3;
        let (e1, g1) = pot.evaluate(s.point).unwrap();
        let (f, climber) = forces_from(
            &chain.images,
            &[-1e3, e1, -1e3],
            &[Vec2::zeros(), g1, Vec2::zeros()],
            0.1,
            true,
        )
        .unwrap();
        assert_eq!(climber, Some(1));
        assert!(f[1].norm() < 1e-9);
    }

    #[test]
    fn coincident_images_error() {
        let flat = Flat(AtomicU64::new(0));
        let images = vec![Vec2::zeros(), Vec2::zeros(), Vec2::new(1.0, 0.0)];
        let mut chain = Chain::new(images, &flat, 0.1, false).unwrap();
        assert!(matches!(
            neb_forces(&mut chain, &flat),
            Err(NebError::CoincidentImages(0, 1))
        ));
        assert!(Chain::linear(Vec2::zeros(), Vec2::new(1.0, 0.0), 2, &flat, 0.1, false).is_err());
    }

    #[test]
    fn springs_equidistribute_on_flat_surface() {
        let flat = Flat(AtomicU64::new(0));
        let (a, b) = (Vec2::zeros(), Vec2::new(2.0, 0.0));
        let mut images: Vec<Vec2> = (0..9)
            .map(|i| {
                let t = (i as f64 / 8.0).powi(2);
                a + (b - a) * t
            })
            .collect();
        images[0] = a;
        let before = (images[0], images[8]);
        let chain = Chain::new(images, &flat, 0.1, false).unwrap();
        let cfg = NebConfig {
            climbing: false,
            f_max_tol: 1e-9,
            max_iters: 5000,
            ..NebConfig::default()
        };
        let evals0 = flat.eval_count();
        let res = fire_relax(chain, &flat, &cfg, 0).unwrap();
        assert!(res.converged);
        assert_eq!(flat.eval_count() - evals0, res.iterations as u64 * 7);
        assert_eq!(res.energy_evals, res.iterations as u64 * 7);
        let gaps: Vec<f64> = res
            .chain
            .images
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .collect();
        for g in &gaps {
            assert!((g - 0.25).abs() < 1e-6, "{gaps:?}");
        }
        assert_eq!(res.chain.images[0], before.0);
        assert_eq!(res.chain.images[8], before.1);
    }

    #[test]
    fn mueller_brown_climbing_image_finds_saddle() {
        let pot = Potential2D::mueller_brown();
        let a = Vec2::new(-0.558223634, 1.441725842);
        let b = Vec2::new(0.623499404, 0.028037758);
        let res = run_neb(&pot, a, b, &NebConfig::default(), 0).unwrap();
        let (i, x, e) = res.ts();
        let s = refine_saddle(&pot, x, SaddleOptions::default()).unwrap();
        // The climber settles long before the stiff image next to A stops
        // oscillating, so the band as a whole hits the iteration cap.
        assert_eq!(res.iterations, 500);
        assert!((e - s.energy).abs() < 1e-3, "{e} vs {}", s.energy);
        assert!((s.energy + 40.66484).abs() < 1e-4);
        assert_eq!(res.climbing_index, Some(i));
        assert_eq!(res.energy_evals, res.iterations as u64 * 15);
        assert_eq!(res.chain.images[0], a);
        assert_eq!(res.chain.images[16], b);
    }

    #[test]
    fn cap_reports_non_convergence() {
        let pot = Potential2D::mueller_brown();
        let cfg = NebConfig {
            max_iters: 3,
            ..NebConfig::default()
        };
        let res = run_neb(
            &pot,
            Vec2::new(-0.558, 1.442),
            Vec2::new(0.623, 0.028),
            &cfg,
            1,
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
        assert_eq!(res.energy_evals, 45);
        assert_eq!(res.log.rows.len(), 3);
        assert_eq!(res.log.snapshots.len(), 3 * 17);
    }
}
