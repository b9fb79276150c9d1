//! Path generalization on the Wells family.
//!
//! A dataset of systems is drawn from a 7⁴ grid over `φ = (μ_px, μ_py, σ_p,
//! c_p)`. Each system gets relaxed endpoints and a converged climbing-NEB
//! reference path. One conditioned network, fed `[t, A, B, φ]`, is then
//! regressed onto the reference paths and compared against a straight-line
//! predictor and an affine nearest-neighbor predictor.

use nalgebra::Matrix2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{AdError, Adam, Tape, Var};
use crate::csvfmt::{num, table};
use crate::neb::{run_neb, NebConfig, NebError};
use crate::pathmodel::{BasePath, InitScheme, Mlp, MlpConfig, PathError, PathModel};
use crate::potential::{
    find_minimum, MinimizeOptions, Potential2D, PotentialError, Surface, WellsParams,
};
use crate::sampling::equidistant;
use crate::Vec2;

/// Values per grid dimension.
pub const GRID_SIZE: usize = 7;
/// Number of grid systems, `7⁴`.
pub const GRID_SYSTEMS: usize = GRID_SIZE * GRID_SIZE * GRID_SIZE * GRID_SIZE;
/// Closed ranges of `μ_px, μ_py, σ_p, c_p`.
pub const PHI_RANGES: [(f64, f64); 4] = [(0.15, 0.85), (-0.15, 0.15), (0.05, 0.25), (0.2, 1.0)];
/// Reference paths and predictions are compared on this many knots.
pub const PATH_POINTS: usize = 17;

const WELL_A: Vec2 = Vec2::new(0.0, 0.0);
const WELL_B: Vec2 = Vec2::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneralizeError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Neb(#[from] NebError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("requested {requested} systems but the grid has {available}")]
    TooManySystems { requested: usize, available: usize },
    #[error("ran out of grid systems after {accepted} accepted; failed: {failed:?}")]
    Exhausted {
        accepted: usize,
        failed: Vec<[f64; 4]>,
    },
    #[error("the training set is empty")]
    EmptyTrainSet,
    #[error("zero-length endpoint displacement")]
    ZeroDisplacement,
    #[error("non-finite path loss {loss} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("path has {got} points, expected {expected}")]
    PathLength { expected: usize, got: usize },
    #[error("bad dataset file: {0}")]
    Parse(String),
}

/// The seven equidistant values of grid dimension `dim`.
pub fn grid_values(dim: usize) -> [f64; GRID_SIZE] {
    let (lo, hi) = PHI_RANGES[dim];
    let last = (GRID_SIZE - 1) as f64;
    std::array::from_fn(|i| ((last - i as f64) * lo + i as f64 * hi) / last)
}

/// `φ` for a flat grid index, `μ_px` the slowest-varying digit.
pub fn grid_phi(index: usize) -> [f64; 4] {
    assert!(index < GRID_SYSTEMS, "grid index {index} out of range");
    let mut phi = [0.0; 4];
    let mut r = index;
    for dim in (0..4).rev() {
        phi[dim] = grid_values(dim)[r % GRID_SIZE];
        r /= GRID_SIZE;
    }
    phi
}

/// One Wells system with its reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRecord {
    pub index: usize,
    pub phi: [f64; 4],
    pub a: Vec2,
    pub b: Vec2,
    /// `PATH_POINTS` images from A to B.
    pub path: Vec<Vec2>,
    pub ts_energy: f64,
    pub neb_iterations: usize,
}

impl SystemRecord {
    pub fn potential(&self) -> Potential2D {
        Potential2D::wells(WellsParams::from_array(self.phi))
    }

    /// Network conditioning `[A, B, φ]`.
    pub fn condition(&self) -> Vec<f64> {
        condition(self.a, self.b, self.phi)
    }
}

pub fn condition(a: Vec2, b: Vec2, phi: [f64; 4]) -> Vec<f64> {
    vec![a.x, a.y, b.x, b.y, phi[0], phi[1], phi[2], phi[3]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub index: usize,
    pub phi: [f64; 4],
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub train: Vec<SystemRecord>,
    pub test: Vec<SystemRecord>,
    /// Candidates skipped during construction, in the order they were tried.
    pub rejected: Vec<Rejection>,
}

impl Dataset {
    /// True when no grid index appears in both splits.
    pub fn is_disjoint(&self) -> bool {
        let train: std::collections::HashSet<usize> = self.train.iter().map(|s| s.index).collect();
        self.test.iter().all(|s| !train.contains(&s.index))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub neb: NebConfig,
    pub minimize: MinimizeOptions,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            neb: NebConfig {
                n_images: PATH_POINTS,
                ..NebConfig::default()
            },
            minimize: MinimizeOptions::default(),
        }
    }
}

/// Why a candidate system was not accepted.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    Accepted(SystemRecord),
    Rejected(Rejection),
}

/// Relax both endpoints and run climbing NEB for grid system `index`.
/// Numerical failures and non-converged bands reject the candidate.
pub fn build_system(index: usize, cfg: &DatasetConfig) -> Candidate {
    let phi = grid_phi(index);
    let reject = |reason: String| Candidate::Rejected(Rejection { index, phi, reason });
    let pot = Potential2D::wells(WellsParams::from_array(phi));
    let (a, b) = match (
        find_minimum(&pot, WELL_A, cfg.minimize),
        find_minimum(&pot, WELL_B, cfg.minimize),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return reject(e.to_string()),
    };
    if (b - a).norm() < 1e-6 {
        return reject("both wells relax to the same minimum".into());
    }
    match run_neb(&pot, a, b, &cfg.neb, 0) {
        Ok(res) if res.converged => {
            let ts_energy = res
                .chain
                .energies
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            Candidate::Accepted(SystemRecord {
                index,
                phi,
                a,
                b,
                path: res.chain.images,
                ts_energy,
                neb_iterations: res.iterations,
            })
        }
        Ok(res) => reject(format!(
            "NEB not converged after {} iterations (max force {})",
            res.iterations, res.max_force
        )),
        Err(e) => reject(e.to_string()),
    }
}

pub fn build_dataset(seed: u64, n_train: usize, n_test: usize) -> Result<Dataset, GeneralizeError> {
    build_dataset_with(seed, n_train, n_test, &DatasetConfig::default())
}

/// Shuffle the grid with `seed` and walk it in order, accepting systems
/// until both splits are full. Candidates are built in parallel batches and
/// accepted in shuffled order, so the result does not depend on threading.
pub fn build_dataset_with(
    seed: u64,
    n_train: usize,
    n_test: usize,
    cfg: &DatasetConfig,
) -> Result<Dataset, GeneralizeError> {
    let wanted = n_train + n_test;
    if wanted > GRID_SYSTEMS {
        return Err(GeneralizeError::TooManySystems {
            requested: wanted,
            available: GRID_SYSTEMS,
        });
    }
    let mut order: Vec<usize> = (0..GRID_SYSTEMS).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut accepted = Vec::with_capacity(wanted);
    let mut rejected = Vec::new();
    let mut next = 0;
    while accepted.len() < wanted {
        if next == order.len() {
            return Err(GeneralizeError::Exhausted {
                accepted: accepted.len(),
                failed: rejected.iter().map(|r: &Rejection| r.phi).collect(),
            });
        }
        let take = (wanted - accepted.len()).min(order.len() - next);
        let batch: Vec<Candidate> = order[next..next + take]
            .par_iter()
            .map(|&i| build_system(i, cfg))
            .collect();
        next += take;
        for c in batch {
            match c {
                Candidate::Accepted(s) => accepted.push(s),
                Candidate::Rejected(r) => rejected.push(r),
            }
        }
    }
    let test = accepted.split_off(n_train);
    Ok(Dataset {
        seed,
        train: accepted,
        test,
        rejected,
    })
}

/// Energy of every point of `path` on the system's surface.
pub fn path_energies(phi: [f64; 4], path: &[Vec2]) -> Result<Vec<f64>, GeneralizeError> {
    let pot = Potential2D::wells(WellsParams::from_array(phi));
    path.iter().map(|&p| Ok(pot.energy(p)?)).collect()
}

/// Highest energy over the points of `path`.
pub fn path_ts_energy(phi: [f64; 4], path: &[Vec2]) -> Result<f64, GeneralizeError> {
    Ok(path_energies(phi, path)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Straight line from `a` to `b` on `n` knots.
pub fn linear_path(a: Vec2, b: Vec2, n: usize) -> Vec<Vec2> {
    equidistant(n)
        .into_iter()
        .map(|t| a + (b - a) * t)
        .collect()
}

/// Rotation taking the direction of `from` onto the direction of `to`.
pub fn rotation_between(from: Vec2, to: Vec2) -> Result<Matrix2<f64>, GeneralizeError> {
    if from.norm() == 0.0 || to.norm() == 0.0 {
        return Err(GeneralizeError::ZeroDisplacement);
    }
    let angle = to.y.atan2(to.x) - from.y.atan2(from.x);
    let (s, c) = (angle.sin(), angle.cos());
    Ok(Matrix2::new(c, -s, s, c))
}

/// Index of the training system whose `φ` is closest to `phi`, ties to the
/// first.
pub fn nearest_system(train: &[SystemRecord], phi: [f64; 4]) -> Option<usize> {
    let dist =
        |s: &SystemRecord| -> f64 { s.phi.iter().zip(&phi).map(|(p, q)| (p - q) * (p - q)).sum() };
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in train.iter().enumerate() {
        let d = dist(s);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Map the path of `reference` onto the endpoints `a`, `b` by a rotation and
/// uniform scaling about its start.
pub fn transform_path(
    reference: &SystemRecord,
    a: Vec2,
    b: Vec2,
) -> Result<Vec<Vec2>, GeneralizeError> {
    let (ra, rb) = (reference.a, reference.b);
    let rot = rotation_between(rb - ra, b - a)?;
    let scale = (b - a).norm() / (rb - ra).norm();
    let n = reference.path.len();
    let mut out: Vec<Vec2> = reference
        .path
        .iter()
        .map(|&x| a + rot * (x - ra) * scale)
        .collect();
    // the end image lands on B only up to rounding; pin both ends exactly
    out[0] = a;
    out[n - 1] = b;
    Ok(out)
}

/// Nearest-neighbor prediction for `target` from the training systems.
pub fn nn_baseline(
    train: &[SystemRecord],
    target: &SystemRecord,
) -> Result<Vec<Vec2>, GeneralizeError> {
    let n = nearest_system(train, target.phi).ok_or(GeneralizeError::EmptyTrainSet)?;
    transform_path(&train[n], target.a, target.b)
}

/// Mean over `systems` of `|max U(predicted path) - reference TS energy|`.
pub fn evaluate<F>(systems: &[SystemRecord], predict: F) -> Result<f64, GeneralizeError>
where
    F: Fn(&SystemRecord) -> Result<Vec<Vec2>, GeneralizeError> + Sync,
{
    let errors: Vec<f64> = systems
        .par_iter()
        .map(|s| {
            let path = predict(s)?;
            Ok((path_ts_energy(s.phi, &path)? - s.ts_energy).abs())
        })
        .collect::<Result<_, GeneralizeError>>()?;
    Ok(errors.iter().sum::<f64>() / errors.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub width: usize,
    pub depth: usize,
    pub init: InitScheme,
    pub zero_output: bool,
    pub seed: u64,
}

impl Default for GeneralizerConfig {
    fn default() -> Self {
        GeneralizerConfig {
            epochs: 200,
            lr: 5e-4,
            width: 256,
            depth: 3,
            init: InitScheme::Glorot,
            zero_output: true,
            seed: 0,
        }
    }
}

impl GeneralizerConfig {
    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: 9,
            width: self.width,
            depth: self.depth,
            output_dim: 2,
            init: self.init,
            zero_output: self.zero_output,
            seed: self.seed,
        }
    }
}

/// A trained conditioned network.
#[derive(Debug, Clone, PartialEq)]
pub struct Generalizer {
    pub mlp: Mlp,
}

impl Generalizer {
    pub fn model(&self, a: Vec2, b: Vec2, phi: [f64; 4]) -> Result<PathModel, GeneralizeError> {
        Ok(PathModel::conditioned(
            BasePath::linear(a, b),
            self.mlp.clone(),
            condition(a, b, phi),
        )?)
    }

    /// Predicted path on `n` knots.
    pub fn predict(
        &self,
        a: Vec2,
        b: Vec2,
        phi: [f64; 4],
        n: usize,
    ) -> Result<Vec<Vec2>, GeneralizeError> {
        Ok(self.model(a, b, phi)?.discretize(n))
    }
}

/// `mean_i |x(t_i) - x^k_i|²` on the tape, with `t_i = i/(n-1)`.
fn record_path_loss(
    tape: &mut Tape,
    theta: crate::autodiff::VarRange,
    model: &PathModel,
    reference: &[Vec2],
) -> Result<Var, GeneralizeError> {
    let ts = equidistant(reference.len());
    let mut terms = Vec::with_capacity(2 * ts.len());
    for (&t, r) in ts.iter().zip(reference) {
        let x = model.position_tape(tape, theta, t)?;
        for k in 0..2 {
            let d = tape.affine(x[k], 1.0, -r[k]);
            terms.push(tape.powi(d, 2));
        }
    }
    let sum = tape.sum(&terms);
    Ok(tape.scale(sum, 1.0 / ts.len() as f64))
}

/// Path regression loss of `mlp` on one system.
pub fn path_loss(mlp: &Mlp, system: &SystemRecord) -> Result<f64, GeneralizeError> {
    let model = Generalizer { mlp: mlp.clone() }.model(system.a, system.b, system.phi)?;
    let ts = equidistant(system.path.len());
    let mut total = 0.0;
    for (&t, r) in ts.iter().zip(&system.path) {
        total += (model.position(t)? - r).norm_squared();
    }
    Ok(total / ts.len() as f64)
}

/// Loss and parameter gradient on one system.
pub fn path_loss_grad(
    mlp: &Mlp,
    system: &SystemRecord,
) -> Result<(f64, Vec<f64>), GeneralizeError> {
    let model = Generalizer { mlp: mlp.clone() }.model(system.a, system.b, system.phi)?;
    let mut tape = Tape::new();
    let theta = tape.leaves(&mlp.params);
    let loss = record_path_loss(&mut tape, theta, &model, &system.path)?;
    Ok((tape.value(loss), tape.gradient(loss, theta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizerOutcome {
    pub model: Generalizer,
    /// Mean training loss per epoch, accumulated during the epoch.
    pub train_loss: Vec<f64>,
    /// Mean test TS error; entry 0 is before training, entry `e` after epoch `e`.
    pub test_errors: Vec<f64>,
}

/// Regress a conditioned network onto the training paths. Each epoch visits
/// the training systems in dataset order with one Adam step per system.
pub fn train_generalizer(
    dataset: &Dataset,
    cfg: &GeneralizerConfig,
) -> Result<GeneralizerOutcome, GeneralizeError> {
    if dataset.train.is_empty() {
        return Err(GeneralizeError::EmptyTrainSet);
    }
    let mut mlp = Mlp::new(&cfg.mlp_config());
    let mut adam = Adam::new(mlp.n_params(), cfg.lr);
    let test_error = |mlp: &Mlp| -> Result<f64, GeneralizeError> {
        let g = Generalizer { mlp: mlp.clone() };
        evaluate(&dataset.test, |s| g.predict(s.a, s.b, s.phi, s.path.len()))
    };
    let mut test_errors = vec![test_error(&mlp)?];
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        for system in &dataset.train {
            let (loss, grad) = path_loss_grad(&mlp, system)?;
            if !loss.is_finite() {
                return Err(GeneralizeError::NonFiniteLoss { epoch, loss });
            }
            total += loss;
            adam.step(&mut mlp.params, &grad)?;
        }
        train_loss.push(total / dataset.train.len() as f64);
        test_errors.push(test_error(&mlp)?);
    }
    Ok(GeneralizerOutcome {
        model: Generalizer { mlp },
        train_loss,
        test_errors,
    })
}

pub const ERRORS_HEADER: &str = "epoch,mean_ts_error";
pub const SYSTEMS_HEADER: &str =
    "split,index,mu_px,mu_py,sigma_p,c_p,ax,ay,bx,by,ts_energy,neb_iterations";
pub const PATH_HEADER: &str = "i,t,x,y";

/// Error curve, one row per entry starting at epoch 0.
pub fn errors_csv(errors: &[f64]) -> String {
    let rows: Vec<Vec<String>> = errors
        .iter()
        .enumerate()
        .map(|(e, v)| vec![e.to_string(), num(*v)])
        .collect();
    table(ERRORS_HEADER, &rows)
}

/// One row per system, training systems first.
pub fn systems_csv(dataset: &Dataset) -> String {
    let mut rows = Vec::new();
    for (split, systems) in [("train", &dataset.train), ("test", &dataset.test)] {
        for s in systems {
            let mut r = vec![split.to_string(), s.index.to_string()];
            r.extend(s.phi.iter().map(|v| num(*v)));
            r.extend(
                [s.a.x, s.a.y, s.b.x, s.b.y, s.ts_energy]
                    .iter()
                    .map(|v| num(*v)),
            );
            r.push(s.neb_iterations.to_string());
            rows.push(r);
        }
    }
    table(SYSTEMS_HEADER, &rows)
}

pub fn path_csv(path: &[Vec2]) -> String {
    let ts = equidistant(path.len());
    let rows: Vec<Vec<String>> = path
        .iter()
        .zip(&ts)
        .enumerate()
        .map(|(i, (p, t))| vec![i.to_string(), num(*t), num(p.x), num(p.y)])
        .collect();
    table(PATH_HEADER, &rows)
}

fn data_lines<'a>(
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = &'a str>, GeneralizeError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => Ok(lines.filter(|l| !l.trim().is_empty())),
        other => Err(GeneralizeError::Parse(format!(
            "expected header {header:?}, found {other:?}"
        ))),
    }
}

fn parse_f64(s: &str) -> Result<f64, GeneralizeError> {
    s.trim()
        .parse()
        .map_err(|_| GeneralizeError::Parse(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize, GeneralizeError> {
    s.trim()
        .parse()
        .map_err(|_| GeneralizeError::Parse(format!("not an integer: {s:?}")))
}

pub fn parse_path_csv(text: &str) -> Result<Vec<Vec2>, GeneralizeError> {
    data_lines(text, PATH_HEADER)?
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(GeneralizeError::Parse(format!("bad path row {l:?}")));
            }
            Ok(Vec2::new(parse_f64(f[2])?, parse_f64(f[3])?))
        })
        .collect()
}

/// Rebuild a dataset from `systems_csv` output. `path_of(split, k)` must
/// return the path text of the `k`-th system of that split.
pub fn parse_dataset<F>(
    seed: u64,
    systems: &str,
    mut path_of: F,
) -> Result<Dataset, GeneralizeError>
where
    F: FnMut(&str, usize) -> Result<String, GeneralizeError>,
{
    let mut ds = Dataset {
        seed,
        train: Vec::new(),
        test: Vec::new(),
        rejected: Vec::new(),
    };
    for l in data_lines(systems, SYSTEMS_HEADER)? {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 12 {
            return Err(GeneralizeError::Parse(format!("bad system row {l:?}")));
        }
        let split = f[0].trim();
        let k = match split {
            "train" => ds.train.len(),
            "test" => ds.test.len(),
            other => return Err(GeneralizeError::Parse(format!("unknown split {other:?}"))),
        };
        let path = parse_path_csv(&path_of(split, k)?)?;
        if path.len() < 2 {
            return Err(GeneralizeError::PathLength {
                expected: PATH_POINTS,
                got: path.len(),
            });
        }
        let rec = SystemRecord {
            index: parse_usize(f[1])?,
            phi: [
                parse_f64(f[2])?,
                parse_f64(f[3])?,
                parse_f64(f[4])?,
                parse_f64(f[5])?,
            ],
            a: Vec2::new(parse_f64(f[6])?, parse_f64(f[7])?),
            b: Vec2::new(parse_f64(f[8])?, parse_f64(f[9])?),
            path,
            ts_energy: parse_f64(f[10])?,
            neb_iterations: parse_usize(f[11])?,
        };
        if split == "train" {
            ds.train.push(rec);
        } else {
            ds.test.push(rec);
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{refine_saddle, SaddleOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn small_cfg() -> GeneralizerConfig {
        GeneralizerConfig {
            width: 32,
            depth: 2,
            ..GeneralizerConfig::default()
        }
    }

    fn random_output_cfg(seed: u64) -> GeneralizerConfig {
        GeneralizerConfig {
            init: InitScheme::FanIn,
            zero_output: false,
            seed,
            ..small_cfg()
        }
    }

    #[test]
    fn grid_values_for_mu_px() {
        let v = grid_values(0);
        let want = [0.15, 0.2667, 0.3833, 0.5, 0.6167, 0.7333, 0.85];
        for (a, b) in v.iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-4);
        }
    }

    #[test]
    fn grid_indices_cover_every_combination_once() {
        let set: std::collections::HashSet<[u64; 4]> = (0..GRID_SYSTEMS)
            .map(|i| grid_phi(i).map(f64::to_bits))
            .collect();
        assert_eq!(set.len(), GRID_SYSTEMS);
    }

    #[test]
    fn dataset_is_deterministic_disjoint_and_relaxed() {
        let a = build_dataset(3, 4, 6).unwrap();
        let b = build_dataset(3, 4, 6).unwrap();
        assert_eq!(a, b);
        assert!(a.is_disjoint());
        assert_eq!((a.train.len(), a.test.len()), (4, 6));
        for s in a.train.iter().chain(&a.test) {
            let pot = s.potential();
            assert!(pot.evaluate(s.a).unwrap().1.norm() < 1e-6);
            assert!(pot.evaluate(s.b).unwrap().1.norm() < 1e-6);
            assert_eq!(s.path.len(), PATH_POINTS);
            assert_eq!((s.path[0], s.path[PATH_POINTS - 1]), (s.a, s.b));
            let max = path_energies(s.phi, &s.path)
                .unwrap()
                .into_iter()
                .fold(f64::MIN, f64::max);
            assert_eq!(max, s.ts_energy);
        }
        let c = build_dataset(4, 4, 6).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn oversized_request_is_rejected() {
        assert!(matches!(
            build_dataset(0, 2000, 402),
            Err(GeneralizeError::TooManySystems { .. })
        ));
    }

    #[test]
    fn reference_barrier_matches_dense_refined_path() {
        // c_p = 0.2, σ_p = 0.25, μ_p = (0.5, 0): grid index with digits (3, 3, 6, 0)
        let index = ((3 * 7 + 3) * 7 + 6) * 7;
        for (p, q) in grid_phi(index).iter().zip([0.5, 0.0, 0.25, 0.2]) {
            assert_abs_diff_eq!(*p, q, epsilon = 1e-15);
        }
        let Candidate::Accepted(s) = build_system(index, &DatasetConfig::default()) else {
            panic!("system rejected");
        };
        let pot = s.potential();
        let brute = mountain_pass(&pot, s.a, s.b, 1001);
        assert!(
            (s.ts_energy - brute).abs() < 1e-3,
            "{} vs {}",
            s.ts_energy,
            brute
        );
        let top = crate::loss::argmax_first(&path_energies(s.phi, &s.path).unwrap());
        let saddle = refine_saddle(&pot, s.path[top], SaddleOptions::default()).unwrap();
        assert!((s.ts_energy - saddle.energy).abs() < 1e-3);
    }

    /// Lowest energy at which `a` and `b` become connected on an `n × n`
    /// grid, found by adding cells in energy order to a union-find.
    fn mountain_pass(pot: &Potential2D, a: Vec2, b: Vec2, n: usize) -> f64 {
        let (x0, x1, y0, y1) = (-1.0, 1.5, -1.0, 2.0);
        let at = |i: usize, j: usize| {
            Vec2::new(
                x0 + (x1 - x0) * i as f64 / (n - 1) as f64,
                y0 + (y1 - y0) * j as f64 / (n - 1) as f64,
            )
        };
        let cell = |p: Vec2| {
            let i = ((p.x - x0) / (x1 - x0) * (n - 1) as f64).round() as usize;
            let j = ((p.y - y0) / (y1 - y0) * (n - 1) as f64).round() as usize;
            i * n + j
        };
        let energy: Vec<f64> = (0..n * n)
            .map(|k| pot.evaluate(at(k / n, k % n)).unwrap().0)
            .collect();
        let mut order: Vec<usize> = (0..n * n).collect();
        order.sort_by(|&p, &q| energy[p].total_cmp(&energy[q]));
        let mut parent: Vec<usize> = (0..n * n).collect();
        let mut added = vec![false; n * n];
        fn root(parent: &mut [usize], mut k: usize) -> usize {
            while parent[k] != k {
                parent[k] = parent[parent[k]];
                k = parent[k];
            }
            k
        }
        let (ca, cb) = (cell(a), cell(b));
        for &k in &order {
            added[k] = true;
            let (i, j) = (k / n, k % n);
            let mut nbrs = Vec::with_capacity(4);
            if i > 0 {
                nbrs.push(k - n);
            }
            if i + 1 < n {
                nbrs.push(k + n);
            }
            if j > 0 {
                nbrs.push(k - 1);
            }
            if j + 1 < n {
                nbrs.push(k + 1);
            }
            for m in nbrs {
                if added[m] {
                    let (r1, r2) = (root(&mut parent, k), root(&mut parent, m));
                    parent[r1] = r2;
                }
            }
            if added[ca] && added[cb] && root(&mut parent, ca) == root(&mut parent, cb) {
                return energy[k];
            }
        }
        unreachable!("grid is connected")
    }

    #[test]
    fn rotation_of_x_onto_y() {
        let r = rotation_between(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).unwrap();
        let want = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        assert!((r - want).abs().max() < 1e-15);
        assert!(matches!(
            rotation_between(Vec2::zeros(), Vec2::new(1.0, 0.0)),
            Err(GeneralizeError::ZeroDisplacement)
        ));
    }

    fn record(index: usize, phi: [f64; 4], a: Vec2, b: Vec2, path: Vec<Vec2>) -> SystemRecord {
        let ts_energy = path_ts_energy(phi, &path).unwrap();
        SystemRecord {
            index,
            phi,
            a,
            b,
            path,
            ts_energy,
            neb_iterations: 0,
        }
    }

    fn bent(a: Vec2, b: Vec2, bulge: f64) -> Vec<Vec2> {
        let d = b - a;
        let normal = Vec2::new(-d.y, d.x);
        equidistant(PATH_POINTS)
            .into_iter()
            .map(|t| a + d * t + normal * (bulge * t * (1.0 - t)))
            .collect()
    }

    #[test]
    fn nearest_neighbor_of_a_training_system_is_its_own_path() {
        let train: Vec<SystemRecord> = (0..5)
            .map(|i| {
                let phi = grid_phi(i * 97);
                let (a, b) = (
                    Vec2::new(0.01 * i as f64, 0.0),
                    Vec2::new(0.0, 1.0 + 0.02 * i as f64),
                );
                record(i, phi, a, b, bent(a, b, 0.3 + 0.1 * i as f64))
            })
            .collect();
        for s in &train {
            let p = nn_baseline(&train, s).unwrap();
            assert!(p.iter().zip(&s.path).all(|(x, y)| (x - y).norm() < 1e-15));
        }
        assert!(matches!(
            nn_baseline(&[], &train[0]),
            Err(GeneralizeError::EmptyTrainSet)
        ));
    }

    #[test]
    fn reference_predictor_has_zero_error() {
        let ds = build_dataset(1, 2, 5).unwrap();
        assert_eq!(evaluate(&ds.test, |s| Ok(s.path.clone())).unwrap(), 0.0);
    }

    #[test]
    fn linear_predictor_error_is_the_straight_line_overshoot() {
        // peak centred on the straight segment between the wells
        let phi = [0.15, -0.15, 0.25, 1.0];
        let pot = Potential2D::wells(WellsParams::from_array(phi));
        let a = find_minimum(&pot, WELL_A, MinimizeOptions::default()).unwrap();
        let b = find_minimum(&pot, WELL_B, MinimizeOptions::default()).unwrap();
        let path = bent(a, b, 0.4);
        let s = record(0, phi, a, b, path);
        let line = linear_path(a, b, PATH_POINTS);
        let direct = line
            .iter()
            .map(|&p| {
                Potential2D::wells(WellsParams::from_array(phi))
                    .evaluate(p)
                    .unwrap()
                    .0
            })
            .fold(f64::MIN, f64::max);
        let err = evaluate(std::slice::from_ref(&s), |s| {
            Ok(linear_path(s.a, s.b, PATH_POINTS))
        })
        .unwrap();
        assert_abs_diff_eq!(err, (direct - s.ts_energy).abs(), epsilon = 1e-15);
    }

    #[test]
    fn zero_output_loss_at_start_is_base_path_deviation() {
        let ds = build_dataset(2, 3, 1).unwrap();
        let mlp = Mlp::new(&small_cfg().mlp_config());
        for s in &ds.train {
            let line = linear_path(s.a, s.b, s.path.len());
            let msd = line
                .iter()
                .zip(&s.path)
                .map(|(l, r)| (l - r).norm_squared())
                .sum::<f64>()
                / s.path.len() as f64;
            assert_abs_diff_eq!(path_loss(&mlp, s).unwrap(), msd, epsilon = 1e-15);
            assert_abs_diff_eq!(path_loss_grad(&mlp, s).unwrap().0, msd, epsilon = 1e-15);
        }
    }

    #[test]
    fn path_loss_gradient_matches_finite_difference() {
        let ds = build_dataset(5, 1, 1).unwrap();
        let s = &ds.train[0];
        let mlp = Mlp::new(&random_output_cfg(0).mlp_config());
        let (_, grad) = path_loss_grad(&mlp, s).unwrap();
        let h = 1e-6;
        for i in (0..mlp.n_params()).step_by(37) {
            let mut p = mlp.clone();
            p.params[i] += h;
            let up = path_loss(&p, s).unwrap();
            p.params[i] -= 2.0 * h;
            let down = path_loss(&p, s).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!(
                (grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1e-3),
                "param {i}: {} vs {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn single_system_is_memorized() {
        let full = build_dataset(6, 1, 1).unwrap();
        let out = train_generalizer(&full, &GeneralizerConfig::default()).unwrap();
        let last = path_loss(&out.model.mlp, &full.train[0]).unwrap();
        assert!(last < 1e-4, "final loss {last}");
        assert_eq!(out.test_errors.len(), 201);
        assert_eq!(out.train_loss.len(), 200);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let mut ds = build_dataset(0, 1, 1).unwrap();
        ds.train.clear();
        assert!(matches!(
            train_generalizer(&ds, &small_cfg()),
            Err(GeneralizeError::EmptyTrainSet)
        ));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let ds = build_dataset(8, 2, 3).unwrap();
        let text = systems_csv(&ds);
        assert!(text.starts_with(SYSTEMS_HEADER));
        let back = parse_dataset(8, &text, |split, k| {
            let list = if split == "train" {
                &ds.train
            } else {
                &ds.test
            };
            Ok(path_csv(&list[k].path))
        })
        .unwrap();
        assert_eq!(back.train, ds.train);
        assert_eq!(back.test, ds.test);
        assert_eq!(
            errors_csv(&[0.5, 0.25]),
            "epoch,mean_ts_error\n0,0.5\n1,0.25\n"
        );
    }

    proptest! {
        #[test]
        fn rotations_are_proper(ax in -3.0f64..3.0, ay in -3.0f64..3.0, bx in -3.0f64..3.0, by in -3.0f64..3.0) {
            let (u, v) = (Vec2::new(ax, ay), Vec2::new(bx, by));
            prop_assume!(u.norm() > 1e-3 && v.norm() > 1e-3);
            let r = rotation_between(u, v).unwrap();
            prop_assert!((r.transpose() * r - Matrix2::identity()).abs().max() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
            let mapped = r * u * (v.norm() / u.norm());
            prop_assert!((mapped - v).norm() < 1e-12 * v.norm().max(1.0));
        }

        #[test]
        fn transformed_path_hits_target_endpoints(
            ax in -2.0f64..2.0, ay in -2.0f64..2.0, bx in -2.0f64..2.0, by in -2.0f64..2.0, bulge in -1.0f64..1.0,
        ) {
            let (a, b) = (Vec2::new(ax, ay), Vec2::new(bx, by));
            prop_assume!((b - a).norm() > 1e-3);
            let (ra, rb) = (Vec2::new(0.1, 0.0), Vec2::new(-0.05, 1.1));
            let reference = SystemRecord {
                index: 0,
                phi: grid_phi(0),
                a: ra,
                b: rb,
                path: bent(ra, rb, bulge),
                ts_energy: 0.0,
                neb_iterations: 0,
            };
            let p = transform_path(&reference, a, b).unwrap();
            prop_assert!((p[PATH_POINTS - 1] - b).norm() < 1e-12);
            prop_assert!((p[0] - a).norm() < 1e-12);
            // interior points are rotated and scaled, not pinned
            let unpinned = a + rotation_between(rb - ra, b - a).unwrap() * (rb - ra) * ((b - a).norm() / (rb - ra).norm());
            prop_assert!((unpinned - b).norm() < 1e-12);
        }

        #[test]
        fn conditioned_model_is_pinned_for_any_system(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, bx in -1.0f64..1.0, by in -1.0f64..1.0,
            i in 0usize..GRID_SYSTEMS, seed in 0u64..4,
        ) {
            let mlp = Mlp::new(&random_output_cfg(seed).mlp_config());
            let g = Generalizer { mlp };
            let (a, b) = (Vec2::new(ax, ay), Vec2::new(bx, by));
            let m = g.model(a, b, grid_phi(i)).unwrap();
            prop_assert_eq!(m.position(0.0).unwrap(), a);
            prop_assert_eq!(m.position(1.0).unwrap(), b);
        }
    }
}
