//! Training loop for a path network, TS extraction and hyperparameter sweeps.

use thiserror::Error;

use crate::autodiff::{AdError, Adam, Tape};
use crate::csvfmt::{num, table};
use crate::loss::{argmax_first, evaluate_batch, total_loss, LossConfig, LossError};
use crate::pathmodel::{PathError, PathModel};
use crate::potential::{PotentialError, Surface};
use crate::sampling::{equidistant, SamplerConfig, SamplingError};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("non-finite loss {loss} at iteration {iter}")]
    NonFinite {
        iter: usize,
        loss: f64,
        snapshot: Vec<SnapshotRow>,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub lr: f64,
    pub n_iters: usize,
    pub rms_threshold: f64,
    /// Stop once the gradient RMS falls below `rms_threshold`. Only honored
    /// for uniform sampling; growing runs always use all iterations.
    pub early_stop: bool,
    pub snapshot_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            lr: 1e-3,
            n_iters: 500,
            rms_threshold: 1e-3,
            early_stop: true,
            snapshot_interval: 50,
        }
    }
}

impl TrainConfig {
    /// Settings for growing sampling: spacing on, no climbing, 200 iterations.
    pub fn growing() -> Self {
        TrainConfig {
            loss: LossConfig {
                lambda_s: 0.1,
                lambda_cl: 0.0,
                use_stop_gradient: true,
            },
            n_iters: 200,
            early_stop: false,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.loss.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {}", self.lr)));
        }
        if self.rms_threshold.is_nan() || self.rms_threshold <= 0.0 {
            return Err(TrainError::Config(format!(
                "rms threshold {}",
                self.rms_threshold
            )));
        }
        if self.n_iters == 0 {
            return Err(TrainError::Config("n_iters must be positive".into()));
        }
        if self.snapshot_interval == 0 {
            return Err(TrainError::Config(
                "snapshot interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub loss: f64,
    pub ts_energy: f64,
    pub rms_grad: f64,
    pub energy_evals: u64,
    pub max_sep_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub iter: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub energy: f64,
}

pub const RUNLOG_HEADER: &str = "iter,loss,ts_energy,rms_grad,energy_evals,max_sep_pct";
pub const SNAPSHOT_HEADER: &str = "iter,t,x,y,energy";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub snapshots: Vec<SnapshotRow>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.iter.to_string(),
                    num(r.loss),
                    num(r.ts_energy),
                    num(r.rms_grad),
                    r.energy_evals.to_string(),
                    num(r.max_sep_pct),
                ]
            })
            .collect();
        table(RUNLOG_HEADER, &rows)
    }

    pub fn snapshots_csv(&self) -> String {
        snapshots_to_csv(&self.snapshots)
    }
}

pub fn snapshots_to_csv(snaps: &[SnapshotRow]) -> String {
    let rows: Vec<Vec<String>> = snaps
        .iter()
        .map(|s| {
            vec![
                s.iter.to_string(),
                num(s.t),
                num(s.x),
                num(s.y),
                num(s.energy),
            ]
        })
        .collect();
    table(SNAPSHOT_HEADER, &rows)
}

/// The highest-energy point among a set of path samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsEstimate {
    pub t: f64,
    pub point: Vec2,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PathModel,
    pub log: RunLog,
    pub ts: TsEstimate,
    /// Sample locations of the last iteration; `ts` is their argmax at the
    /// final parameters.
    pub final_ts: Vec<f64>,
    pub final_positions: Vec<Vec2>,
    pub final_energies: Vec<f64>,
    pub iterations: usize,
    /// True if the gradient-RMS criterion stopped the run.
    pub converged: bool,
    pub energy_evals: u64,
}

/// Largest adjacent-sample distance as a percentage of `|B - A|`. For
/// growing samples the pair straddling the unsampled middle is skipped.
pub fn sample_separation_pct(positions: &[Vec2], growing: bool, a: Vec2, b: Vec2) -> f64 {
    let span = (b - a).norm();
    let junction = positions.len() / 2;
    positions
        .windows(2)
        .enumerate()
        .filter(|(i, _)| !(growing && i + 1 == junction))
        .map(|(_, w)| (w[1] - w[0]).norm())
        .fold(0.0, f64::max)
        * 100.0
        / span
}

/// Evaluate the path at `ts` and return the argmax sample. Counts one
/// energy evaluation per sample.
pub fn evaluate_samples<S: Surface + ?Sized>(
    model: &PathModel,
    surface: &S,
    ts: &[f64],
) -> Result<(Vec<Vec2>, Vec<f64>, TsEstimate), TrainError> {
    let mut points = Vec::with_capacity(ts.len());
    let mut energies = Vec::with_capacity(ts.len());
    for &t in ts {
        let x = model.position(t)?;
        energies.push(surface.energy_grad(x)?.0);
        points.push(x);
    }
    let i = argmax_first(&energies);
    let est = TsEstimate {
        t: ts[i],
        point: points[i],
        energy: energies[i],
    };
    Ok((points, energies, est))
}

/// Highest-energy point over `n_dense` equidistant samples.
pub fn ts_estimate<S: Surface + ?Sized>(
    model: &PathModel,
    surface: &S,
    n_dense: usize,
) -> Result<TsEstimate, TrainError> {
    if n_dense < 2 {
        return Err(TrainError::Config(format!("n_dense = {n_dense}")));
    }
    Ok(evaluate_samples(model, surface, &equidistant(n_dense))?.2)
}

/// Optimize `model` on `surface`.
pub fn train<S: Surface + ?Sized>(
    surface: &S,
    mut model: PathModel,
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    sampler.validate()?;
    let growing = sampler.is_growing();
    let mut sampler = sampler.clone();
    if growing {
        sampler.n_iters = cfg.n_iters;
    }
    let (a, b) = (model.start(), model.end());
    let start_evals = surface.eval_count();
    let mut adam = Adam::new(model.mlp.n_params(), cfg.lr);
    let mut log = RunLog::default();
    let mut converged = false;
    let mut last_ts = Vec::new();
    let mut iterations = 0;

    for k in 1..=cfg.n_iters {
        let ts = sampler.sample(k)?;
        let mut tape = Tape::new();
        let theta = tape.leaves(&model.mlp.params);
        let batch = evaluate_batch(&mut tape, theta, &model, &ts, surface)?;
        let loss = total_loss(&mut tape, &batch, &cfg.loss)?;
        let loss_value = tape.value(loss);

        let snapshot_due = k == 1 || k % cfg.snapshot_interval == 0;
        let snap: Vec<SnapshotRow> = batch
            .samples
            .iter()
            .map(|s| SnapshotRow {
                iter: k,
                t: s.t,
                x: s.x.x,
                y: s.x.y,
                energy: s.energy,
            })
            .collect();
        if !loss_value.is_finite() {
            return Err(TrainError::NonFinite {
                iter: k,
                loss: loss_value,
                snapshot: snap,
            });
        }
        if snapshot_due {
            log.snapshots.extend(snap);
        }

        let grad = tape.gradient(loss, theta);
        drop(tape);
        let rms = (grad.iter().map(|g| g * g).sum::<f64>() / grad.len() as f64).sqrt();
        log.rows.push(LogRow {
            iter: k,
            loss: loss_value,
            ts_energy: batch.ts().energy,
            rms_grad: rms,
            energy_evals: surface.eval_count() - start_evals,
            max_sep_pct: sample_separation_pct(&batch.positions(), growing, a, b),
        });
        iterations = k;
        last_ts = ts;
        if !growing && cfg.early_stop && rms < cfg.rms_threshold {
            converged = true;
            break;
        }
        adam.step(&mut model.mlp.params, &grad)?;
    }

    let (final_positions, final_energies, ts) = evaluate_samples(&model, surface, &last_ts)?;
    Ok(TrainOutcome {
        model,
        log,
        ts,
        final_ts: last_ts,
        final_positions,
        final_energies,
        iterations,
        converged,
        energy_evals: surface.eval_count() - start_evals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mean,
    StopGradient,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mean => "mean",
            LossKind::StopGradient => "stop_gradient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(LossKind::Mean),
            "stop_gradient" | "stop-gradient" | "stop" => Some(LossKind::StopGradient),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub kind: LossKind,
    pub lambda_s: f64,
    pub lambda_cl: f64,
}

/// Every combination of the given kinds and coefficients, kinds outermost.
pub fn sweep_grid(kinds: &[LossKind], lambdas_s: &[f64], lambdas_cl: &[f64]) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &kind in kinds {
        for &lambda_s in lambdas_s {
            for &lambda_cl in lambdas_cl {
                cells.push(SweepCell {
                    kind,
                    lambda_s,
                    lambda_cl,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub max_sep_pct: f64,
    /// `|U(x(t_*)) - U_TS|` at the final parameters, before refinement.
    pub ts_error: f64,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "loss_kind,lambda_s,lambda_cl,max_sep_pct,ts_error";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.cell.kind.name().to_string(),
                num(r.cell.lambda_s),
                num(r.cell.lambda_cl),
                num(r.max_sep_pct),
                num(r.ts_error),
            ]
        })
        .collect();
    table(SWEEP_HEADER, &body)
}

/// Train once per cell from the same initial model. A failing cell is
/// recorded with NaN metrics and the sweep moves on.
pub fn sweep<S: Surface + ?Sized>(
    surface: &S,
    model: &PathModel,
    sampler: &SamplerConfig,
    base: &TrainConfig,
    cells: &[SweepCell],
    reference_ts_energy: f64,
) -> Vec<SweepRow> {
    let (a, b) = (model.start(), model.end());
    cells
        .iter()
        .map(|&cell| {
            let cfg = TrainConfig {
                loss: LossConfig {
                    lambda_s: cell.lambda_s,
                    lambda_cl: cell.lambda_cl,
                    use_stop_gradient: cell.kind == LossKind::StopGradient,
                },
                ..base.clone()
            };
            match train(surface, model.clone(), sampler, &cfg) {
                Ok(out) => SweepRow {
                    cell,
                    max_sep_pct: sample_separation_pct(
                        &out.final_positions,
                        sampler.is_growing(),
                        a,
                        b,
                    ),
                    ts_error: (out.ts.energy - reference_ts_energy).abs(),
                    error: None,
                },
                Err(e) => SweepRow {
                    cell,
                    max_sep_pct: f64::NAN,
                    ts_error: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
