//! `solve` and `neb`: one path search on one surface.

use anyhow::Result;
use neuralmep::csvfmt::{num, table};
use neuralmep::loss::LossConfig;
use neuralmep::neb::{run_neb, FireParams, NebConfig, NebResult};
use neuralmep::pathmodel::{BasePath, InitScheme, Mlp, MlpConfig, PathModel};
use neuralmep::potential::{
    find_minimum, refine_saddle, sine_minimum, MinimizeOptions, SaddleOptions, Surface,
};
use neuralmep::sampling::{equidistant, SamplerConfig, SamplerKind};
use neuralmep::trainer::{train, TrainConfig};
use neuralmep::{Potential2D, PotentialError, Vec2};

use crate::settings::{key, usage, Key, Settings};
use crate::{write_artifact, Status};

pub const POTENTIAL_KEYS: &[Key] = &[
    key("potential", "leps", "Surface: leps, mb, sine or wells"),
    key("sine-n", "1", "Sine: periods between the two minima"),
    key("start", "auto", "Start point x,y"),
    key("end", "auto", "End point x,y"),
    key(
        "relax",
        "auto",
        "Relax endpoints to minima; auto relaxes all but leps",
    ),
];

pub const NETWORK_KEYS: &[Key] = &[
    key("seed", "0", "Network seed"),
    key("lr", "0.001", "Adam learning rate"),
    key("width", "256", "Hidden width"),
    key("depth", "3", "Hidden layers"),
    key("init", "fanin", "Weight init: fanin or glorot"),
    key("zero-output", "false", "Zero the output layer at init"),
];

pub const TRAIN_KEYS: &[Key] = &[
    key(
        "sampling",
        "auto",
        "uniform or growing; auto is growing for inr-gs",
    ),
    key(
        "n-samples",
        "auto",
        "Samples per iteration; auto is 17, or 16 for growing",
    ),
    key(
        "randomized",
        "false",
        "Growing sampling: draw samples at random",
    ),
    key(
        "loss",
        "stop_gradient",
        "Energy term: mean or stop_gradient",
    ),
    key(
        "lambda-s",
        "auto",
        "Spacing coefficient; auto is 0, or 0.1 for growing",
    ),
    key(
        "lambda-cl",
        "auto",
        "Climbing coefficient; auto is 1, or 0 for growing",
    ),
    key(
        "early-stop",
        "true",
        "Stop uniform runs once the gradient RMS is below rms-threshold",
    ),
    key("rms-threshold", "0.001", "Early-stop threshold"),
    key(
        "snapshot-interval",
        "50",
        "Iterations between path snapshots",
    ),
];

pub const NEB_KEYS: &[Key] = &[
    key("n-images", "17", "NEB images including endpoints"),
    key("spring-k", "0.1", "NEB spring constant"),
    key("climbing", "true", "Use a climbing image"),
    key("f-max", "0.001", "NEB force tolerance"),
];

pub const OUTPUT_KEYS: &[Key] = &[
    key(
        "n-iters",
        "auto",
        "Iteration budget; auto is 500, or 200 for growing",
    ),
    key("refine", "true", "Newton-refine the TS estimate"),
    key("path-samples", "201", "Points written to path.csv"),
    key("grid-n", "61", "Grid points per side in grid.csv"),
    key("plots", "true", "Write SVG figures"),
];

pub fn solve_keys(with_method: bool) -> Vec<Key> {
    let mut keys = Vec::new();
    if with_method {
        keys.push(key("method", "inr", "inr, inr-gs or neb"));
    }
    for group in [
        POTENTIAL_KEYS,
        NETWORK_KEYS,
        TRAIN_KEYS,
        NEB_KEYS,
        OUTPUT_KEYS,
    ] {
        keys.extend_from_slice(group);
    }
    keys
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Inr,
    InrGs,
    Neb,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "inr" => Ok(Method::Inr),
            "inr-gs" => Ok(Method::InrGs),
            "neb" => Ok(Method::Neb),
            other => Err(usage(format!(
                "unknown method `{other}`; expected inr, inr-gs or neb"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Inr => "inr",
            Method::InrGs => "inr-gs",
            Method::Neb => "neb",
        }
    }
}

pub fn potential(s: &Settings) -> Result<Potential2D> {
    Potential2D::from_name(s.get("potential"), &s.potential_params()).map_err(|e| match e {
        PotentialError::UnknownPotential(_)
        | PotentialError::UnknownParameter(_)
        | PotentialError::InvalidParameter { .. } => usage(e.to_string()),
        other => other.into(),
    })
}

/// Default endpoints: LEPS reactant and product, the two deep Müller–Brown
/// minima, Sine minima `n` periods apart, and the two Wells basins.
pub fn endpoints(s: &Settings, pot: &Potential2D) -> Result<(Vec2, Vec2)> {
    let name = pot.to_string();
    let n: i32 = s.parse("sine-n")?;
    let (da, db) = match name.as_str() {
        "leps" => (Vec2::new(0.75, 4.0), Vec2::new(4.0, 0.75)),
        "mb" => (Vec2::new(-0.558, 1.442), Vec2::new(0.623, 0.028)),
        "sine" => (sine_minimum(0), sine_minimum(n)),
        _ => (Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0)),
    };
    let a = s.point("start")?.unwrap_or(da);
    let b = s.point("end")?.unwrap_or(db);
    let relax = if s.is_auto("relax") {
        name != "leps"
    } else {
        s.flag("relax")?
    };
    if !relax {
        return Ok((a, b));
    }
    let opts = MinimizeOptions::default();
    Ok((find_minimum(pot, a, opts)?, find_minimum(pot, b, opts)?))
}

/// Fill `auto` hyperparameters for `method` so the manifest records them.
pub fn resolve_autos(s: &mut Settings, method: Method) -> Result<()> {
    if method != Method::Neb {
        match (s.get("sampling"), method) {
            ("auto", Method::InrGs) => s.set("sampling", "growing"),
            ("auto", _) => s.set("sampling", "uniform"),
            ("uniform", Method::InrGs) => return Err(usage("inr-gs always uses growing sampling")),
            ("uniform" | "growing", _) => {}
            (v, _) => {
                return Err(usage(format!(
                    "unknown sampling `{v}`; expected uniform or growing"
                )))
            }
        }
    }
    let growing = method != Method::Neb && s.get("sampling") == "growing";
    for (k, plain, gs) in [
        ("n-iters", "500", "200"),
        ("n-samples", "17", "16"),
        ("lambda-s", "0", "0.1"),
        ("lambda-cl", "1", "0"),
    ] {
        if s.is_auto(k) {
            s.set(k, if growing { gs } else { plain });
        }
    }
    Ok(())
}

pub fn mlp_config(s: &Settings, input_dim: usize) -> Result<MlpConfig> {
    let init = match s.get("init") {
        "fanin" => InitScheme::FanIn,
        "glorot" => InitScheme::Glorot,
        v => {
            return Err(usage(format!(
                "unknown init `{v}`; expected fanin or glorot"
            )))
        }
    };
    Ok(MlpConfig {
        input_dim,
        width: s.parse("width")?,
        depth: s.parse("depth")?,
        output_dim: 2,
        init,
        zero_output: s.flag("zero-output")?,
        seed: s.parse("seed")?,
    })
}

pub fn train_config(s: &Settings) -> Result<(SamplerConfig, TrainConfig)> {
    let n_iters: usize = s.parse("n-iters")?;
    let n_samples: usize = s.parse("n-samples")?;
    let use_stop_gradient = match s.get("loss") {
        "stop_gradient" => true,
        "mean" => false,
        v => {
            return Err(usage(format!(
                "unknown loss `{v}`; expected mean or stop_gradient"
            )))
        }
    };
    let sampler = SamplerConfig {
        kind: match s.get("sampling") {
            "growing" => SamplerKind::Growing {
                randomized: s.flag("randomized")?,
            },
            "uniform" => SamplerKind::Uniform,
            v => {
                return Err(usage(format!(
                    "unknown sampling `{v}`; expected uniform or growing"
                )))
            }
        },
        n_samples,
        n_iters,
        seed: s.parse("seed")?,
    };
    sampler.validate().map_err(|e| usage(e.to_string()))?;
    let cfg = TrainConfig {
        loss: LossConfig {
            lambda_s: s.parse("lambda-s")?,
            lambda_cl: s.parse("lambda-cl")?,
            use_stop_gradient,
        },
        lr: s.parse("lr")?,
        n_iters,
        rms_threshold: s.parse("rms-threshold")?,
        early_stop: s.flag("early-stop")?,
        snapshot_interval: s.parse("snapshot-interval")?,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok((sampler, cfg))
}

pub fn neb_config(s: &Settings) -> Result<NebConfig> {
    Ok(NebConfig {
        n_images: s.parse("n-images")?,
        spring_k: s.parse("spring-k")?,
        climbing: s.flag("climbing")?,
        f_max_tol: s.parse("f-max")?,
        max_iters: s.parse("n-iters")?,
        fire: FireParams::default(),
    })
}

/// What a `solve` run found, as written to `ts.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub method: Method,
    pub a: Vec2,
    pub b: Vec2,
    pub start_energy: f64,
    pub t: f64,
    pub point: Vec2,
    pub energy: f64,
    pub refined: Option<(Vec2, f64)>,
    pub iterations: usize,
    pub energy_evals: u64,
    pub refine_evals: u64,
    pub converged: bool,
    pub status: Status,
}

impl SolveReport {
    pub fn barrier(&self) -> f64 {
        self.energy - self.start_energy
    }

    pub fn refined_barrier(&self) -> Option<f64> {
        self.refined.map(|(_, e)| e - self.start_energy)
    }
}

pub const TS_HEADER: &str = "method,t,x,y,energy,barrier,refined_x,refined_y,refined_energy,refined_barrier,start_energy,iterations,energy_evals,refine_evals,converged";

fn ts_csv(r: &SolveReport) -> String {
    let (rx, ry, re) = r
        .refined
        .map_or((f64::NAN, f64::NAN, f64::NAN), |(p, e)| (p.x, p.y, e));
    let row = vec![
        r.method.name().to_string(),
        num(r.t),
        num(r.point.x),
        num(r.point.y),
        num(r.energy),
        num(r.barrier()),
        num(rx),
        num(ry),
        num(re),
        num(re - r.start_energy),
        num(r.start_energy),
        r.iterations.to_string(),
        r.energy_evals.to_string(),
        r.refine_evals.to_string(),
        r.converged.to_string(),
    ];
    table(TS_HEADER, &[row])
}

fn path_csv(pot: &Potential2D, ts: &[f64], points: &[Vec2]) -> String {
    let rows: Vec<Vec<String>> = ts
        .iter()
        .zip(points)
        .map(|(t, p)| {
            let e = pot.evaluate(*p).map_or(f64::NAN, |r| r.0);
            vec![num(*t), num(p.x), num(p.y), num(e)]
        })
        .collect();
    table("t,x,y,energy", &rows)
}

/// Energies on an `n × n` grid around `points`. Points outside the surface's
/// domain are written as NaN.
pub fn grid_csv(pot: &Potential2D, points: &[Vec2], n: usize) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let pad = 0.25 * (x1 - x0).max(y1 - y0).max(0.4);
    let (x0, x1, y0, y1) = (x0 - pad, x1 + pad, y0 - pad, y1 + pad);
    let n = n.max(2);
    let mut rows = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let x = x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
            let y = y0 + (y1 - y0) * j as f64 / (n - 1) as f64;
            let e = pot.evaluate(Vec2::new(x, y)).map_or(f64::NAN, |r| r.0);
            rows.push(vec![num(x), num(y), num(e)]);
        }
    }
    table("x,y,energy", &rows)
}

/// Piecewise-linear interpolation of a chain indexed by `t_i = i/(n-1)`.
fn interpolate_chain(images: &[Vec2], t: f64) -> Vec2 {
    let n = images.len();
    let u = t * (n - 1) as f64;
    let i = (u.floor() as usize).min(n - 2);
    let f = u - i as f64;
    images[i] * (1.0 - f) + images[i + 1] * f
}

fn images_csv(res: &NebResult) -> String {
    let ts = res.chain.t_values();
    let rows: Vec<Vec<String>> = res
        .chain
        .images
        .iter()
        .zip(&res.chain.energies)
        .zip(&ts)
        .enumerate()
        .map(|(i, ((p, e), t))| vec![i.to_string(), num(*t), num(p.x), num(p.y), num(*e)])
        .collect();
    table("i,t,x,y,energy", &rows)
}

/// Run one search and write its artifacts to `s.out`.
pub fn run_solve(s: &mut Settings, method: Method) -> Result<SolveReport> {
    resolve_autos(s, method)?;
    let pot = potential(s)?;
    let (a, b) = endpoints(s, &pot)?;
    let start_energy = pot.evaluate(a)?.0;
    let refine: bool = s.flag("refine")?;
    let path_samples: usize = s.parse("path-samples")?;
    let grid_n: usize = s.parse("grid-n")?;
    let plots = s.flag("plots")?;
    if path_samples < 2 {
        return Err(usage("path-samples must be at least 2"));
    }
    let dir = s.out.clone();
    std::fs::create_dir_all(&dir)?;
    write_artifact(&dir, "manifest.txt", &s.manifest())?;

    let ts_grid = equidistant(path_samples);
    let (mut report, path_points, runlog, snapshots) = match method {
        Method::Neb => {
            let cfg = neb_config(s)?;
            let interval: usize = s.parse("snapshot-interval")?;
            let res = run_neb(&pot, a, b, &cfg, interval)?;
            let (i, x, e) = res.ts();
            let points: Vec<Vec2> = ts_grid
                .iter()
                .map(|&t| interpolate_chain(&res.chain.images, t))
                .collect();
            write_artifact(&dir, "images.csv", &images_csv(&res))?;
            let report = SolveReport {
                method,
                a,
                b,
                start_energy,
                t: res.chain.t_values()[i],
                point: x,
                energy: e,
                refined: None,
                iterations: res.iterations,
                energy_evals: res.energy_evals,
                refine_evals: 0,
                converged: res.converged,
                status: if res.converged {
                    Status::Success
                } else {
                    Status::NotConverged
                },
            };
            (report, points, res.log.to_csv(), res.log.snapshots_csv())
        }
        Method::Inr | Method::InrGs => {
            let (sampler, cfg) = train_config(s)?;
            let mlp = Mlp::new(&mlp_config(s, 1)?);
            let out = train(
                &pot,
                PathModel::new(BasePath::linear(a, b), mlp),
                &sampler,
                &cfg,
            )?;
            let points: Vec<Vec2> = ts_grid
                .iter()
                .map(|&t| out.model.position(t))
                .collect::<Result<_, _>>()?;
            let flagged = !sampler.is_growing() && cfg.early_stop && !out.converged;
            let report = SolveReport {
                method,
                a,
                b,
                start_energy,
                t: out.ts.t,
                point: out.ts.point,
                energy: out.ts.energy,
                refined: None,
                iterations: out.iterations,
                energy_evals: out.energy_evals,
                refine_evals: 0,
                converged: out.converged,
                status: if flagged {
                    Status::NotConverged
                } else {
                    Status::Success
                },
            };
            write_artifact(&dir, "model.txt", &out.model.mlp.to_text(false))?;
            (report, points, out.log.to_csv(), out.log.snapshots_csv())
        }
    };

    if refine {
        let before = pot.eval_count();
        match refine_saddle(&pot, report.point, SaddleOptions::default()) {
            Ok(saddle) => report.refined = Some((saddle.point, saddle.energy)),
            Err(e) => {
                eprintln!("warning: TS refinement failed: {e}");
                if report.status == Status::Success {
                    report.status = Status::NumericalFailure;
                }
            }
        }
        report.refine_evals = pot.eval_count() - before;
    }

    let path = path_csv(&pot, &ts_grid, &path_points);
    let grid = grid_csv(&pot, &path_points, grid_n);
    write_artifact(&dir, "runlog.csv", &runlog)?;
    write_artifact(&dir, "snapshots.csv", &snapshots)?;
    write_artifact(&dir, "path.csv", &path)?;
    write_artifact(&dir, "grid.csv", &grid)?;
    write_artifact(&dir, "ts.csv", &ts_csv(&report))?;
    if plots {
        write_artifact(&dir, "profile.svg", &crate::plot::profile_svg(&path)?)?;
        write_artifact(&dir, "path.svg", &crate::plot::path_svg(&grid, &path)?)?;
    }
    Ok(report)
}
