//! `generalize gen-data | train | eval`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use neuralmep::csvfmt::{num, table};
use neuralmep::generalize::{
    build_dataset, errors_csv, evaluate, linear_path, nn_baseline, parse_dataset, path_csv,
    systems_csv, train_generalizer, Dataset, GeneralizeError, Generalizer, GeneralizerConfig,
    PATH_POINTS,
};
use neuralmep::pathmodel::{InitScheme, Mlp};

use crate::settings::{key, usage, Key, Settings};
use crate::{write_artifact, Status};

pub const GEN_DATA_KEYS: &[Key] = &[
    key("seed", "0", "Shuffle seed for drawing grid systems"),
    key("n-train", "32", "Training systems"),
    key("n-test", "100", "Test systems"),
];

pub const TRAIN_KEYS: &[Key] = &[
    key("data", "runs/wells", "Directory written by gen-data"),
    key("epochs", "200", "Training epochs"),
    key("lr", "0.0005", "Adam learning rate"),
    key("seed", "0", "Network seed"),
    key("width", "256", "Hidden width"),
    key("depth", "3", "Hidden layers"),
    key("init", "glorot", "Weight init: fanin or glorot"),
    key("zero-output", "true", "Zero the output layer at init"),
];

pub const EVAL_KEYS: &[Key] = &[
    key("data", "runs/wells", "Directory written by gen-data"),
    key(
        "model",
        "auto",
        "Model file; auto is <data>/train/model.txt",
    ),
    key(
        "predictor",
        "inr,nn,linear",
        "Predictor or comma list: inr, nn, linear, reference",
    ),
];

fn path_file(dir: &Path, split: &str, k: usize) -> PathBuf {
    dir.join("paths").join(format!("{split}_{k:03}.csv"))
}

fn require(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(usage(format!("missing prerequisite {}", path.display())));
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Read a dataset directory written by `gen-data`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let systems = require(&dir.join("systems.csv"))?;
    let seed = std::fs::read_to_string(dir.join("manifest.txt"))
        .ok()
        .and_then(|m| {
            m.lines()
                .find_map(|l| l.strip_prefix("seed=").map(str::to_string))
        })
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let mut missing = None;
    let ds = parse_dataset(seed, &systems, |split, k| {
        let p = path_file(dir, split, k);
        std::fs::read_to_string(&p).map_err(|_| {
            missing = Some(p.clone());
            GeneralizeError::Parse(format!("missing {}", p.display()))
        })
    });
    match (ds, missing) {
        (_, Some(p)) => Err(usage(format!("missing prerequisite {}", p.display()))),
        (ds, None) => Ok(ds?),
    }
}

fn sub_out(s: &Settings, name: &str) -> PathBuf {
    if s.out.as_os_str() == "auto" {
        PathBuf::from(s.get("data")).join(name)
    } else {
        s.out.clone()
    }
}

pub fn run_gen_data(s: &Settings) -> Result<(Dataset, Status)> {
    let ds = build_dataset(s.parse("seed")?, s.parse("n-train")?, s.parse("n-test")?)?;
    let dir = &s.out;
    std::fs::create_dir_all(dir.join("paths"))?;
    write_artifact(dir, "manifest.txt", &s.manifest())?;
    write_artifact(dir, "systems.csv", &systems_csv(&ds))?;
    for (split, list) in [("train", &ds.train), ("test", &ds.test)] {
        for (k, sys) in list.iter().enumerate() {
            std::fs::write(path_file(dir, split, k), path_csv(&sys.path))?;
        }
    }
    let rows: Vec<Vec<String>> = ds
        .rejected
        .iter()
        .map(|r| {
            let mut row = vec![r.index.to_string()];
            row.extend(r.phi.iter().map(|v| num(*v)));
            row.push(r.reason.replace(',', ";"));
            row
        })
        .collect();
    write_artifact(
        dir,
        "rejected.csv",
        &table("index,mu_px,mu_py,sigma_p,c_p,reason", &rows),
    )?;
    for r in &ds.rejected {
        eprintln!(
            "resampled grid system {} {:?}: {}",
            r.index, r.phi, r.reason
        );
    }
    Ok((ds, Status::Success))
}

pub fn generalizer_config(s: &Settings) -> Result<GeneralizerConfig> {
    let init = match s.get("init") {
        "fanin" => InitScheme::FanIn,
        "glorot" => InitScheme::Glorot,
        v => {
            return Err(usage(format!(
                "unknown init `{v}`; expected fanin or glorot"
            )))
        }
    };
    Ok(GeneralizerConfig {
        epochs: s.parse("epochs")?,
        lr: s.parse("lr")?,
        width: s.parse("width")?,
        depth: s.parse("depth")?,
        init,
        zero_output: s.flag("zero-output")?,
        seed: s.parse("seed")?,
    })
}

pub fn run_train(s: &Settings) -> Result<(Vec<f64>, Status)> {
    let ds = load_dataset(Path::new(s.get("data")))?;
    let cfg = generalizer_config(s)?;
    let out = train_generalizer(&ds, &cfg)?;
    let dir = sub_out(s, "train");
    std::fs::create_dir_all(&dir)?;
    write_artifact(&dir, "manifest.txt", &s.manifest())?;
    write_artifact(&dir, "model.txt", &out.model.mlp.to_text(true))?;
    write_artifact(&dir, "errors_inr.csv", &errors_csv(&out.test_errors))?;
    let rows: Vec<Vec<String>> = out
        .train_loss
        .iter()
        .enumerate()
        .map(|(e, v)| vec![(e + 1).to_string(), num(*v)])
        .collect();
    write_artifact(&dir, "train_loss.csv", &table("epoch,loss", &rows))?;
    Ok((out.test_errors, Status::Success))
}

fn load_model(path: &Path) -> Result<Generalizer> {
    let (mlp, conditioned) = Mlp::from_text(&require(path)?)?;
    if !conditioned || mlp.input_dim() != 9 {
        return Err(usage(format!(
            "{} is not a conditioned path model",
            path.display()
        )));
    }
    Ok(Generalizer { mlp })
}

/// Mean test error per predictor, in the order requested.
pub fn run_eval(s: &Settings) -> Result<(Vec<(String, f64)>, Status)> {
    let data = PathBuf::from(s.get("data"));
    let ds = load_dataset(&data)?;
    let model_path = if s.is_auto("model") {
        data.join("train").join("model.txt")
    } else {
        PathBuf::from(s.get("model"))
    };
    let dir = sub_out(s, "eval");
    let mut results = Vec::new();
    let names: Vec<String> = s
        .get("predictor")
        .split(',')
        .map(|p| p.trim().to_string())
        .collect();
    for name in &names {
        let err = match name.as_str() {
            "inr" => {
                let g = load_model(&model_path)?;
                evaluate(&ds.test, |sys| {
                    g.predict(sys.a, sys.b, sys.phi, sys.path.len())
                })?
            }
            "nn" => evaluate(&ds.test, |sys| nn_baseline(&ds.train, sys))?,
            "linear" => evaluate(&ds.test, |sys| Ok(linear_path(sys.a, sys.b, PATH_POINTS)))?,
            "reference" => evaluate(&ds.test, |sys| Ok(sys.path.clone()))?,
            other => return Err(usage(format!("unknown predictor `{other}`"))),
        };
        results.push((name.clone(), err));
    }
    std::fs::create_dir_all(&dir)?;
    write_artifact(&dir, "manifest.txt", &s.manifest())?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(n, e)| vec![n.clone(), num(*e)])
        .collect();
    write_artifact(&dir, "eval.csv", &table("predictor,mean_ts_error", &rows))?;
    for (name, err) in &results {
        if name == "inr" {
            let curve = model_path.with_file_name("errors_inr.csv");
            if let Ok(text) = std::fs::read_to_string(&curve) {
                write_artifact(&dir, "errors_inr.csv", &text)?;
                continue;
            }
        }
        write_artifact(&dir, &format!("errors_{name}.csv"), &errors_csv(&[*err]))?;
    }
    Ok((results, Status::Success))
}
