//! `sweep`: loss kind × λ_s × λ_Cl grid on one system.

use anyhow::Result;
use neuralmep::csvfmt::{num, table};
use neuralmep::neb::{run_neb, NebConfig};
use neuralmep::pathmodel::{BasePath, Mlp, PathModel};
use neuralmep::potential::{refine_saddle, SaddleOptions};
use neuralmep::trainer::{sweep, sweep_csv, sweep_grid, LossKind, SweepRow};

use crate::settings::{key, usage, Key, Settings};
use crate::solve::{endpoints, mlp_config, potential, train_config, NETWORK_KEYS, POTENTIAL_KEYS};
use crate::{write_artifact, Status};

pub fn sweep_keys() -> Vec<Key> {
    let mut keys: Vec<Key> = POTENTIAL_KEYS
        .iter()
        .map(|k| {
            if k.name == "potential" {
                key("potential", "mb", k.help)
            } else {
                *k
            }
        })
        .collect();
    keys.extend_from_slice(NETWORK_KEYS);
    keys.extend_from_slice(&[
        key(
            "loss-kinds",
            "mean,stop_gradient",
            "Comma list of mean and stop_gradient",
        ),
        key("lambda-s", "0,0.1,1", "Comma list of spacing coefficients"),
        key("lambda-cl", "1", "Comma list of climbing coefficients"),
        key("n-iters", "2000", "Iterations per cell"),
        key("n-samples", "17", "Samples per iteration"),
        key(
            "reference",
            "auto",
            "Reference TS energy; auto refines a climbing NEB saddle",
        ),
    ]);
    keys
}

pub fn run_sweep(s: &mut Settings) -> Result<(Vec<SweepRow>, Status)> {
    let pot = potential(s)?;
    let (a, b) = endpoints(s, &pot)?;
    let kinds = s
        .get("loss-kinds")
        .split(',')
        .map(|k| LossKind::parse(k.trim()).ok_or_else(|| usage(format!("unknown loss kind `{k}`"))))
        .collect::<Result<Vec<_>>>()?;
    let cells = sweep_grid(&kinds, &s.f64_list("lambda-s")?, &s.f64_list("lambda-cl")?);

    let dir = s.out.clone();
    std::fs::create_dir_all(&dir)?;
    write_artifact(&dir, "manifest.txt", &s.manifest())?;

    let reference = if s.is_auto("reference") {
        let res = run_neb(&pot, a, b, &NebConfig::default(), 0)?;
        let saddle = refine_saddle(&pot, res.ts().1, SaddleOptions::default())?;
        write_artifact(
            &dir,
            "reference.csv",
            &table(
                "x,y,energy",
                &[vec![
                    num(saddle.point.x),
                    num(saddle.point.y),
                    num(saddle.energy),
                ]],
            ),
        )?;
        saddle.energy
    } else {
        s.parse("reference")?
    };

    let mut ts = s.clone();
    for (k, v) in [
        ("lambda-s", "0"),
        ("lambda-cl", "0"),
        ("loss", "stop_gradient"),
        ("early-stop", "false"),
        ("rms-threshold", "0.001"),
        ("snapshot-interval", "1000000"),
        ("randomized", "false"),
        ("sampling", "uniform"),
    ] {
        ts.set(k, v);
    }
    let (sampler, base) = train_config(&ts)?;
    let model = PathModel::new(BasePath::linear(a, b), Mlp::new(&mlp_config(s, 1)?));
    let rows = sweep(&pot, &model, &sampler, &base, &cells, reference);
    for r in &rows {
        if let Some(e) = &r.error {
            eprintln!(
                "warning: cell {} λ_s={} λ_Cl={} failed: {e}",
                r.cell.kind.name(),
                r.cell.lambda_s,
                r.cell.lambda_cl
            );
        }
    }
    write_artifact(&dir, "sweep.csv", &sweep_csv(&rows))?;
    Ok((rows, Status::Success))
}
