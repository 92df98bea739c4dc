//! Merges the manifests of a run directory. Nothing is recomputed.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::run::Manifest;
use crate::CliError;

/// Relative tolerance for calling two exponents the same.
const MU_MATCH_TOL: f64 = 1e-12;

pub const REPORT_FILE: &str = "report.json";

pub fn report(dir: &Path, out: &Path) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && n != REPORT_FILE)
        .collect();
    names.sort();
    let mut manifests = Vec::new();
    let mut bad = Vec::new();
    for n in &names {
        let parsed = fs::read_to_string(dir.join(n))
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Manifest>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(m) => manifests.push((n.clone(), m)),
            Err(e) => bad.push(format!("{n}: {e}")),
        }
    }
    if !bad.is_empty() {
        return Err(CliError::Config(format!("unreadable manifests:\n  {}", bad.join("\n  "))));
    }
    if manifests.is_empty() {
        return Err(CliError::Config(format!("no manifests in {}", dir.display())));
    }

    let mut warnings = Vec::new();
    let lyap = manifests.iter().find(|(_, m)| m.command == "lyapunov");
    let branch = manifests.iter().find(|(_, m)| m.command == "branch");
    let cross = match (lyap, branch) {
        (Some((_, l)), Some((_, b))) => {
            let mu_l = l.result["mu"].as_f64();
            let mu_b = b.result["mu_hat"].as_f64();
            let same = match (mu_l, mu_b) {
                (Some(x), Some(y)) => (x - y).abs() <= MU_MATCH_TOL * x.abs().max(1.0),
                _ => false,
            };
            if !same {
                warnings.push(format!(
                    "branch filtered with mu_hat = {} ({}) but the lyapunov manifest reports mu = {}",
                    fmt_opt(mu_b),
                    b.result["mu_source"].as_str().unwrap_or("?"),
                    fmt_opt(mu_l)
                ));
            }
            Some(json!({ "lyapunov_mu": mu_l, "branch_mu_hat": mu_b, "consistent": same }))
        }
        _ => None,
    };

    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut plots = Vec::new();
    for (_, m) in &manifests {
        match m.command.as_str() {
            "branch" if m.result["points"].is_array() => {
                plots.push(plot(out, "plot_branch.csv", m, &["eps", "lambda_distance", "projection_distance", "multiplicity"], |p| {
                    vec![p["eps"].clone(), p["lambda_distance"].clone(), p["projection_distance"].clone(), p["multiplicity"].clone()]
                }, &m.result["points"])?);
            }
            "packet" => {
                plots.push(plot(out, "plot_packet.csv", m, &["delta", "eps", "r_asym", "r_decomp"], |r| {
                    vec![r["delta"].clone(), r["eps"].clone(), r["r_asym"].clone(), r["r_decomp"].clone()]
                }, &m.result["rows"])?);
            }
            "spectrum" if m.result["n_sweep"].is_array() => {
                plots.push(plot(out, "plot_nsweep.csv", m, &["cutoff", "remainder_radius", "unstable_count", "neutral_count"], |r| {
                    vec![r["cutoff"].clone(), r["remainder_radius"].clone(), r["unstable_count"].clone(), r["neutral_count"].clone()]
                }, &m.result["n_sweep"])?);
            }
            _ => {}
        }
    }

    let sections: Vec<Value> = manifests
        .iter()
        .map(|(file, m)| {
            json!({
                "command": m.command,
                "manifest": file,
                "config_hash": m.config_hash,
                "version": m.version,
                "outputs": m.outputs,
                "result": m.result,
            })
        })
        .collect();
    let mut doc = json!({ "sections": sections, "plots": plots, "warnings": warnings });
    if let Some(c) = cross {
        doc["mu_cross_reference"] = c;
    }
    for w in doc["warnings"].as_array().into_iter().flatten() {
        eprintln!("warning: {}", w.as_str().unwrap_or_default());
    }
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    let p = out.join(REPORT_FILE);
    fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "missing".into(), |x| x.to_string())
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes one plot-data table from an array in a manifest.
fn plot(
    out: &Path,
    name: &str,
    m: &Manifest,
    header: &[&str],
    row: impl Fn(&Value) -> Vec<Value>,
    items: &Value,
) -> Result<String, CliError> {
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let mut wr = csv::Writer::from_path(out.join(name)).map_err(io)?;
    let mut h: Vec<&str> = header.to_vec();
    h.extend(["config_hash", "version"]);
    wr.write_record(&h).map_err(io)?;
    for it in items.as_array().into_iter().flatten() {
        let mut rec: Vec<String> = row(it).iter().map(cell).collect();
        rec.push(m.config_hash.clone());
        rec.push(m.version.clone());
        wr.write_record(&rec).map_err(io)?;
    }
    wr.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(name.to_string())
}
