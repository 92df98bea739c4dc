//! The computing subcommands. Each writes a CSV table and a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use visclimit::cocycle::{lyapunov_exponent_with, write_lyapunov_csv, LyapunovEstimate, LyapunovOptions};
use visclimit::flows::SteadyFlow;
use visclimit::galerkin::assemble;
use visclimit::lattice::ModeSet;
use visclimit::provenance::{Provenance, VERSION};
use visclimit::scalar::cx;
use visclimit::semigroup::{decomposition_sweep, essential_radius_diagnostic, write_packet_csv, write_radius_csv, PacketExperiment};
use visclimit::spectra::{
    continue_in_viscosity, default_delta, eigen_decompose, isolation_radius, multiplicity, riesz_projection,
    unstable_set, write_branch_csv, write_spectrum_csv, SpectrumResult, DEFAULT_NODES,
};
use visclimit::ComplexF64;

use crate::config::RunConfig;
use crate::CliError;

/// What every command leaves behind next to its tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    pub result: Value,
}

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub flow: SteadyFlow<f64>,
    pub prov: Provenance,
}

impl Run {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        cfg.validate()?;
        let flow = cfg.flow()?;
        let prov = Provenance::new(cfg.hash());
        Ok(Self { cfg, out, flow, prov })
    }

    fn modeset(&self, cutoff: usize) -> Result<Arc<ModeSet<f64>>, CliError> {
        Ok(ModeSet::shared(self.cfg.dim, cutoff)?)
    }

    fn table(&self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> visclimit::Result<()>) -> Result<String, CliError> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.write_file(name, &buf)?;
        Ok(name.to_string())
    }

    fn write_file(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::Io(format!("{}: {e}", self.out.display())))?;
        let p = self.out.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    fn manifest(&self, command: &str, outputs: Vec<String>, result: Value) -> Result<(), CliError> {
        let m = Manifest {
            command: command.into(),
            version: VERSION.into(),
            config_hash: self.prov.config_hash.clone(),
            config: self.cfg.clone(),
            outputs,
            result,
        };
        let mut text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_file(&format!("{command}.json"), text.as_bytes())
    }

    fn estimate(&self) -> Result<LyapunovEstimate<f64>, CliError> {
        let mut opts = LyapunovOptions::new(self.cfg.samples, self.cfg.horizon, self.cfg.weight_m, self.cfg.seed);
        opts.tol = self.cfg.tolerances.ray;
        opts.fixed_point_seeds = self.cfg.fixed_point_seeds;
        Ok(lyapunov_exponent_with(&self.flow, &opts)?)
    }

    fn spectrum(&self, eps: f64) -> Result<SpectrumResult<f64>, CliError> {
        let ms = self.modeset(self.cfg.cutoff)?;
        Ok(eigen_decompose(&assemble(&self.flow, &ms, eps)?)?)
    }

    /// Sampled exponent unless pinned, and where it came from.
    fn mu_hat(&self) -> Result<(f64, &'static str), CliError> {
        match self.cfg.mu_hat {
            Some(m) => Ok((m, "pinned")),
            None => Ok((self.estimate()?.mu, "sampled")),
        }
    }

    fn delta(&self, mu: f64) -> f64 {
        self.cfg.delta.unwrap_or_else(|| default_delta(mu))
    }

    pub fn lyapunov(&self) -> Result<(), CliError> {
        let est = self.estimate()?;
        let csv = self.table("lyapunov.csv", |w| write_lyapunov_csv(&est, &self.prov, w))?;
        let result = json!({
            "mu": est.mu,
            "weight_m": est.weight_m,
            "samples": est.samples,
            "horizon": est.horizon,
            "confidence_halfwidth": est.confidence_halfwidth,
            "skipped": est.skipped,
        });
        self.manifest("lyapunov", vec![csv], result)
    }

    pub fn spectrum_cmd(&self) -> Result<(), CliError> {
        let spec = self.spectrum(self.cfg.eps)?;
        let mut outputs = vec![self.table("spectrum.csv", |w| write_spectrum_csv(&spec, &self.prov, w))?];
        let mut result = json!({
            "eps": self.cfg.eps,
            "dimension": spec.len(),
            "max_residual": spec.max_residual(),
            "rightmost": spec.eigenvalues.first().map(pair),
        });
        if let Some(mu) = self.cfg.mu_hat {
            let delta = self.delta(mu);
            result["unstable"] = unstable_set(&spec, mu, delta).iter().map(pair).collect();
            result["delta"] = json!(delta);
        }
        if !self.cfg.n_sweep.is_empty() {
            let mu = self.cfg.mu_hat.unwrap_or(0.0);
            let rows = essential_radius_diagnostic(&self.flow, self.cfg.t, &self.cfg.n_sweep, mu, self.delta(mu))?;
            outputs.push(self.table("radius.csv", |w| write_radius_csv(&rows, &self.prov, w))?);
            result["n_sweep"] = serde_json::to_value(&rows).map_err(|e| CliError::Io(e.to_string()))?;
        }
        self.manifest("spectrum", outputs, result)
    }

    pub fn branch(&self) -> Result<(), CliError> {
        let (mu, source) = self.mu_hat()?;
        let delta = self.delta(mu);
        let spec = self.spectrum(0.0)?;
        let unstable = unstable_set(&spec, mu, delta);
        let lambda0 = match self.cfg.lambda0 {
            Some([re, im]) => cx(re, im),
            None => match unstable.first() {
                Some(l) => *l,
                None => {
                    let result = json!({ "mu_hat": mu, "mu_source": source, "delta": delta, "unstable": [] });
                    self.manifest("branch", vec![], result)?;
                    return Err(CliError::Empty(format!(
                        "no eigenvalue of the inviscid operator above mu_hat + delta = {:.6}",
                        mu + delta
                    )));
                }
            },
        };
        let (radius, nodes) = match &self.cfg.contour {
            Some(c) => (c.radius, c.nodes),
            None => {
                let r = isolation_radius(&spec.eigenvalues, lambda0, self.cfg.tolerances.cluster);
                (if r.is_finite() { r } else { 0.5 }, DEFAULT_NODES)
            }
        };
        let ms = self.modeset(self.cfg.cutoff)?;
        let curve = continue_in_viscosity(&self.flow, &ms, lambda0, radius, &self.cfg.eps_grid, nodes)?;
        let csv = self.table("branch.csv", |w| write_branch_csv(&curve, &self.prov, w))?;
        let points: Vec<Value> = curve
            .points
            .iter()
            .map(|p| {
                json!({
                    "eps": p.eps,
                    "lambda": p.lambda.as_ref().map(pair),
                    "lambda_distance": p.lambda.map(|l| (l - lambda0).norm()),
                    "multiplicity": p.multiplicity,
                    "projection_distance": p.projection_distance,
                    "flag": p.flag,
                })
            })
            .collect();
        let result = json!({
            "mu_hat": mu,
            "mu_source": source,
            "delta": delta,
            "unstable": unstable.iter().map(pair).collect::<Vec<_>>(),
            "lambda0": pair(&lambda0),
            "radius": radius,
            "nodes": nodes,
            "multiplicity0": curve.multiplicity0,
            "points": points,
        });
        self.manifest("branch", vec![csv], result)
    }

    pub fn riesz(&self) -> Result<(), CliError> {
        let ms = self.modeset(self.cfg.cutoff)?;
        let op = assemble(&self.flow, &ms, self.cfg.eps)?;
        let (center, radius, nodes) = match &self.cfg.contour {
            Some(c) => (cx(c.center[0], c.center[1]), c.radius, c.nodes),
            None => {
                let spec = eigen_decompose(&op)?;
                let c = spec.eigenvalues[0];
                let r = isolation_radius(&spec.eigenvalues, c, self.cfg.tolerances.cluster);
                (c, if r.is_finite() { r } else { 0.5 }, DEFAULT_NODES)
            }
        };
        let p = riesz_projection(&op, center, radius, nodes)?;
        let m = multiplicity(&p)?;
        let mut buf = Vec::new();
        {
            let mut wr = csv::Writer::from_writer(&mut buf);
            wr.write_record(["index", "re", "im", "config_hash", "version"]).map_err(csv_err)?;
            for (i, l) in p.enclosed.iter().enumerate() {
                wr.write_record([i.to_string(), l.re.to_string(), l.im.to_string(), self.prov.config_hash.clone(), VERSION.into()])
                    .map_err(csv_err)?;
            }
            wr.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        self.write_file("riesz.csv", &buf)?;
        let result = json!({
            "eps": self.cfg.eps,
            "center": pair(&center),
            "radius": radius,
            "nodes": nodes,
            "trace": pair(&p.trace),
            "multiplicity": m,
            "idempotency_defect": p.idempotency_defect,
            "norm": p.norm(),
            "enclosed": p.enclosed.iter().map(pair).collect::<Vec<_>>(),
        });
        self.manifest("riesz", vec!["riesz.csv".into()], result)
    }

    pub fn packet(&self) -> Result<(), CliError> {
        let pc = &self.cfg.packet;
        let grid = pc.grid.unwrap_or(4 * self.cfg.cutoff);
        let mut exp = PacketExperiment::new(&self.flow, self.cfg.t, self.cfg.cutoff, grid)?;
        let (rows, fit) = decomposition_sweep(&mut exp, &pc.xi0, &pc.inv_deltas, &pc.eps_values)?;
        let csv = self.table("packet.csv", |w| write_packet_csv(&rows, &self.prov, w))?;
        let result = json!({
            "grid": grid,
            "rows": rows,
            "fit": fit,
        });
        self.manifest("packet", vec![csv], result)
    }
}

fn pair(z: &ComplexF64) -> [f64; 2] {
    [z.re, z.im]
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf).or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."))
}
