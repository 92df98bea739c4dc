//! Run configuration: parsing, validation, hashing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use visclimit::flows::SteadyFlow;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum FlowSpec {
    Zero,
    Shear { m: i32, amplitude: f64 },
    Kolmogorov { m: i32, amplitude: f64 },
    Cellular { amplitude: f64 },
    /// Coefficients read from a JSON file, relative to the config file.
    Custom { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contour {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    #[serde(default = "default_xi0")]
    pub xi0: Vec<i32>,
    #[serde(default = "default_inv_deltas")]
    pub inv_deltas: Vec<u32>,
    #[serde(default = "default_packet_eps")]
    pub eps_values: Vec<f64>,
    /// Points per axis of the transform grid; at least 4 x cutoff.
    pub grid: Option<usize>,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self { xi0: default_xi0(), inv_deltas: default_inv_deltas(), eps_values: default_packet_eps(), grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_ray_tol")]
    pub ray: f64,
    /// Eigenvalues closer than this count as one cluster when sizing the contour.
    #[serde(default = "default_cluster_tol")]
    pub cluster: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ray: default_ray_tol(), cluster: default_cluster_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: FlowSpec,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    /// Viscosity for `spectrum`, `riesz`.
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    pub contour: Option<Contour>,
    /// Margin above the sampled exponent; defaults to `0.1 max(1, |mu|)`.
    pub delta: Option<f64>,
    /// Pins the exponent used for filtering instead of sampling it.
    pub mu_hat: Option<f64>,
    /// Pins the inviscid eigenvalue followed by `branch`.
    pub lambda0: Option<[f64; 2]>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub weight_m: u32,
    #[serde(default = "default_true")]
    pub fixed_point_seeds: bool,
    #[serde(default)]
    pub seed: u64,
    /// Time of the propagators in `packet` and the N-sweep.
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub packet: PacketConfig,
    /// Cutoffs of the essential-radius sweep run by `spectrum`.
    #[serde(default)]
    pub n_sweep: Vec<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub output: Option<PathBuf>,
}

fn default_nodes() -> usize {
    visclimit::spectra::DEFAULT_NODES
}
fn default_xi0() -> Vec<i32> {
    vec![1, 0]
}
fn default_inv_deltas() -> Vec<u32> {
    vec![4, 8, 16]
}
fn default_packet_eps() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn default_ray_tol() -> f64 {
    1e-9
}
fn default_cluster_tol() -> f64 {
    1e-6
}
fn default_dim() -> usize {
    2
}
fn default_cutoff() -> usize {
    16
}
fn default_eps_grid() -> Vec<f64> {
    vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
}
fn default_horizon() -> f64 {
    200.0
}
fn default_samples() -> usize {
    64
}
fn default_true() -> bool {
    true
}
fn default_t() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let FlowSpec::Custom { path: p } = &mut cfg.flow {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(2..=3).contains(&self.dim) {
            return bad(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.cutoff == 0 {
            return bad("cutoff must be positive".into());
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be a non-negative number, got {}", self.eps));
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| *e < 0.0) {
            return bad("eps_grid must be a non-empty list of non-negative viscosities".into());
        }
        if self.eps_grid.windows(2).any(|w| w[0] <= w[1]) {
            return bad("eps_grid must be strictly decreasing".into());
        }
        if let Some(c) = &self.contour {
            if c.radius <= 0.0 || c.nodes < 16 {
                return bad("contour needs a positive radius and at least 16 nodes".into());
            }
        }
        if self.delta.is_some_and(|d| d <= 0.0) {
            return bad("delta must be positive".into());
        }
        if self.horizon <= 0.0 || self.samples == 0 {
            return bad("horizon and samples must be positive".into());
        }
        if self.t < 0.0 {
            return bad("t must be non-negative".into());
        }
        if self.packet.xi0.len() != self.dim || self.packet.xi0.iter().all(|&c| c == 0) {
            return bad(format!("packet.xi0 must be a nonzero {}-vector", self.dim));
        }
        if self.n_sweep.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_sweep must be increasing".into());
        }
        match &self.flow {
            FlowSpec::Shear { m, .. } | FlowSpec::Kolmogorov { m, .. } if *m < 1 => bad("flow wave number must be >= 1".into()),
            FlowSpec::Custom { path } if !path.exists() => bad(format!("custom flow file {} not found", path.display())),
            _ => Ok(()),
        }
    }

    pub fn flow(&self) -> Result<SteadyFlow<f64>, CliError> {
        let f = match &self.flow {
            FlowSpec::Zero => SteadyFlow::zero(self.dim),
            FlowSpec::Shear { m, amplitude } => SteadyFlow::shear(self.dim, *m, *amplitude),
            FlowSpec::Kolmogorov { m, amplitude } => SteadyFlow::kolmogorov(self.dim, *m, *amplitude),
            FlowSpec::Cellular { amplitude } => SteadyFlow::cellular(self.dim, *amplitude),
            FlowSpec::Custom { path } => SteadyFlow::from_json_file(path),
        };
        let f = f.map_err(|e| CliError::Config(format!("flow: {e}")))?;
        if f.dim() != self.dim {
            return Err(CliError::Config(format!("flow has dimension {}, config says {}", f.dim(), self.dim)));
        }
        Ok(f)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
