//! Experiment configuration: one JSON document holding the space, the
//! control function, the refinement schedule, seeds and tolerances.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::delone::ControlFunction;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json, SpaceConfig};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Seeds {
    /// Coordinates of the greedy sampling seed point.
    pub greedy: Vec<f64>,
    /// Stream seed for random operator instances.
    pub rng: u64,
}

/// Assertion tolerances, module defaults. All must be positive.
/// Omitted fields fall back to the defaults when deserialized.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Tolerances {
    pub pou_row_sum: f64,
    pub pou_support: f64,
    pub pou_plateau: f64,
    pub gram: f64,
    pub isometry: f64,
    pub projector: f64,
    pub beta_alpha: f64,
    pub strong_slack: f64,
    pub strong_final_rel: f64,
    pub rho_triangle: f64,
    pub reconstruction: f64,
    pub mult_final: f64,
    pub norm_identity: f64,
    pub norm_final_rel: f64,
    pub field_contraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            pou_row_sum: 1e-12,
            pou_support: 1e-15,
            pou_plateau: 1e-12,
            gram: 1e-9,
            isometry: 1e-8,
            projector: 1e-8,
            beta_alpha: 1e-10,
            strong_slack: 1e-8,
            strong_final_rel: 0.05,
            rho_triangle: 1e-12,
            reconstruction: 1e-6,
            mult_final: 0.1,
            norm_identity: 1e-8,
            norm_final_rel: 0.05,
            field_contraction: 1e-9,
        }
    }
}

impl Tolerances {
    fn all(&self) -> [f64; 15] {
        [
            self.pou_row_sum,
            self.pou_support,
            self.pou_plateau,
            self.gram,
            self.isometry,
            self.projector,
            self.beta_alpha,
            self.strong_slack,
            self.strong_final_rel,
            self.rho_triangle,
            self.reconstruction,
            self.mult_final,
            self.norm_identity,
            self.norm_final_rel,
            self.field_contraction,
        ]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub control: ControlFunction,
    /// Target covering radii per stage, strictly decreasing.
    pub schedule: Vec<f64>,
    pub seeds: Seeds,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Per-cell rank cutoff for the reconstruction experiment.
    pub block_rank: usize,
    /// Band of the random test operators.
    pub band: f64,
    /// Round-trip trials per stage for the compression identity.
    pub beta_alpha_trials: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            space: SpaceConfig {
                dim: 1,
                side: 1.0,
                grid_n: 1024,
                basepoint: vec![0.0],
            },
            control: ControlFunction::Linear { kappa: 0.5 },
            schedule: (1..=6).map(|n| 0.5f64.powi(n)).collect(),
            seeds: Seeds {
                greedy: vec![0.125],
                rng: 1,
            },
            tolerances: Tolerances::default(),
            block_rank: 2,
            band: 0.1,
            beta_alpha_trials: 20,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidArgument("empty schedule".into()));
        }
        if self.schedule.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidArgument(
                "schedule targets must be positive".into(),
            ));
        }
        for w in self.schedule.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::InvalidArgument(
                    "schedule must be strictly decreasing".into(),
                ));
            }
        }
        if self.seeds.greedy.len() != self.space.dim {
            return Err(Error::InvalidArgument(format!(
                "greedy seed has {} coordinates for a {}-dimensional space",
                self.seeds.greedy.len(),
                self.space.dim
            )));
        }
        if self.tolerances.all().iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        if !(self.band > 0.0) {
            return Err(Error::InvalidArgument("band must be positive".into()));
        }
        self.space.build().map(|_| ())
    }

    /// SHA-256 of the canonical JSON encoding; field order is fixed by the
    /// struct, so the hash is stable.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}
