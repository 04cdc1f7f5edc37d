use std::path::Path;

use scatterkit::dataset::DatasetConfig;
use scatterkit::inversion::ReconstructionConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs besides file paths. Loaded from TOML; command-line
/// flags are applied on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rho: f64,
    pub n_inv: usize,
    pub n_fwd: usize,
    pub p1: usize,
    pub q1: usize,
    pub p2: usize,
    pub q2: usize,
    pub delta: f64,
    /// Noise seed for `simulate`.
    pub seed: u64,
    pub reconstruction: ReconstructionConfig,
    pub dataset: DatasetSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub count: usize,
    pub train: Option<usize>,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            count: d.count,
            train: d.train,
            seed: d.seed,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            rho: d.rho,
            n_inv: d.n_inv,
            n_fwd: d.n_fwd,
            p1: d.p1,
            q1: d.q1,
            p2: d.p2,
            q2: d.q2,
            delta: d.delta,
            seed: 0,
            reconstruction: ReconstructionConfig::default(),
            dataset: DatasetSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            count: self.dataset.count,
            train: self.dataset.train,
            seed: self.dataset.seed,
            delta: self.delta,
            rho: self.rho,
            n_inv: self.n_inv,
            n_fwd: self.n_fwd,
            k: self.reconstruction.k,
            k0: self.reconstruction.k0,
            p1: self.p1,
            q1: self.q1,
            p2: self.p2,
            q2: self.q2,
            solver: self.reconstruction.solver,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_files() {
        let c: RunConfig = toml::from_str("n_inv = 40\n[reconstruction]\nmu = 0.5\n").unwrap();
        assert_eq!(c.n_inv, 40);
        assert_eq!(c.reconstruction.mu, 0.5);
        assert_eq!(c.reconstruction.iters_projected, 100);
        assert_eq!(c.p1, 32);
        assert!(toml::from_str::<RunConfig>("nonsense = 1").is_err());
        let text = toml::to_string(&RunConfig::default()).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    }
}
