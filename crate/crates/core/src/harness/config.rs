use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticParams;
use crate::backend::{BackendProfile, OracleNoise};
use crate::domain::{LayoutPolicy, DEFAULT_NON_PERPENDICULAR_LAYOUTS};
use crate::error::HarnessError;
use crate::metrics::MetricConfig;
use crate::pipeline::StageConfig;
use crate::postprocess::{EnsembleConfig, SnapConfig};

/// Everything a run needs besides the data. Loaded from TOML; every table
/// and key is optional.
///
/// ```toml
/// concurrency = 8
/// non_perpendicular_layouts = ["highway", "tunnel", "grade-separated intersection"]
///
/// [stage]
/// alpha = 0.35
/// delta_max = 1.5
/// stages = "123"
///
/// [profile_a]
/// name = "large"
/// endpoint = "http://localhost:8000/v1"
/// model_id = "qwen-vl-32b"
///
/// [ensemble]
/// lambda = 0.9
///
/// [snap]
/// delta_snap = 0.2
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub concurrency: usize,
    pub non_perpendicular_layouts: Vec<String>,
    /// Directory with `stage1.txt`, `stage2.txt`, `stage3.txt`, `scene_hint.txt`.
    pub prompts_dir: Option<PathBuf>,
    pub stage: StageConfig,
    pub profile_a: BackendProfile,
    pub profile_b: Option<BackendProfile>,
    /// Noise model used when profile A points at the oracle.
    pub oracle_a: OracleNoise,
    pub oracle_b: OracleNoise,
    pub ensemble: EnsembleConfig,
    pub snap: SnapConfig,
    pub metrics: MetricConfig,
    pub synthetic: SyntheticParams,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            concurrency: 4,
            non_perpendicular_layouts: DEFAULT_NON_PERPENDICULAR_LAYOUTS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            prompts_dir: None,
            stage: StageConfig::default(),
            profile_a: BackendProfile::oracle("A"),
            profile_b: None,
            oracle_a: OracleNoise::default(),
            oracle_b: OracleNoise {
                seed: 1,
                ..OracleNoise::default()
            },
            ensemble: EnsembleConfig::default(),
            snap: SnapConfig::default(),
            metrics: MetricConfig::default(),
            synthetic: SyntheticParams::default(),
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{path:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.concurrency == 0 {
            return Err(HarnessError::Config("concurrency must be >= 1".into()));
        }
        self.stage.validate().map_err(HarnessError::Config)?;
        self.snap.validate().map_err(HarnessError::Config)?;
        self.metrics.validate()?;
        if !(0.0..=1.0).contains(&self.ensemble.lambda) {
            return Err(HarnessError::Config(format!(
                "ensemble.lambda must lie in [0, 1], got {}",
                self.ensemble.lambda
            )));
        }
        self.synthetic.validate()?;
        Ok(())
    }

    pub fn layout_policy(&self) -> LayoutPolicy {
        LayoutPolicy::new(&self.non_perpendicular_layouts)
    }

    /// Sets the seed of both oracle noise models (B gets `seed + 1`).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.oracle_a.seed = seed;
        self.oracle_b.seed = seed.wrapping_add(1);
        self.synthetic.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        let cfg: HarnessConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, HarnessConfig::default());
    }

    #[test]
    fn partial_toml_overrides() {
        let cfg: HarnessConfig = toml::from_str(
            r#"
            concurrency = 2
            [stage]
            alpha = 0.5
            stages = "13"
            [profile_b]
            name = "small"
            endpoint = "http://localhost:9000/v1"
            model_id = "small-vl"
            [oracle_a]
            stage1_time_sigma_s = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.concurrency, 2);
        assert_eq!(cfg.stage.alpha, 0.5);
        assert_eq!(cfg.stage.delta_max, 1.5);
        assert!(!cfg.stage.stages.refine_time);
        assert_eq!(cfg.profile_b.unwrap().retries, 3);
        assert_eq!(cfg.oracle_a.stage1_time_sigma_s, 1.0);
        assert!(cfg.profile_a.is_oracle());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<HarnessConfig>("concurency = 2").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = HarnessConfig::default();
        cfg.concurrency = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = HarnessConfig::default();
        cfg.ensemble.lambda = 1.5;
        assert!(cfg.validate().is_err());
    }
}
