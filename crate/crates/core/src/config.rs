//! Flat pipeline configuration and per-stage configuration hashes.
//!
//! The config file is TOML with one `key = value` per field. Each artifact
//! records the hash of the settings that produced it, so a stage refuses
//! inputs built under different upstream settings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::balance::SmoteConfig;
use crate::emd::EmdConfig;
use crate::error::{invalid, Error, Result};
use crate::eval::CvConfig;
use crate::preprocess::FilterChainConfig;
use crate::ranking::ForestConfig;
use crate::svm::{GridObjective, GridSearchSpec, SvmParams};
use crate::wfdb::{RhythmVocabulary, WindowConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,

    pub episode_length_s: f64,
    pub hop_s: f64,
    pub channel: usize,
    pub vf_fraction: f64,
    pub annotator: String,

    pub ma_order: usize,
    pub hp_cutoff_hz: f64,
    pub hp_order: usize,
    pub lp_cutoff_hz: f64,
    pub lp_order: usize,

    pub emd_alpha: f64,
    pub emd_beta: f64,
    pub emd_max_imfs: usize,
    pub sift_sd_threshold: f64,
    pub max_sift_iterations: usize,
    pub noise_level_abs: bool,
    pub invert_nlcr_branch: bool,

    pub feature_fraction: f64,
    pub forest_trees: usize,
    /// 0 means `round(sqrt(dim))`.
    pub forest_max_features: usize,
    /// 0 means unlimited.
    pub forest_max_depth: usize,
    pub forest_min_samples_leaf: usize,
    pub rank_subsample_vf: usize,
    pub rank_subsample_not_vf: usize,

    pub smote_enabled: bool,
    pub smote_k: usize,
    pub smote_ratio: f64,
    pub smote_within_folds: bool,
    /// Oversample in the full feature space before masking.
    pub smote_full_space: bool,

    pub svm_c: f64,
    pub svm_gamma: f64,
    pub svm_tol: f64,
    pub svm_max_iterations: u64,
    pub svm_cache_mb: usize,

    pub cv_k: usize,
    pub cv_stratified: bool,

    pub grid_c_values: Vec<f64>,
    pub grid_gamma_values: Vec<f64>,
    pub grid_train_vf: usize,
    pub grid_train_not_vf: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let window = WindowConfig::default();
        let filter = FilterChainConfig::default();
        let emd = EmdConfig::default();
        let forest = ForestConfig::default();
        let smote = SmoteConfig::default();
        let svm = SvmParams::default();
        let grid = GridSearchSpec::default();
        Self {
            seed: 0,
            episode_length_s: window.episode_length_s,
            hop_s: window.hop_s,
            channel: window.channel,
            vf_fraction: window.vf_fraction,
            annotator: "atr".into(),
            ma_order: filter.ma_order,
            hp_cutoff_hz: filter.hp_cutoff_hz,
            hp_order: filter.hp_order,
            lp_cutoff_hz: filter.lp_cutoff_hz,
            lp_order: filter.lp_order,
            emd_alpha: emd.alpha,
            emd_beta: emd.beta,
            emd_max_imfs: emd.max_imfs,
            sift_sd_threshold: emd.sift_sd_threshold,
            max_sift_iterations: emd.max_sift_iterations,
            noise_level_abs: emd.noise_level_abs,
            invert_nlcr_branch: emd.invert_nlcr_branch,
            feature_fraction: 0.24,
            forest_trees: forest.n_trees,
            forest_max_features: 0,
            forest_max_depth: 0,
            forest_min_samples_leaf: forest.min_samples_leaf,
            rank_subsample_vf: 3000,
            rank_subsample_not_vf: 5000,
            smote_enabled: true,
            smote_k: smote.k_neighbors,
            smote_ratio: smote.target_ratio,
            smote_within_folds: false,
            smote_full_space: false,
            svm_c: svm.c,
            svm_gamma: svm.gamma,
            svm_tol: svm.tol,
            svm_max_iterations: svm.max_iterations,
            svm_cache_mb: svm.cache_bytes >> 20,
            cv_k: 10,
            cv_stratified: true,
            grid_c_values: grid.c_values,
            grid_gamma_values: grid.gamma_values,
            grid_train_vf: 3000,
            grid_train_not_vf: 5000,
        }
    }
}

/// Pipeline stages whose outputs are persisted. Each stage's hash covers its
/// own settings and those of every earlier stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Episodes,
    Features,
    Ranking,
    Model,
}

const EPISODE_KEYS: &[&str] = &["episode_length_s", "hop_s", "channel", "vf_fraction", "annotator"];
const FEATURE_KEYS: &[&str] = &[
    "ma_order",
    "hp_cutoff_hz",
    "hp_order",
    "lp_cutoff_hz",
    "lp_order",
    "emd_alpha",
    "emd_beta",
    "emd_max_imfs",
    "sift_sd_threshold",
    "max_sift_iterations",
    "noise_level_abs",
    "invert_nlcr_branch",
];
const RANKING_KEYS: &[&str] = &[
    "seed",
    "feature_fraction",
    "forest_trees",
    "forest_max_features",
    "forest_max_depth",
    "forest_min_samples_leaf",
    "rank_subsample_vf",
    "rank_subsample_not_vf",
];
const MODEL_KEYS: &[&str] = &[
    "smote_enabled",
    "smote_k",
    "smote_ratio",
    "smote_full_space",
    "svm_c",
    "svm_gamma",
    "svm_tol",
    "svm_max_iterations",
];

impl Stage {
    fn keys(self) -> Vec<&'static str> {
        let groups: &[&[&str]] = match self {
            Stage::Episodes => &[EPISODE_KEYS],
            Stage::Features => &[EPISODE_KEYS, FEATURE_KEYS],
            Stage::Ranking => &[EPISODE_KEYS, FEATURE_KEYS, RANKING_KEYS],
            Stage::Model => &[EPISODE_KEYS, FEATURE_KEYS, RANKING_KEYS, MODEL_KEYS],
        };
        groups.iter().flat_map(|g| g.iter().copied()).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Episodes => "episodes",
            Stage::Features => "features",
            Stage::Ranking => "ranking",
            Stage::Model => "model",
        }
    }
}

/// Stage offsets mixed into the base seed so stages draw independent streams.
const FOREST_SEED: u64 = 1;
const SMOTE_SEED: u64 = 2;
const CV_SEED: u64 = 3;
const SUBSAMPLE_SEED: u64 = 4;
const HOLDOUT_SEED: u64 = 5;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Malformed(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        if !(self.episode_length_s > 0.0) || !(self.hop_s > 0.0) {
            return Err(invalid("episode_length_s", "episode length and hop must be positive"));
        }
        if !(0.0..1.0).contains(&self.vf_fraction) {
            return Err(invalid("vf_fraction", "must be in [0, 1)"));
        }
        self.emd().validate()?;
        self.forest().validate()?;
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(invalid("feature_fraction", "must be in (0, 1]"));
        }
        self.smote().validate()?;
        self.svm().validate()?;
        if self.cv_k < 2 {
            return Err(invalid("cv_k", "need at least 2 folds"));
        }
        self.grid().validate()?;
        Ok(())
    }

    /// Hex SHA-256 over the sorted `key=value` lines relevant to `stage`.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let value = toml::Value::try_from(self).expect("flat config always serializes");
        let table = value.as_table().expect("config is a table");
        let mut keys = stage.keys();
        keys.sort_unstable();
        let mut hasher = Sha256::new();
        hasher.update(stage.name().as_bytes());
        for k in keys {
            hasher.update(format!("\n{k}={}", table[k]).as_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            episode_length_s: self.episode_length_s,
            hop_s: self.hop_s,
            channel: self.channel,
            vf_fraction: self.vf_fraction,
        }
    }

    pub fn vocabulary(&self) -> RhythmVocabulary {
        RhythmVocabulary::default()
    }

    pub fn filter(&self) -> FilterChainConfig {
        FilterChainConfig {
            ma_order: self.ma_order,
            hp_cutoff_hz: self.hp_cutoff_hz,
            hp_order: self.hp_order,
            lp_cutoff_hz: self.lp_cutoff_hz,
            lp_order: self.lp_order,
        }
    }

    pub fn emd(&self) -> EmdConfig {
        EmdConfig {
            alpha: self.emd_alpha,
            beta: self.emd_beta,
            max_imfs: self.emd_max_imfs,
            sift_sd_threshold: self.sift_sd_threshold,
            max_sift_iterations: self.max_sift_iterations,
            noise_level_abs: self.noise_level_abs,
            invert_nlcr_branch: self.invert_nlcr_branch,
        }
    }

    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.forest_trees,
            max_features: (self.forest_max_features > 0).then_some(self.forest_max_features),
            max_depth: (self.forest_max_depth > 0).then_some(self.forest_max_depth),
            min_samples_leaf: self.forest_min_samples_leaf,
            seed: self.seed.wrapping_add(FOREST_SEED),
        }
    }

    pub fn smote(&self) -> SmoteConfig {
        SmoteConfig {
            k_neighbors: self.smote_k,
            target_ratio: self.smote_ratio,
            seed: self.seed.wrapping_add(SMOTE_SEED),
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            gamma: self.svm_gamma,
            tol: self.svm_tol,
            max_iterations: self.svm_max_iterations,
            cache_bytes: self.svm_cache_mb << 20,
        }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            k: self.cv_k,
            stratified: self.cv_stratified,
            seed: self.seed.wrapping_add(CV_SEED),
            svm: self.svm(),
            smote: self.smote_enabled.then(|| self.smote()),
            smote_within_folds: self.smote_within_folds,
        }
    }

    pub fn grid(&self) -> GridSearchSpec {
        GridSearchSpec {
            c_values: self.grid_c_values.clone(),
            gamma_values: self.grid_gamma_values.clone(),
            objective: GridObjective::GMean,
        }
    }

    pub fn subsample_seed(&self) -> u64 {
        self.seed.wrapping_add(SUBSAMPLE_SEED)
    }

    pub fn holdout_seed(&self) -> u64 {
        self.seed.wrapping_add(HOLDOUT_SEED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.svm_c, c.svm_gamma, c.feature_fraction), (100.0, 45.0, 0.24));
        assert_eq!((c.episode_length_s, c.hop_s, c.cv_k), (5.0, 1.0, 10));
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_uses_defaults_and_unknown_keys_fail() {
        let c = PipelineConfig::from_toml("svm_c = 10.0\nseed = 7\n").unwrap();
        assert_eq!(c.svm_c, 10.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.svm_gamma, 45.0);
        assert!(PipelineConfig::from_toml("svm_cc = 1.0\n").is_err());
        assert!(PipelineConfig::from_toml("feature_fraction = 0.0\n").is_err());
    }

    #[test]
    fn stage_hashes_track_upstream_changes_only() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            svm_c: 10.0,
            ..a.clone()
        };
        assert_eq!(a.stage_hash(Stage::Features), b.stage_hash(Stage::Features));
        assert_ne!(a.stage_hash(Stage::Model), b.stage_hash(Stage::Model));
        let c = PipelineConfig {
            emd_alpha: 0.1,
            ..a.clone()
        };
        assert_eq!(a.stage_hash(Stage::Episodes), c.stage_hash(Stage::Episodes));
        assert_ne!(a.stage_hash(Stage::Features), c.stage_hash(Stage::Features));
        assert_ne!(a.stage_hash(Stage::Model), c.stage_hash(Stage::Model));
        let d = PipelineConfig { cv_k: 5, ..a.clone() };
        assert_eq!(a.stage_hash(Stage::Model), d.stage_hash(Stage::Model));
        assert_eq!(a.stage_hash(Stage::Model).len(), 64);
    }

    proptest! {
        #[test]
        fn toml_round_trip(
            seed in 0u64..=i64::MAX as u64,
            t in 0.5f64..20.0,
            alpha in 1e-4f64..1.0,
            frac in 1e-3f64..=1.0,
            c in 1e-3f64..1e4,
            gamma in 1e-3f64..1e3,
            flags in prop::array::uniform4(any::<bool>()),
            grid in prop::collection::vec(1e-3f64..1e3, 1..6),
        ) {
            let cfg = PipelineConfig {
                seed,
                episode_length_s: t,
                emd_alpha: alpha,
                feature_fraction: frac,
                svm_c: c,
                svm_gamma: gamma,
                noise_level_abs: flags[0],
                smote_within_folds: flags[1],
                cv_stratified: flags[2],
                smote_full_space: flags[3],
                grid_gamma_values: grid,
                ..PipelineConfig::default()
            };
            let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.stage_hash(Stage::Model), cfg.stage_hash(Stage::Model));
        }
    }
}
