//! End-to-end chain: episode -> filter chain -> EMD -> frequency-domain
//! similarity features -> forest ranking -> mask -> SMOTE -> SVM.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::balance::balance_dataset;
use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::emd::{decompose, select_components};
use crate::error::{Error, Result};
use crate::eval::{run_cross_validation, EvalReport};
use crate::preprocess::preprocess_episode;
use crate::ranking::{feature_importances, select_top_fraction, train_forest, FeatureMask, RandomForest};
use crate::spectral::{frequency_similarity_features, DftPlan};
use crate::svm::{self, SvmModel};
use crate::wfdb::{EcgEpisode, EpisodeLabel, EpisodeSource};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub source: EpisodeSource,
    pub label: EpisodeLabel,
    /// IMF block then residue block, `2N` values.
    pub features: Vec<f64>,
}

/// Features of one episode, reusing `plan` when its length matches.
pub fn episode_features_with(episode: &EcgEpisode, cfg: &PipelineConfig, plan: Option<&DftPlan>) -> Result<Vec<f64>> {
    let x = preprocess_episode(episode, &cfg.filter())?;
    let emd = cfg.emd();
    let set = decompose(&x, &emd);
    let sel = select_components(&x, &set, &emd)?;
    let owned;
    let plan = match plan {
        Some(p) if p.len() == x.len() => p,
        _ => {
            owned = DftPlan::new(x.len())?;
            &owned
        }
    };
    let fv = frequency_similarity_features(
        &plan.transform(&x)?,
        &plan.transform(&sel.imf)?,
        &plan.transform(&sel.residue)?,
    )?;
    Ok(fv.concatenated())
}

pub fn episode_features(episode: &EcgEpisode, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    episode_features_with(episode, cfg, None)
}

/// Features for every episode in parallel, in input order. Episodes that
/// fail are returned separately with their error.
pub fn compute_features(
    episodes: &[EcgEpisode],
    cfg: &PipelineConfig,
) -> (Vec<FeatureRow>, Vec<(EpisodeSource, Error)>) {
    let plan = episodes.first().and_then(|e| DftPlan::new(e.samples.len()).ok());
    let results: Vec<Result<FeatureRow, (EpisodeSource, Error)>> = episodes
        .par_iter()
        .map(|ep| {
            episode_features_with(ep, cfg, plan.as_ref())
                .map(|features| FeatureRow {
                    source: ep.source.clone(),
                    label: ep.label,
                    features,
                })
                .map_err(|e| (ep.source.clone(), e))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err((src, e)) => {
                log::warn!("skipping episode {}@{}: {e}", src.record, src.start);
                failed.push((src, e));
            }
        }
    }
    (rows, failed)
}

pub fn dataset_from_rows(rows: &[FeatureRow]) -> Result<Dataset> {
    Dataset::new(
        rows.iter().map(|r| r.features.clone()).collect(),
        rows.iter().map(|r| r.label).collect(),
    )
}

/// Random per-class subsample of at most `rank_subsample_vf` VF and
/// `rank_subsample_not_vf` NOT_VF rows.
pub fn ranking_subsample(data: &Dataset, cfg: &PipelineConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.subsample_seed());
    let mut keep = Vec::new();
    for (label, want) in [
        (EpisodeLabel::Vf, cfg.rank_subsample_vf),
        (EpisodeLabel::NotVf, cfg.rank_subsample_not_vf),
    ] {
        let mut idx = data.indices_of(label);
        if idx.len() < want {
            log::info!(
                "ranking subsample: only {} {label} rows available (wanted {want})",
                idx.len()
            );
        }
        idx.shuffle(&mut rng);
        idx.truncate(want);
        keep.extend(idx);
    }
    keep.sort_unstable();
    data.subset(&keep)
}

#[derive(Debug, Clone)]
pub struct RankingOutcome {
    pub forest: RandomForest,
    pub importances: Vec<f64>,
    pub mask: FeatureMask,
}

pub fn rank(data: &Dataset, cfg: &PipelineConfig) -> Result<RankingOutcome> {
    let sub = ranking_subsample(data, cfg);
    let forest = train_forest(&sub.features, &sub.labels, &cfg.forest())?;
    let importances = feature_importances(&forest);
    let mask = select_top_fraction(&importances, cfg.feature_fraction)?;
    log::info!(
        "ranked {} features on {} rows; kept {} (oob accuracy {:?})",
        forest.n_features,
        sub.len(),
        mask.len(),
        forest.oob_accuracy
    );
    Ok(RankingOutcome {
        forest,
        importances,
        mask,
    })
}

fn check_mask(data: &Dataset, mask: &FeatureMask) -> Result<()> {
    if data.dim() != mask.dim {
        return Err(Error::DimensionMismatch {
            expected: mask.dim,
            actual: data.dim(),
        });
    }
    Ok(())
}

/// Masked, optionally SMOTE-balanced training set.
pub fn training_set(data: &Dataset, mask: &FeatureMask, cfg: &PipelineConfig) -> Result<Dataset> {
    check_mask(data, mask)?;
    if !cfg.smote_enabled {
        return Ok(data.project(&mask.selected_indices));
    }
    if cfg.smote_full_space {
        let mut full = data.clone();
        balance_dataset(&mut full, &cfg.smote())?;
        Ok(full.project(&mask.selected_indices))
    } else {
        let mut masked = data.project(&mask.selected_indices);
        balance_dataset(&mut masked, &cfg.smote())?;
        Ok(masked)
    }
}

pub fn train_model(data: &Dataset, mask: &FeatureMask, cfg: &PipelineConfig) -> Result<SvmModel> {
    let train = training_set(data, mask, cfg)?;
    svm::train(&train.features, &train.labels, &cfg.svm())
}

/// Cross-validation on the masked feature rows. SMOTE placement follows
/// `smote_within_folds` and `smote_full_space`; full-space synthesis only
/// applies when oversampling happens before splitting.
pub fn cross_validate(data: &Dataset, mask: &FeatureMask, cfg: &PipelineConfig) -> Result<EvalReport> {
    check_mask(data, mask)?;
    let mut cv = cfg.cv();
    let masked = if cfg.smote_enabled && cfg.smote_full_space && !cfg.smote_within_folds {
        cv.smote = None;
        training_set(data, mask, cfg)?
    } else {
        if cfg.smote_full_space && cfg.smote_within_folds {
            log::warn!("smote_full_space is ignored when smote_within_folds is set");
        }
        data.project(&mask.selected_indices)
    };
    run_cross_validation(&masked, &cv, cfg.to_toml())
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub rows: Vec<FeatureRow>,
    pub skipped: usize,
    pub ranking: RankingOutcome,
    pub report: EvalReport,
}

/// Features, ranking and cross-validation in one call.
pub fn run_pipeline(episodes: &[EcgEpisode], cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let (rows, failed) = compute_features(episodes, cfg);
    if rows.is_empty() {
        return Err(Error::EmptyInput("no episode produced features"));
    }
    let data = dataset_from_rows(&rows)?;
    let ranking = rank(&data, cfg)?;
    let report = cross_validate(&data, &ranking.mask, cfg)?;
    Ok(PipelineOutcome {
        rows,
        skipped: failed.len(),
        ranking,
        report,
    })
}
