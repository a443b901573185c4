use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vfdetect::balance::balance_dataset;
use vfdetect::dataset::class_counts;
use vfdetect::pipeline::{self, FeatureRow};
use vfdetect::svm::{grid_search, holdout_split};
use vfdetect::synth::{self, SynthCorpusConfig};
use vfdetect::wfdb::{self, csv as csv_episode, EcgEpisode, EpisodeLabel};
use vfdetect::{PipelineConfig, Stage};

use crate::args::{Format, GlobalArgs, SynthArgs, SynthKind};
use crate::artifact::{self, check_hash, FeatureCache, Kind, MaskFile, ModelFile};
use crate::InputError;

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

pub fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            PipelineConfig::from_toml(&text).with_context(|| format!("loading config {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(t) = g.episode_length {
        cfg.episode_length_s = t;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn require_out(g: &GlobalArgs, what: &str) -> Result<PathBuf> {
    g.out
        .clone()
        .ok_or_else(|| input_error(format!("--out is required to write the {what}")))
}

/// Report output: `--out` if given, stdout otherwise.
fn emit(g: &GlobalArgs, text: &str) -> Result<()> {
    match &g.out {
        Some(path) => {
            artifact::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<()> {
    artifact::write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {} ({} bytes)", path.display(), bytes.len());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn log_class_counts(what: &str, labels: &[EpisodeLabel]) {
    let (vf, not_vf) = class_counts(labels);
    let total = vf + not_vf;
    let pct = if total == 0 {
        0.0
    } else {
        100.0 * vf as f64 / total as f64
    };
    log::info!("{what}: {total} episodes, {vf} VF ({pct:.1}%), {not_vf} NOT_VF");
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes episodes as the binary cache, or as `.csv`/`.meta` pairs in the
/// `out` directory for `--format csv`.
fn write_episodes(g: &GlobalArgs, cfg: &PipelineConfig, out: &Path, episodes: &[EcgEpisode]) -> Result<()> {
    match g.format {
        Format::Binary => write_artifact(
            out,
            &artifact::encode_episodes(&cfg.stage_hash(Stage::Episodes), episodes),
        ),
        Format::Csv => {
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            for ep in episodes {
                let name = format!("{}_{}.csv", file_safe(&ep.source.record), ep.source.start);
                csv_episode::write_episode(&out.join(name), ep)?;
            }
            log::info!("wrote {} csv episodes to {}", episodes.len(), out.display());
            Ok(())
        }
    }
}

enum Input {
    Wfdb(PathBuf),
    Csv(PathBuf),
}

fn classify_input(path: &Path) -> Result<Input> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(Input::Csv(path.to_path_buf())),
        Some("hea") => Ok(Input::Wfdb(path.to_path_buf())),
        Some("dat") | Some("atr") => Ok(Input::Wfdb(path.with_extension(""))),
        _ if with_suffix(path, ".hea").is_file() => Ok(Input::Wfdb(path.to_path_buf())),
        _ => Err(input_error(format!(
            "{}: not a WFDB record (.hea) or CSV episode (.csv)",
            path.display()
        ))),
    }
}

fn expand_inputs(inputs: &[PathBuf]) -> Vec<Result<Input>> {
    let mut out = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = match fs::read_dir(path) {
                Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
                Err(e) => {
                    out.push(Err(anyhow::Error::new(e).context(format!("listing {}", path.display()))));
                    continue;
                }
            };
            entries.sort();
            out.extend(
                entries
                    .into_iter()
                    .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("hea") | Some("csv")))
                    .map(|p| classify_input(&p)),
            );
        } else {
            out.push(classify_input(path));
        }
    }
    out
}

fn ingest_one(input: &Input, cfg: &PipelineConfig) -> Result<(String, Vec<EcgEpisode>)> {
    match input {
        Input::Wfdb(path) => {
            let record = wfdb::read_record(path, &cfg.annotator, &cfg.vocabulary())
                .with_context(|| format!("reading record {}", path.display()))?;
            let episodes = wfdb::extract_episodes(&record, &cfg.window())
                .with_context(|| format!("windowing record {}", path.display()))?;
            Ok((record.header.record_name.clone(), episodes))
        }
        Input::Csv(path) => {
            let ep = csv_episode::read_episode(path).with_context(|| format!("reading {}", path.display()))?;
            if (ep.episode_length_s - cfg.episode_length_s).abs() > 1e-9 {
                return Err(input_error(format!(
                    "{}: episode length {} s differs from the configured {} s",
                    path.display(),
                    ep.episode_length_s,
                    cfg.episode_length_s
                )));
            }
            Ok((ep.source.record.clone(), vec![ep]))
        }
    }
}

pub fn ingest(g: &GlobalArgs, inputs: &[PathBuf]) -> Result<()> {
    if inputs.is_empty() {
        return Err(input_error("no inputs"));
    }
    let cfg = load_config(g)?;
    let out = require_out(g, "episode cache")?;
    let mut episodes = Vec::new();
    let mut failures = 0;
    for item in expand_inputs(inputs) {
        match item.and_then(|input| ingest_one(&input, &cfg)) {
            Ok((name, eps)) => {
                let labels: Vec<EpisodeLabel> = eps.iter().map(|e| e.label).collect();
                log_class_counts(&format!("record {name}"), &labels);
                episodes.extend(eps);
            }
            Err(e) => {
                failures += 1;
                log::error!("{e:#}");
            }
        }
    }
    if episodes.is_empty() {
        return Err(input_error(format!("no episodes ingested ({failures} inputs failed)")));
    }
    let labels: Vec<EpisodeLabel> = episodes.iter().map(|e| e.label).collect();
    log_class_counts("total", &labels);
    if failures > 0 {
        log::warn!("{failures} inputs failed and were skipped");
    }
    write_episodes(g, &cfg, &out, &episodes)
}

pub fn features(g: &GlobalArgs, episodes_path: &Path) -> Result<()> {
    let cfg = load_config(g)?;
    let out = require_out(g, "feature cache")?;
    let cache = artifact::read_episodes(episodes_path)?;
    check_hash(episodes_path, "episode", &cfg.stage_hash(Stage::Episodes), &cache.hash)?;
    if cache.episodes.is_empty() {
        return Err(input_error(format!(
            "{}: episode cache is empty",
            episodes_path.display()
        )));
    }
    let (rows, failed) = pipeline::compute_features(&cache.episodes, &cfg);
    if !failed.is_empty() {
        log::warn!("{} of {} episodes skipped", failed.len(), cache.episodes.len());
    }
    let dim = rows
        .first()
        .map(|r| r.features.len())
        .ok_or_else(|| input_error("no episode produced features"))?;
    if let Some(bad) = rows.iter().find(|r| r.features.len() != dim) {
        return Err(input_error(format!(
            "episode {}@{} gives {} features, others give {dim}; mixed sampling rates in one cache",
            bad.source.record,
            bad.source.start,
            bad.features.len()
        )));
    }
    log::info!("{} feature rows of dimension {dim}", rows.len());
    match g.format {
        Format::Binary => write_artifact(
            &out,
            &artifact::encode_features(&cfg.stage_hash(Stage::Features), dim, &rows),
        ),
        Format::Csv => write_artifact(&out, artifact::features_csv(dim, &rows).as_bytes()),
    }
}

fn load_features(path: &Path, cfg: &PipelineConfig) -> Result<(FeatureCache, vfdetect::Dataset)> {
    let cache = artifact::read_features(path)?;
    check_hash(path, "feature", &cfg.stage_hash(Stage::Features), &cache.hash)?;
    let data = pipeline::dataset_from_rows(&cache.rows).with_context(|| format!("loading {}", path.display()))?;
    Ok((cache, data))
}

fn load_mask(path: &Path, cfg: &PipelineConfig, features: &FeatureCache) -> Result<MaskFile> {
    let mask = artifact::read_mask(path)?;
    check_hash(path, "ranking", &cfg.stage_hash(Stage::Ranking), &mask.ranking_hash)?;
    check_hash(path, "feature", &features.hash, &mask.features_hash)?;
    if mask.mask.dim != features.dim {
        return Err(input_error(format!(
            "{}: mask is for {} features, the cache has {}",
            path.display(),
            mask.mask.dim,
            features.dim
        )));
    }
    Ok(mask)
}

pub fn rank(g: &GlobalArgs, features_path: &Path, forest_out: Option<&Path>) -> Result<()> {
    let cfg = load_config(g)?;
    let out = require_out(g, "feature mask")?;
    let (cache, data) = load_features(features_path, &cfg)?;
    let outcome = pipeline::rank(&data, &cfg)?;
    let ranking_hash = cfg.stage_hash(Stage::Ranking);
    let mask = MaskFile {
        ranking_hash: ranking_hash.clone(),
        features_hash: cache.hash.clone(),
        mask: outcome.mask,
    };
    write_artifact(&out, artifact::format_mask(&mask).as_bytes())?;
    write_artifact(
        &with_suffix(&out, ".importances"),
        artifact::format_importances(&outcome.importances).as_bytes(),
    )?;
    if let Some(path) = forest_out {
        write_artifact(path, &artifact::encode_forest(&ranking_hash, &outcome.forest))?;
    }
    println!(
        "selected {} of {} features (fraction {})",
        mask.mask.len(),
        mask.mask.dim,
        mask.mask.fraction
    );
    Ok(())
}

pub fn train(g: &GlobalArgs, features_path: &Path, mask_path: &Path) -> Result<()> {
    let cfg = load_config(g)?;
    let out = require_out(g, "model")?;
    let (cache, data) = load_features(features_path, &cfg)?;
    let mask = load_mask(mask_path, &cfg, &cache)?;
    log_class_counts("training features", &data.labels);
    let model = pipeline::train_model(&data, &mask.mask, &cfg)?;
    let file = ModelFile {
        model_hash: cfg.stage_hash(Stage::Model),
        features_hash: cache.hash,
        model,
        mask: mask.mask,
    };
    write_artifact(&out, &artifact::encode_model(&file))?;
    println!("{}", model_summary(&file));
    Ok(())
}

pub fn model_summary(m: &ModelFile) -> String {
    format!(
        "c={} gamma={} fraction={} features={} support_vectors={} iterations={} kkt_gap={:e}",
        m.model.c,
        m.model.gamma,
        m.mask.fraction,
        m.mask.len(),
        m.model.support_vectors.len(),
        m.model.stats.iterations,
        m.model.stats.kkt_gap
    )
}

pub fn evaluate(g: &GlobalArgs, features_path: &Path, mask_path: &Path, key_values: bool) -> Result<()> {
    let cfg = load_config(g)?;
    let (cache, data) = load_features(features_path, &cfg)?;
    let mask = load_mask(mask_path, &cfg, &cache)?;
    let report = pipeline::cross_validate(&data, &mask.mask, &cfg)?;
    let text = if key_values {
        report.to_key_values()
    } else {
        report.to_table()
    };
    emit(g, &text)
}

pub fn predict(g: &GlobalArgs, input: &Path, model_path: &Path) -> Result<()> {
    let cfg = load_config(g)?;
    let model = artifact::read_model(model_path)?;
    let rows: Vec<FeatureRow> = match artifact::sniff(input)? {
        Some(Kind::Episodes) => {
            let cache = artifact::read_episodes(input)?;
            check_hash(input, "episode", &cfg.stage_hash(Stage::Episodes), &cache.hash)?;
            check_hash(
                model_path,
                "feature",
                &cfg.stage_hash(Stage::Features),
                &model.features_hash,
            )?;
            let (rows, failed) = pipeline::compute_features(&cache.episodes, &cfg);
            if !failed.is_empty() {
                log::warn!("{} episodes skipped", failed.len());
            }
            rows
        }
        Some(Kind::Features) => {
            let cache = artifact::read_features(input)?;
            check_hash(input, "feature", &model.features_hash, &cache.hash)?;
            cache.rows
        }
        _ => {
            return Err(input_error(format!(
                "{}: expected an episode or feature cache",
                input.display()
            )))
        }
    };
    let mut text = String::from("# record start label decision\n");
    let mut correct = 0;
    for row in &rows {
        let x = model.mask.apply(&row.features).with_context(|| {
            format!(
                "episode {}@{} does not fit the model's mask",
                row.source.record, row.source.start
            )
        })?;
        let (label, decision) = model.model.predict(&x)?;
        correct += usize::from(label == row.label);
        let _ = writeln!(text, "{} {} {label} {decision:.6}", row.source.record, row.source.start);
    }
    if !rows.is_empty() {
        log::info!("{correct} of {} predictions agree with the stored labels", rows.len());
    }
    emit(g, &text)
}

fn parse_tones(spec: &str) -> Result<Vec<(f64, f64, f64)>> {
    spec.split(',')
        .map(|t| {
            let parts: Vec<&str> = t.trim().split(':').collect();
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| input_error(format!("bad number `{s}` in --tones")))
            };
            match parts.as_slice() {
                [f, a] => Ok((num(f)?, num(a)?, 0.0)),
                [f, a, p] => Ok((num(f)?, num(a)?, num(p)?)),
                _ => Err(input_error(format!("bad tone `{t}`, expected freq:amplitude[:phase]"))),
            }
        })
        .collect()
}

pub fn synth(g: &GlobalArgs, a: &SynthArgs) -> Result<()> {
    let cfg = load_config(g)?;
    if a.fs.is_nan() || a.fs <= 0.0 {
        return Err(input_error("--fs must be positive"));
    }
    if a.kind == SynthKind::Corpus {
        let out = require_out(g, "synthetic corpus")?;
        let episodes = synth::synth_corpus(&SynthCorpusConfig {
            n_vf: a.n_vf,
            n_not_vf: a.n_not_vf,
            sampling_rate_hz: a.fs,
            episode_length_s: cfg.episode_length_s,
            noise_sd: a.noise_sd,
            seed: cfg.seed,
        })?;
        let labels: Vec<EpisodeLabel> = episodes.iter().map(|e| e.label).collect();
        log_class_counts("synthetic corpus", &labels);
        return write_episodes(g, &cfg, &out, &episodes);
    }
    let n = wfdb::window_len(a.length.unwrap_or(cfg.episode_length_s), a.fs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = match a.kind {
        SynthKind::Tone => synth::tone(a.freq, a.amplitude, 0.0, a.fs, n),
        SynthKind::Mixture => {
            let spec = a
                .tones
                .as_deref()
                .ok_or_else(|| input_error("--kind mixture needs --tones"))?;
            synth::tone_mixture(&parse_tones(spec)?, a.fs, n)
        }
        SynthKind::Qrs => synth::qrs_train(a.rate_bpm, a.amplitude, 0.0, a.fs, n, &mut rng),
        SynthKind::Noise => synth::white_noise(a.noise_sd, n, &mut rng),
        SynthKind::Corpus => unreachable!("handled above"),
    };
    let mut text = String::with_capacity(samples.len() * 12);
    for s in samples {
        let _ = writeln!(text, "{s}");
    }
    emit(g, &text)
}

pub fn grid(g: &GlobalArgs, features_path: &Path, mask_path: &Path) -> Result<()> {
    let cfg = load_config(g)?;
    let (cache, data) = load_features(features_path, &cfg)?;
    let mask = load_mask(mask_path, &cfg, &cache)?;
    let masked = data.project(&mask.mask.selected_indices);
    let (mut train, valid) = holdout_split(&masked, cfg.grid_train_vf, cfg.grid_train_not_vf, cfg.holdout_seed())?;
    if cfg.smote_enabled {
        let added = balance_dataset(&mut train, &cfg.smote())?;
        log::info!("SMOTE added {added} training rows");
    }
    let report = grid_search(&train, &valid, &cfg.grid(), &cfg.svm())?;
    let mut text = String::from("# c gamma score confusion\n");
    for p in &report.points {
        let score = p.score.map_or_else(|| "absent".to_string(), |s| format!("{s:.6}"));
        let _ = writeln!(
            text,
            "{} {} {score} {}",
            p.c,
            p.gamma,
            artifact::confusion_line(&p.confusion)
        );
    }
    let _ = writeln!(text, "best c={} gamma={}", report.best_c, report.best_gamma);
    emit(g, &text)
}
