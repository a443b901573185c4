//! On-disk artifacts. All integers and floats are little-endian.
//!
//! Every binary file starts with the same 76-byte header:
//!
//! ```text
//! offset  size  field
//! 0       8     magic ("VFDEPISO", "VFDFEATS", "VFDMODEL" or "VFDFORST")
//! 8       4     format version (u32, currently 1)
//! 12      64    stage config hash, lowercase hex SHA-256
//! ```
//!
//! Episode cache, then records until end of file:
//!
//! ```text
//! u8 label (1 = VF, 0 = NOT_VF) | u16 name length | name bytes (UTF-8)
//! u64 start sample | f64 fs | f64 episode length (s) | u32 n | n x f64 samples
//! ```
//!
//! Feature cache: `u32 dim` after the header, then records until end of file:
//!
//! ```text
//! u8 label | u16 name length | name bytes | u64 start | dim x f64 features
//! ```
//!
//! Records carry no count, so both caches can be appended to.
//!
//! Model file, after the header (which holds the model-stage hash):
//!
//! ```text
//! 64   features-stage hash of the training features
//! f64  C | f64 gamma | f64 bias | f64 mask fraction
//! u32  mask dim | u32 mask len | len x u32 mask indices
//! u32  support vectors | u32 sv dim | n x f64 dual coefficients (a_i y_i)
//! n x dim x f64 support vectors, row-major
//! u64  SMO iterations | f64 KKT gap | f64 dual objective
//! ```
//!
//! Forest file, after the header (ranking-stage hash):
//!
//! ```text
//! u32 n_features | u32 max features per split | u64 seed
//! u8 has oob | f64 oob accuracy | u32 trees
//! per tree: u64 stream | u32 nodes | nodes
//! leaf:  u8 0 | u32 not_vf | u32 vf
//! split: u8 1 | u32 feature | f64 threshold | u32 left | u32 right
//!        | u32 not_vf | u32 vf | f64 weighted decrease
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;
use vfdetect::eval::ConfusionMatrix;
use vfdetect::pipeline::FeatureRow;
use vfdetect::ranking::{DecisionTree, FeatureMask, Node, RandomForest};
use vfdetect::svm::{SvmModel, TrainingStats};
use vfdetect::wfdb::{EcgEpisode, EpisodeLabel, EpisodeSource};

pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8 + 4 + 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Episodes,
    Features,
    Model,
    Forest,
}

impl Kind {
    pub fn magic(self) -> &'static [u8; 8] {
        match self {
            Kind::Episodes => b"VFDEPISO",
            Kind::Features => b"VFDFEATS",
            Kind::Model => b"VFDMODEL",
            Kind::Forest => b"VFDFORST",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Episodes => "episode cache",
            Kind::Features => "feature cache",
            Kind::Model => "model file",
            Kind::Forest => "forest file",
        }
    }

    fn from_magic(m: &[u8]) -> Option<Self> {
        [Kind::Episodes, Kind::Features, Kind::Model, Kind::Forest]
            .into_iter()
            .find(|k| k.magic() == m)
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: not a vfdetect {expected} (bad magic at byte offset 0)")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: is a {found}, expected a {expected}")]
    WrongKind {
        path: PathBuf,
        found: &'static str,
        expected: &'static str,
    },

    #[error("{path}: unsupported format version {version} at byte offset 8 (this build reads {VERSION})")]
    Version { path: PathBuf, version: u32 },

    #[error("{path}: truncated at byte offset {offset}: needed {needed} more bytes, {available} left")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{path}: corrupt data at byte offset {offset}: {message}")]
    Corrupt {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error(
        "config hash mismatch: {artifact} was produced with {stage} settings {found}, \
         the current config gives {expected}; rerun the earlier stage or use the matching config"
    )]
    HashMismatch {
        artifact: String,
        stage: &'static str,
        expected: String,
        found: String,
    },

    #[error("{path}: {message}")]
    BadText { path: PathBuf, message: String },
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn check_hash(artifact: &Path, stage: &'static str, expected: &str, found: &str) -> Result<(), ArtifactError> {
    if expected == found {
        return Ok(());
    }
    Err(ArtifactError::HashMismatch {
        artifact: artifact.display().to_string(),
        stage,
        expected: expected.to_string(),
        found: found.to_string(),
    })
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(kind: Kind, hash: &str) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(kind.magic());
        w.u32(VERSION);
        w.hash(hash);
        w
    }

    fn hash(&mut self, hash: &str) {
        assert_eq!(hash.len(), 64, "stage hashes are 64 hex characters");
        self.buf.extend_from_slice(hash.as_bytes());
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn len32(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length fits in u32"));
    }

    fn name(&mut self, s: &str) {
        let n = u16::try_from(s.len()).expect("record names are short");
        self.buf.extend_from_slice(&n.to_le_bytes());
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn source(&mut self, label: EpisodeLabel, src: &EpisodeSource) {
        self.u8(u8::from(label == EpisodeLabel::Vf));
        self.name(&src.record);
        self.u64(src.start as u64);
    }
}

struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, returns the reader positioned after the
    /// header and the stored hash.
    fn open(path: &'a Path, buf: &'a [u8], kind: Kind) -> Result<(Self, String), ArtifactError> {
        if buf.len() < 8 || &buf[..8] != kind.magic() {
            if let Some(found) = buf.get(..8).and_then(Kind::from_magic) {
                return Err(ArtifactError::WrongKind {
                    path: path.into(),
                    found: found.name(),
                    expected: kind.name(),
                });
            }
            return Err(ArtifactError::BadMagic {
                path: path.into(),
                expected: kind.name(),
            });
        }
        let mut r = Reader { path, buf, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(ArtifactError::Version {
                path: path.into(),
                version,
            });
        }
        let hash = r.hash()?;
        Ok((r, hash))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn corrupt(&self, offset: usize, message: impl Into<String>) -> ArtifactError {
        ArtifactError::Corrupt {
            path: self.path.into(),
            offset,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(ArtifactError::Truncated {
                path: self.path.into(),
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn hash(&mut self) -> Result<String, ArtifactError> {
        let at = self.pos;
        let raw = self.take(64)?;
        if !raw.iter().all(|b| b.is_ascii_hexdigit()) {
            return Err(self.corrupt(at, "config hash is not hex"));
        }
        Ok(String::from_utf8(raw.to_vec()).expect("ascii"))
    }

    fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ArtifactError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ArtifactError> {
        let raw = self.take(n.saturating_mul(8))?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn index(&mut self, bound: usize, what: &str) -> Result<usize, ArtifactError> {
        let at = self.pos;
        let v = self.u32()? as usize;
        if v >= bound {
            return Err(self.corrupt(at, format!("{what} {v} out of range (< {bound})")));
        }
        Ok(v)
    }

    fn label(&mut self) -> Result<EpisodeLabel, ArtifactError> {
        let at = self.pos;
        match self.u8()? {
            1 => Ok(EpisodeLabel::Vf),
            0 => Ok(EpisodeLabel::NotVf),
            b => Err(self.corrupt(at, format!("label byte {b} (expected 0 or 1)"))),
        }
    }

    fn name(&mut self) -> Result<String, ArtifactError> {
        let n = self.u16()? as usize;
        let at = self.pos;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt(at, "record name is not UTF-8"))
    }

    fn source(&mut self) -> Result<(EpisodeLabel, EpisodeSource), ArtifactError> {
        let label = self.label()?;
        let record = self.name()?;
        let start = self.u64()? as usize;
        Ok((label, EpisodeSource { record, start }))
    }
}

fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))
}

pub struct EpisodeCache {
    pub hash: String,
    pub episodes: Vec<EcgEpisode>,
}

pub fn encode_episodes(hash: &str, episodes: &[EcgEpisode]) -> Vec<u8> {
    let mut w = Writer::new(Kind::Episodes, hash);
    for ep in episodes {
        w.source(ep.label, &ep.source);
        w.f64(ep.sampling_rate_hz);
        w.f64(ep.episode_length_s);
        w.len32(ep.samples.len());
        for &s in &ep.samples {
            w.f64(s);
        }
    }
    w.buf
}

pub fn decode_episodes(path: &Path, bytes: &[u8]) -> Result<EpisodeCache, ArtifactError> {
    let (mut r, hash) = Reader::open(path, bytes, Kind::Episodes)?;
    let mut episodes = Vec::new();
    while !r.at_end() {
        let at = r.pos;
        let (label, source) = r.source()?;
        let fs_hz = r.f64()?;
        let length = r.f64()?;
        let n = r.u32()? as usize;
        let samples = r.f64s(n)?;
        let ep = EcgEpisode::new(samples, fs_hz, length, label, source)
            .map_err(|e| r.corrupt(at, format!("episode record: {e}")))?;
        episodes.push(ep);
    }
    Ok(EpisodeCache { hash, episodes })
}

pub fn read_episodes(path: &Path) -> anyhow::Result<EpisodeCache> {
    Ok(decode_episodes(path, &read_file(path)?)?)
}

pub struct FeatureCache {
    pub hash: String,
    pub dim: usize,
    pub rows: Vec<FeatureRow>,
}

pub fn encode_features(hash: &str, dim: usize, rows: &[FeatureRow]) -> Vec<u8> {
    let mut w = Writer::new(Kind::Features, hash);
    w.len32(dim);
    for row in rows {
        assert_eq!(row.features.len(), dim, "rows share one dimension");
        w.source(row.label, &row.source);
        for &v in &row.features {
            w.f64(v);
        }
    }
    w.buf
}

pub fn decode_features(path: &Path, bytes: &[u8]) -> Result<FeatureCache, ArtifactError> {
    let (mut r, hash) = Reader::open(path, bytes, Kind::Features)?;
    let dim = r.u32()? as usize;
    let mut rows = Vec::new();
    while !r.at_end() {
        let (label, source) = r.source()?;
        let features = r.f64s(dim)?;
        rows.push(FeatureRow {
            source,
            label,
            features,
        });
    }
    Ok(FeatureCache { hash, dim, rows })
}

pub fn read_features(path: &Path) -> anyhow::Result<FeatureCache> {
    Ok(decode_features(path, &read_file(path)?)?)
}

/// Kind of a binary artifact, from its magic bytes.
pub fn sniff(path: &Path) -> anyhow::Result<Option<Kind>> {
    let bytes = read_file(path)?;
    Ok(bytes.get(..8).and_then(Kind::from_magic))
}

/// A trained classifier together with the feature mask it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model_hash: String,
    pub features_hash: String,
    pub model: SvmModel,
    pub mask: FeatureMask,
}

pub fn encode_model(m: &ModelFile) -> Vec<u8> {
    let mut w = Writer::new(Kind::Model, &m.model_hash);
    w.hash(&m.features_hash);
    w.f64(m.model.c);
    w.f64(m.model.gamma);
    w.f64(m.model.bias);
    w.f64(m.mask.fraction);
    w.len32(m.mask.dim);
    w.len32(m.mask.len());
    for &i in &m.mask.selected_indices {
        w.len32(i);
    }
    w.len32(m.model.support_vectors.len());
    w.len32(m.model.dim());
    for &c in &m.model.dual_coefficients {
        w.f64(c);
    }
    for sv in &m.model.support_vectors {
        for &v in sv {
            w.f64(v);
        }
    }
    w.u64(m.model.stats.iterations);
    w.f64(m.model.stats.kkt_gap);
    w.f64(m.model.stats.dual_objective);
    w.buf
}

pub fn decode_model(path: &Path, bytes: &[u8]) -> Result<ModelFile, ArtifactError> {
    let (mut r, model_hash) = Reader::open(path, bytes, Kind::Model)?;
    let features_hash = r.hash()?;
    let c = r.f64()?;
    let gamma = r.f64()?;
    let bias = r.f64()?;
    let fraction = r.f64()?;
    let mask_dim = r.u32()? as usize;
    let mask_len = r.u32()? as usize;
    let mask_at = r.pos;
    let mut indices = Vec::with_capacity(mask_len.min(1 << 20));
    for _ in 0..mask_len {
        indices.push(r.index(mask_dim, "mask index")?);
    }
    let mask = FeatureMask::new(indices, fraction, mask_dim).map_err(|e| r.corrupt(mask_at, e.to_string()))?;
    let n_sv = r.u32()? as usize;
    let dim_at = r.pos;
    let dim = r.u32()? as usize;
    if n_sv > 0 && dim != mask.len() {
        return Err(r.corrupt(
            dim_at,
            format!(
                "support vector dimension {dim} does not match mask length {}",
                mask.len()
            ),
        ));
    }
    let dual_coefficients = r.f64s(n_sv)?;
    let mut support_vectors = Vec::with_capacity(n_sv.min(1 << 20));
    for _ in 0..n_sv {
        support_vectors.push(r.f64s(dim)?);
    }
    let stats = TrainingStats {
        iterations: r.u64()?,
        kkt_gap: r.f64()?,
        dual_objective: r.f64()?,
    };
    if !r.at_end() {
        return Err(r.corrupt(r.pos, "trailing bytes after model"));
    }
    Ok(ModelFile {
        model_hash,
        features_hash,
        model: SvmModel {
            support_vectors,
            dual_coefficients,
            bias,
            gamma,
            c,
            stats,
        },
        mask,
    })
}

pub fn read_model(path: &Path) -> anyhow::Result<ModelFile> {
    Ok(decode_model(path, &read_file(path)?)?)
}

pub fn encode_forest(hash: &str, forest: &RandomForest) -> Vec<u8> {
    let mut w = Writer::new(Kind::Forest, hash);
    w.len32(forest.n_features);
    w.len32(forest.max_features_per_split);
    w.u64(forest.seed);
    w.u8(u8::from(forest.oob_accuracy.is_some()));
    w.f64(forest.oob_accuracy.unwrap_or(0.0));
    w.len32(forest.trees.len());
    for tree in &forest.trees {
        w.u64(tree.stream);
        w.len32(tree.nodes.len());
        for node in &tree.nodes {
            match node {
                Node::Leaf { counts } => {
                    w.u8(0);
                    w.u32(counts[0]);
                    w.u32(counts[1]);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    counts,
                    weighted_decrease,
                } => {
                    w.u8(1);
                    w.len32(*feature);
                    w.f64(*threshold);
                    w.len32(*left);
                    w.len32(*right);
                    w.u32(counts[0]);
                    w.u32(counts[1]);
                    w.f64(*weighted_decrease);
                }
            }
        }
    }
    w.buf
}

pub fn decode_forest(path: &Path, bytes: &[u8]) -> Result<(String, RandomForest), ArtifactError> {
    let (mut r, hash) = Reader::open(path, bytes, Kind::Forest)?;
    let n_features = r.u32()? as usize;
    let max_features_per_split = r.u32()? as usize;
    let seed = r.u64()?;
    let has_oob = r.u8()? != 0;
    let oob = r.f64()?;
    let n_trees = r.u32()? as usize;
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
    for _ in 0..n_trees {
        let stream = r.u64()?;
        let n_nodes = r.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        for _ in 0..n_nodes {
            let at = r.pos;
            let node = match r.u8()? {
                0 => Node::Leaf {
                    counts: [r.u32()?, r.u32()?],
                },
                1 => Node::Split {
                    feature: r.index(n_features, "split feature")?,
                    threshold: r.f64()?,
                    left: r.index(n_nodes, "child node")?,
                    right: r.index(n_nodes, "child node")?,
                    counts: [r.u32()?, r.u32()?],
                    weighted_decrease: r.f64()?,
                },
                t => return Err(r.corrupt(at, format!("node tag {t}"))),
            };
            nodes.push(node);
        }
        trees.push(DecisionTree { nodes, stream });
    }
    Ok((
        hash,
        RandomForest {
            trees,
            n_features,
            max_features_per_split,
            seed,
            oob_accuracy: has_oob.then_some(oob),
        },
    ))
}

/// Text mask: `# key=value` header lines, then one selected index per line.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskFile {
    pub ranking_hash: String,
    pub features_hash: String,
    pub mask: FeatureMask,
}

pub fn format_mask(m: &MaskFile) -> String {
    let mut out = String::from("# vfdetect feature mask\n");
    let _ = writeln!(out, "# ranking_hash={}", m.ranking_hash);
    let _ = writeln!(out, "# features_hash={}", m.features_hash);
    let _ = writeln!(out, "# dim={}", m.mask.dim);
    let _ = writeln!(out, "# fraction={}", m.mask.fraction);
    for i in &m.mask.selected_indices {
        let _ = writeln!(out, "{i}");
    }
    out
}

pub fn parse_mask(path: &Path, text: &str) -> Result<MaskFile, ArtifactError> {
    let bad = |line: usize, message: String| ArtifactError::BadText {
        path: path.into(),
        message: format!("line {line}: {message}"),
    };
    let (mut ranking_hash, mut features_hash, mut dim, mut fraction) = (None, None, None, None);
    let mut indices = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "ranking_hash" => ranking_hash = Some(v.to_string()),
                    "features_hash" => features_hash = Some(v.to_string()),
                    "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad(i + 1, format!("bad dim `{v}`")))?),
                    "fraction" => {
                        fraction = Some(
                            v.parse::<f64>()
                                .map_err(|_| bad(i + 1, format!("bad fraction `{v}`")))?,
                        )
                    }
                    _ => {}
                }
            }
            continue;
        }
        indices.push(
            line.parse::<usize>()
                .map_err(|_| bad(i + 1, format!("`{line}` is not a feature index")))?,
        );
    }
    let missing = |k: &str| ArtifactError::BadText {
        path: path.into(),
        message: format!("missing `# {k}=` header"),
    };
    let mask = FeatureMask::new(
        indices,
        fraction.ok_or_else(|| missing("fraction"))?,
        dim.ok_or_else(|| missing("dim"))?,
    )
    .map_err(|e| ArtifactError::BadText {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(MaskFile {
        ranking_hash: ranking_hash.ok_or_else(|| missing("ranking_hash"))?,
        features_hash: features_hash.ok_or_else(|| missing("features_hash"))?,
        mask,
    })
}

pub fn read_mask(path: &Path) -> anyhow::Result<MaskFile> {
    let text =
        fs::read_to_string(path).map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))?;
    Ok(parse_mask(path, &text)?)
}

/// `rank index importance` lines, most important first.
pub fn format_importances(importances: &[f64]) -> String {
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let mut out = String::from("# rank index importance\n");
    for (rank, &i) in order.iter().enumerate() {
        let _ = writeln!(out, "{} {i} {:e}", rank + 1, importances[i]);
    }
    out
}

/// `record,start,label,f0,...` with shortest round-trip float formatting.
pub fn features_csv(dim: usize, rows: &[FeatureRow]) -> String {
    let mut out = String::from("record,start,label");
    for j in 0..dim {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{},{},{}", row.source.record, row.source.start, row.label);
        for v in &row.features {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn confusion_line(cm: &ConfusionMatrix) -> String {
    format!("tp={} fp={} tn={} fn={}", cm.tp, cm.fp, cm.tn, cm.fn_)
}
