//! Run configuration: a line-oriented `section.key = value` file.
//!
//! ```text
//! # comment
//! model.A = 0.09
//! noise.sigma2 = 0.08
//! noise.atom.0.weight = 1.0
//! noise.atom.0.eta2 = 0.02
//! variant.extinct.model.A = 0.08
//! ```
//!
//! Keys under `variant.<name>.` override base keys when that variant is
//! selected. Unknown keys are rejected with their line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::SimConfig;
use crate::ensemble::EnsembleSpec;
use crate::levy::{Atom, FiniteLevyMeasure, LevyError};
use crate::model::{ModelError, ModelParams, NoiseSpec, StateTriple};
use crate::threshold::DEFAULT_MARGIN;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("line {line}: expected `section.key = value`")]
    Syntax { line: usize },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate {
        line: usize,
        key: String,
        first: usize,
    },

    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },

    #[error("missing key `{0}`")]
    MissingKey(String),

    #[error("missing section `{0}`")]
    MissingSection(&'static str),

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("line {line}: {source}")]
    Model { line: usize, source: ModelError },

    #[error("line {line}: {source}")]
    Levy { line: usize, source: LevyError },
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoints {
    /// Every multiple of the interval up to `t_end`.
    Interval(f64),
    /// Explicit times.
    List(Vec<f64>),
}

impl Checkpoints {
    pub fn times(&self, t_end: f64) -> Vec<f64> {
        match self {
            Checkpoints::Interval(h) => {
                let n = (t_end / h + 1e-9).floor() as u64;
                (0..=n).map(|k| k as f64 * h).collect()
            }
            Checkpoints::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSection {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub record_stride: usize,
    pub couple_aux: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSection {
    pub n_paths: u64,
    pub workers: usize,
    pub checkpoints: Checkpoints,
    pub bins: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySection {
    /// Defaults to a tenth of `t_end` when absent.
    pub burn_in: Option<f64>,
    /// Share of the record used for the ln I slope.
    pub tail_fraction: f64,
    /// Half-width of the critical band around `T₀ˢ = 1`.
    pub margin: f64,
    /// Allowed distance of the median slope from the predicted exponent.
    pub slope_tolerance: f64,
    /// Thinning interval for window samples, in time units.
    pub thin_every: f64,
    /// Batches for the batch-means standard error of a time average.
    pub batches: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            burn_in: None,
            tail_fraction: 0.5,
            margin: DEFAULT_MARGIN,
            slope_tolerance: 0.0045,
            thin_every: 1.0,
            batches: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            svg: false,
        }
    }
}

/// Parsed configuration with one variant applied. Sections absent from the
/// file are `None`; commands demand the ones they need.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelParams>,
    pub noise: Option<NoiseSpec>,
    pub initial: Option<StateTriple>,
    pub scheme: Option<SchemeSection>,
    pub ensemble: Option<EnsembleSection>,
    pub verify: VerifySection,
    pub output: OutputSection,
}

const KEYS: &[&str] = &[
    "model.A",
    "model.mu1",
    "model.alpha",
    "model.beta",
    "model.gamma",
    "noise.sigma1",
    "noise.sigma2",
    "noise.sigma3",
    "initial.S",
    "initial.I",
    "initial.R",
    "scheme.dt",
    "scheme.t_end",
    "scheme.seed",
    "scheme.record_stride",
    "scheme.couple_aux",
    "ensemble.n_paths",
    "ensemble.workers",
    "ensemble.checkpoints",
    "ensemble.checkpoint_interval",
    "ensemble.bins",
    "ensemble.p",
    "verify.burn_in",
    "verify.tail_fraction",
    "verify.margin",
    "verify.slope_tolerance",
    "verify.thin_every",
    "verify.batches",
    "output.dir",
    "output.formats",
];

const ATOM_FIELDS: [&str; 5] = ["weight", "eta1", "eta2", "eta3", "label"];

fn is_known_key(key: &str) -> bool {
    if KEYS.contains(&key) {
        return true;
    }
    key.strip_prefix("noise.atom.")
        .and_then(|rest| rest.split_once('.'))
        .is_some_and(|(idx, field)| idx.parse::<usize>().is_ok() && ATOM_FIELDS.contains(&field))
}

type Entries = BTreeMap<String, Entry>;

/// Splits text into base entries and per-variant overrides.
fn tokenize(text: &str) -> Result<(Entries, BTreeMap<String, Entries>), ConfigError> {
    let mut base = Entries::new();
    let mut variants: BTreeMap<String, Entries> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || !key.contains('.') || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax { line });
        }
        let (target, key) = match key.strip_prefix("variant.") {
            Some(rest) => {
                let (name, key) = rest.split_once('.').ok_or(ConfigError::Syntax { line })?;
                (variants.entry(name.to_string()).or_default(), key)
            }
            None => (&mut base, key),
        };
        if let Some(prev) = target.get(key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
                first: prev.line,
            });
        }
        target.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok((base, variants))
}

/// Consumes entries as they are read; leftovers are unknown keys.
struct Reader {
    entries: BTreeMap<String, Entry>,
}

impl Reader {
    fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.keys().any(|k| k.starts_with(&prefix))
    }

    fn first_line(&self, section: &str) -> usize {
        let prefix = format!("{section}.");
        self.entries
            .iter()
            .filter(|(k, _)| k.starts_with(&prefix))
            .map(|(_, e)| e.line)
            .min()
            .unwrap_or(0)
    }

    fn take_raw(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take_raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|err| ConfigError::InvalidValue {
                    line: e.line,
                    key: key.to_string(),
                    value: e.value.clone(),
                    reason: err.to_string(),
                }),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    /// Positive finite number, checked with the entry's line.
    fn take_positive(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        let line = self.entries.get(key).map(|e| e.line);
        let value: Option<f64> = self.take(key)?;
        match (value, line) {
            (Some(v), Some(line)) if !(v.is_finite() && v > 0.0) => {
                Err(ConfigError::InvalidValue {
                    line,
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: "must be positive and finite".into(),
                })
            }
            _ => Ok(value),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(ConfigError::UnknownKey { line: e.line, key }),
            None => Ok(()),
        }
    }
}

fn parse_list(entry: &Entry, key: &str) -> Result<Vec<f64>, ConfigError> {
    entry
        .value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|e| ConfigError::InvalidValue {
                line: entry.line,
                key: key.to_string(),
                value: entry.value.clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn read_model(r: &mut Reader) -> Result<Option<ModelParams>, ConfigError> {
    if !r.has_section("model") {
        return Ok(None);
    }
    let line = r.first_line("model");
    let a = r.require("model.A")?;
    let mu1 = r.require("model.mu1")?;
    let alpha = r.require("model.alpha")?;
    let beta = r.require("model.beta")?;
    let gamma = r.require("model.gamma")?;
    ModelParams::new(a, mu1, alpha, beta, gamma)
        .map(Some)
        .map_err(|source| ConfigError::Model { line, source })
}

fn read_noise(r: &mut Reader) -> Result<Option<NoiseSpec>, ConfigError> {
    if !r.has_section("noise") {
        return Ok(None);
    }
    let line = r.first_line("noise");
    let sigma = [
        r.take_or("noise.sigma1", 0.0)?,
        r.take_or("noise.sigma2", 0.0)?,
        r.take_or("noise.sigma3", 0.0)?,
    ];

    let mut indices: Vec<(usize, usize)> = Vec::new();
    for (key, e) in &r.entries {
        if let Some(rest) = key.strip_prefix("noise.atom.") {
            let idx = rest.split('.').next().unwrap_or("");
            let idx = idx.parse::<usize>().map_err(|_| ConfigError::UnknownKey {
                line: e.line,
                key: key.clone(),
            })?;
            indices.push((idx, e.line));
        }
    }
    indices.sort();
    indices.dedup_by_key(|(k, _)| *k);
    let mut atoms = Vec::with_capacity(indices.len());
    for (pos, &(idx, idx_line)) in indices.iter().enumerate() {
        if idx != pos {
            return Err(ConfigError::InvalidValue {
                line: idx_line,
                key: format!("noise.atom.{idx}"),
                value: idx.to_string(),
                reason: format!("atom indices must be contiguous from 0 (expected {pos})"),
            });
        }
        let p = format!("noise.atom.{idx}.");
        let weight = r.require(&format!("{p}weight"))?;
        let eta = [
            r.take_or(&format!("{p}eta1"), 0.0)?,
            r.take_or(&format!("{p}eta2"), 0.0)?,
            r.take_or(&format!("{p}eta3"), 0.0)?,
        ];
        let mut atom = Atom::new(weight, eta);
        if let Some(label) = r.take_raw(&format!("{p}label")) {
            atom = atom.with_label(label.value);
        }
        atoms.push(atom);
    }
    let measure =
        FiniteLevyMeasure::new(atoms).map_err(|source| ConfigError::Levy { line, source })?;
    NoiseSpec::new(sigma, measure)
        .map(Some)
        .map_err(|source| ConfigError::Model { line, source })
}

fn read_initial(r: &mut Reader) -> Result<Option<StateTriple>, ConfigError> {
    if !r.has_section("initial") {
        return Ok(None);
    }
    let line = r.first_line("initial");
    let x = StateTriple::new(
        r.require("initial.S")?,
        r.require("initial.I")?,
        r.require("initial.R")?,
    );
    if !x.is_positive() {
        return Err(ConfigError::InvalidValue {
            line,
            key: "initial".into(),
            value: format!("({}, {}, {})", x.s, x.i, x.r),
            reason: "every compartment must be strictly positive".into(),
        });
    }
    Ok(Some(x))
}

fn read_scheme(r: &mut Reader) -> Result<Option<SchemeSection>, ConfigError> {
    if !r.has_section("scheme") {
        return Ok(None);
    }
    let dt = r.take_positive("scheme.dt")?.unwrap_or(0.01);
    let t_end = r
        .take_positive("scheme.t_end")?
        .ok_or_else(|| ConfigError::MissingKey("scheme.t_end".into()))?;
    let stride_line = r.entries.get("scheme.record_stride").map(|e| e.line);
    let record_stride = r.take_or("scheme.record_stride", 1usize)?;
    if record_stride == 0 {
        return Err(ConfigError::InvalidValue {
            line: stride_line.unwrap_or(0),
            key: "scheme.record_stride".into(),
            value: "0".into(),
            reason: "must be at least 1".into(),
        });
    }
    Ok(Some(SchemeSection {
        dt,
        t_end,
        seed: r.take_or("scheme.seed", 0u64)?,
        record_stride,
        couple_aux: r.take_or("scheme.couple_aux", false)?,
    }))
}

fn read_ensemble(r: &mut Reader) -> Result<Option<EnsembleSection>, ConfigError> {
    if !r.has_section("ensemble") {
        return Ok(None);
    }
    let interval = r.take_positive("ensemble.checkpoint_interval")?;
    let list = r.take_raw("ensemble.checkpoints");
    let checkpoints = match (interval, list) {
        (Some(_), Some(e)) => {
            return Err(ConfigError::InvalidValue {
                line: e.line,
                key: "ensemble.checkpoints".into(),
                value: e.value,
                reason: "give either checkpoints or checkpoint_interval, not both".into(),
            })
        }
        (Some(h), None) => Checkpoints::Interval(h),
        (None, Some(e)) => Checkpoints::List(parse_list(&e, "ensemble.checkpoints")?),
        (None, None) => Checkpoints::List(Vec::new()),
    };
    let p_line = r.entries.get("ensemble.p").map(|e| e.line);
    let p = r.take_or("ensemble.p", 1.0f64)?;
    if !(p >= 0.5 && p.is_finite()) {
        return Err(ConfigError::InvalidValue {
            line: p_line.unwrap_or(0),
            key: "ensemble.p".into(),
            value: p.to_string(),
            reason: "moment exponent must be at least 0.5".into(),
        });
    }
    Ok(Some(EnsembleSection {
        n_paths: r.require("ensemble.n_paths")?,
        workers: r.take_or("ensemble.workers", 1usize)?.max(1),
        checkpoints,
        bins: r.take_or("ensemble.bins", 50usize)?.max(1),
        p,
    }))
}

fn read_verify(r: &mut Reader) -> Result<VerifySection, ConfigError> {
    let d = VerifySection::default();
    Ok(VerifySection {
        burn_in: r.take("verify.burn_in")?,
        tail_fraction: r.take_or("verify.tail_fraction", d.tail_fraction)?,
        margin: r.take_or("verify.margin", d.margin)?,
        slope_tolerance: r.take_or("verify.slope_tolerance", d.slope_tolerance)?,
        thin_every: r
            .take_positive("verify.thin_every")?
            .unwrap_or(d.thin_every),
        batches: r.take_or("verify.batches", d.batches)?.max(2),
    })
}

fn read_output(r: &mut Reader) -> Result<OutputSection, ConfigError> {
    let d = OutputSection::default();
    let dir = r
        .take_raw("output.dir")
        .map_or(d.dir, |e| PathBuf::from(e.value));
    let svg = match r.take_raw("output.formats") {
        None => d.svg,
        Some(e) => {
            let mut svg = false;
            for f in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match f {
                    "csv" => {}
                    "svg" => svg = true,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            line: e.line,
                            key: "output.formats".into(),
                            value: other.into(),
                            reason: "expected csv or svg".into(),
                        })
                    }
                }
            }
            svg
        }
    };
    Ok(OutputSection { dir, svg })
}

impl RunConfig {
    /// Parses `text`, applying the overrides of `variant` when given.
    pub fn parse(text: &str, variant: Option<&str>) -> Result<Self, ConfigError> {
        let (mut entries, mut variants) = tokenize(text)?;
        if let Some(name) = variant {
            let overrides = variants
                .remove(name)
                .ok_or_else(|| ConfigError::UnknownVariant(name.to_string()))?;
            entries.extend(overrides);
        }
        if let Some((key, e)) = entries
            .iter()
            .filter(|(k, _)| !is_known_key(k))
            .min_by_key(|(_, e)| e.line)
        {
            return Err(ConfigError::UnknownKey {
                line: e.line,
                key: key.clone(),
            });
        }
        let mut r = Reader { entries };
        let cfg = RunConfig {
            model: read_model(&mut r)?,
            noise: read_noise(&mut r)?,
            initial: read_initial(&mut r)?,
            scheme: read_scheme(&mut r)?,
            ensemble: read_ensemble(&mut r)?,
            verify: read_verify(&mut r)?,
            output: read_output(&mut r)?,
        };
        r.finish()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path, variant: Option<&str>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, variant)
    }

    /// Variant names declared in `text`.
    pub fn variants(text: &str) -> Result<Vec<String>, ConfigError> {
        Ok(tokenize(text)?.1.into_keys().collect())
    }

    pub fn require_model(&self) -> Result<&ModelParams, ConfigError> {
        self.model
            .as_ref()
            .ok_or(ConfigError::MissingSection("model"))
    }

    pub fn require_noise(&self) -> Result<&NoiseSpec, ConfigError> {
        self.noise
            .as_ref()
            .ok_or(ConfigError::MissingSection("noise"))
    }

    pub fn require_scheme(&self) -> Result<&SchemeSection, ConfigError> {
        self.scheme
            .as_ref()
            .ok_or(ConfigError::MissingSection("scheme"))
    }

    pub fn require_ensemble(&self) -> Result<&EnsembleSection, ConfigError> {
        self.ensemble
            .as_ref()
            .ok_or(ConfigError::MissingSection("ensemble"))
    }

    pub fn require_initial(&self) -> Result<&StateTriple, ConfigError> {
        self.initial
            .as_ref()
            .ok_or(ConfigError::MissingSection("initial"))
    }

    /// Simulation settings; needs model, noise, initial and scheme.
    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let scheme = self.require_scheme()?;
        Ok(SimConfig {
            params: *self.require_model()?,
            noise: self.require_noise()?.clone(),
            initial: *self.require_initial()?,
            t_end: scheme.t_end,
            dt: scheme.dt,
            seed: scheme.seed,
            record_stride: scheme.record_stride,
            couple_aux: scheme.couple_aux,
        })
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec, ConfigError> {
        let e = self.require_ensemble()?;
        let t_end = self.require_scheme()?.t_end;
        Ok(EnsembleSpec {
            n_paths: e.n_paths,
            workers: e.workers,
            checkpoints: e.checkpoints.times(t_end),
            bins: e.bins,
            p: e.p,
        })
    }

    /// Canonical text form. Parsing it yields an equal configuration.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(m) = &self.model {
            kv("model.A", m.a.to_string());
            kv("model.mu1", m.mu1.to_string());
            kv("model.alpha", m.alpha.to_string());
            kv("model.beta", m.beta.to_string());
            kv("model.gamma", m.gamma.to_string());
        }
        if let Some(n) = &self.noise {
            for (k, sigma) in n.sigma.iter().enumerate() {
                kv(&format!("noise.sigma{}", k + 1), sigma.to_string());
            }
            for (idx, atom) in n.measure.atoms().iter().enumerate() {
                let p = format!("noise.atom.{idx}.");
                kv(&format!("{p}weight"), atom.weight.to_string());
                for (k, eta) in atom.eta.iter().enumerate() {
                    kv(&format!("{p}eta{}", k + 1), eta.to_string());
                }
                if !atom.label.is_empty() {
                    kv(&format!("{p}label"), atom.label.clone());
                }
            }
        }
        if let Some(x) = &self.initial {
            kv("initial.S", x.s.to_string());
            kv("initial.I", x.i.to_string());
            kv("initial.R", x.r.to_string());
        }
        if let Some(sc) = &self.scheme {
            kv("scheme.dt", sc.dt.to_string());
            kv("scheme.t_end", sc.t_end.to_string());
            kv("scheme.seed", sc.seed.to_string());
            kv("scheme.record_stride", sc.record_stride.to_string());
            kv("scheme.couple_aux", sc.couple_aux.to_string());
        }
        if let Some(e) = &self.ensemble {
            kv("ensemble.n_paths", e.n_paths.to_string());
            kv("ensemble.workers", e.workers.to_string());
            match &e.checkpoints {
                Checkpoints::Interval(h) => kv("ensemble.checkpoint_interval", h.to_string()),
                Checkpoints::List(v) if !v.is_empty() => kv(
                    "ensemble.checkpoints",
                    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
                ),
                Checkpoints::List(_) => {}
            }
            kv("ensemble.bins", e.bins.to_string());
            kv("ensemble.p", e.p.to_string());
        }
        let v = &self.verify;
        if let Some(b) = v.burn_in {
            kv("verify.burn_in", b.to_string());
        }
        kv("verify.tail_fraction", v.tail_fraction.to_string());
        kv("verify.margin", v.margin.to_string());
        kv("verify.slope_tolerance", v.slope_tolerance.to_string());
        kv("verify.thin_every", v.thin_every.to_string());
        kv("verify.batches", v.batches.to_string());
        kv("output.dir", self.output.dir.display().to_string());
        kv(
            "output.formats",
            if self.output.svg { "csv, svg" } else { "csv" }.to_string(),
        );
        s
    }
}
