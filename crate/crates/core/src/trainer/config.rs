//! Training plans as TOML files, named presets, and the glue that turns a
//! plan into encoded corpora and a trained checkpoint on disk.
//!
//! ```toml
//! seed = 1
//! embed = 300
//! hidden = 1024
//! output = "model.ckpt"
//!
//! [[stage]]
//! name = "paisa"
//! kind = "prose"
//! train = "paisa.txt"
//! max_epochs = 5
//!
//! [[stage]]
//! name = "dc"
//! kind = "tercets"
//! train = "commedia.txt"
//! ```
//!
//! Relative paths are resolved against the directory of the plan file.
//! A stage without a `val` file is split by `split` (train/val/test); the
//! test part of the last stage becomes the plan's test set.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    mix_seed, run_plan, PlanOutcome, PlanReport, StageReport, TrainLog, TrainObserver, TrainPlan,
    TrainStage, DEFAULT_BATCH_SIZE, DEFAULT_DROPOUT, DEFAULT_LR, DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
};
use crate::corpus::{make_splits, read_tercets, CorpusKind, RawCorpus, SplitManifest, TercetText};
use crate::error::{Error, Result};
use crate::generator::Lexicon;
use crate::neural::{Adam, Checkpoint, Dims, ModelParams};
use crate::syllabifier::Syllabifier;
use crate::vocab::{TokenSeq, Vocabulary};

pub const DEFAULT_EMBED: usize = 300;
pub const DEFAULT_HIDDEN: usize = 1024;
pub const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

fn default_seed() -> u64 {
    1
}
fn default_embed() -> usize {
    DEFAULT_EMBED
}
fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_split() -> [f64; 3] {
    DEFAULT_SPLIT
}
fn default_output() -> PathBuf {
    PathBuf::from("model.ckpt")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    pub kind: CorpusKind,
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
}

impl StageConfig {
    pub fn new(name: &str, kind: CorpusKind, train: impl Into<PathBuf>) -> Self {
        StageConfig {
            name: name.into(),
            kind,
            train: train.into(),
            val: None,
            batch_size: None,
            lr: None,
            patience: None,
            max_epochs: None,
            dropout: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_embed")]
    pub embed: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Existing vocabulary file; when absent the vocabulary is built from the
    /// whole corpus of the last stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Training log; defaults to the checkpoint path with a `log.tsv` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
    #[serde(rename = "stage", default)]
    pub stages: Vec<StageConfig>,
}

/// Command-line values that take precedence over the plan file. Stage-level
/// values apply to every stage.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanOverrides {
    pub seed: Option<u64>,
    pub embed: Option<usize>,
    pub hidden: Option<usize>,
    pub vocab: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub dropout: Option<f64>,
}

/// The four training schedules: target only, and with one or two
/// pre-training corpora before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Dc,
    PaisaDc,
    DpDc,
    PaisaDpDc,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Dc, Preset::PaisaDc, Preset::DpDc, Preset::PaisaDpDc];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Dc => "dc",
            Preset::PaisaDc => "paisa-dc",
            Preset::DpDc => "dp-dc",
            Preset::PaisaDpDc => "paisa-dp-dc",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown preset `{s}` (dc, paisa-dc, dp-dc, paisa-dp-dc)"
                ))
            })
    }
}

/// Corpus files a preset draws from.
#[derive(Clone, Debug, Default)]
pub struct PresetCorpora {
    /// Target tercets.
    pub comedy: PathBuf,
    /// Generic Italian prose, one sentence per line.
    pub paisa: Option<PathBuf>,
    /// Prose by the target author, one sentence per line.
    pub dante_prose: Option<PathBuf>,
}

impl PlanConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads a plan and resolves its relative paths against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        self.vocab.as_mut().map(fix);
        self.log.as_mut().map(fix);
        for s in &mut self.stages {
            fix(&mut s.train);
            s.val.as_mut().map(fix);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan config serializes")
    }

    pub fn preset(preset: Preset, corpora: &PresetCorpora) -> Result<Self> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| {
                Error::InvalidConfig(format!("preset `{preset}` needs a {what} corpus"))
            })
        };
        let mut stages = Vec::new();
        if matches!(preset, Preset::PaisaDc | Preset::PaisaDpDc) {
            stages.push(StageConfig::new(
                "paisa",
                CorpusKind::Prose,
                need(&corpora.paisa, "generic prose")?,
            ));
        }
        if matches!(preset, Preset::DpDc | Preset::PaisaDpDc) {
            stages.push(StageConfig::new(
                "dante-prose",
                CorpusKind::Prose,
                need(&corpora.dante_prose, "author prose")?,
            ));
        }
        stages.push(StageConfig::new("dc", CorpusKind::Tercets, &corpora.comedy));
        Ok(PlanConfig {
            stages,
            ..Self::parse("").expect("empty plan parses")
        })
    }

    pub fn apply(&mut self, o: &PlanOverrides) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &o.$field {
                    self.$field = v.clone();
                }
            };
        }
        set!(seed);
        set!(embed);
        set!(hidden);
        set!(output);
        if o.vocab.is_some() {
            self.vocab = o.vocab.clone();
        }
        if o.log.is_some() {
            self.log = o.log.clone();
        }
        for s in &mut self.stages {
            s.batch_size = o.batch_size.or(s.batch_size);
            s.lr = o.lr.or(s.lr);
            s.patience = o.patience.or(s.patience);
            s.max_epochs = o.max_epochs.or(s.max_epochs);
            s.dropout = o.dropout.or(s.dropout);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .stages
            .last()
            .ok_or_else(|| Error::InvalidConfig("plan has no stages".into()))?;
        if last.kind != CorpusKind::Tercets {
            return Err(Error::InvalidConfig(format!(
                "last stage `{}` must be a tercet corpus",
                last.name
            )));
        }
        if self.embed == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig(
                "embed and hidden must be positive".into(),
            ));
        }
        crate::corpus::split_sizes(3, self.split).map(|_| ())
    }

    pub fn log_path(&self) -> PathBuf {
        self.log
            .clone()
            .unwrap_or_else(|| sidecar(&self.output, "log.tsv"))
    }

    /// Reads and encodes every corpus of the plan.
    pub fn prepare(&self, syllabifier: &Syllabifier) -> Result<PreparedPlan> {
        self.validate()?;
        let last = self.stages.last().expect("validated");
        let target = read_tercets(&last.train)?;
        let vocab = match &self.vocab {
            Some(path) => Vocabulary::load(path)?,
            None => Vocabulary::from_tercets(&target, syllabifier)?,
        };

        let mut stages = Vec::with_capacity(self.stages.len());
        let mut test = None;
        let mut lexicon = Lexicon::default();
        let mut manifest = None;
        for (k, sc) in self.stages.iter().enumerate() {
            let is_last = k + 1 == self.stages.len();
            let split_seed = mix_seed(self.seed, 1000 + k as u64);
            let (train, val) = if sc.kind == CorpusKind::Tercets {
                let items = if is_last {
                    target.clone()
                } else {
                    read_tercets(&sc.train)?
                };
                let encode = |ts: &[TercetText]| -> Vec<TokenSeq> {
                    ts.iter()
                        .map(|t| vocab.encode_tercet(t, syllabifier))
                        .collect()
                };
                let (train, val) = match &sc.val {
                    Some(v) => (items, read_tercets(v)?),
                    None => {
                        let split = make_splits(items, split_seed, self.split)?;
                        if is_last {
                            manifest = Some(SplitManifest::new(split_seed, self.split, &split));
                            test = Some(encode(&split.test)).filter(|t| !t.is_empty());
                        }
                        (split.train, split.val)
                    }
                };
                if is_last {
                    lexicon = Lexicon::from_tercets(&train);
                }
                (encode(&train), encode(&val))
            } else {
                let lines = RawCorpus::read_lines(sc.kind, &sc.train)?.into_documents();
                let (train, val) = match &sc.val {
                    Some(v) => (lines, RawCorpus::read_lines(sc.kind, v)?.into_documents()),
                    None => {
                        let split = make_splits(lines, split_seed, self.split)?;
                        (split.train, split.val)
                    }
                };
                let encode = |ls: &[String]| -> Vec<TokenSeq> {
                    ls.iter()
                        .flat_map(|l| vocab.encode_line(l, sc.kind, syllabifier))
                        .collect()
                };
                (encode(&train), encode(&val))
            };
            log::info!(
                "stage {}: {} training and {} validation sequences",
                sc.name,
                train.len(),
                val.len()
            );
            let mut stage = TrainStage::new(sc.name.clone(), train, val);
            stage.batch_size = sc.batch_size.unwrap_or(DEFAULT_BATCH_SIZE);
            stage.lr = sc.lr.unwrap_or(DEFAULT_LR);
            stage.patience = sc.patience.unwrap_or(DEFAULT_PATIENCE);
            stage.max_epochs = sc.max_epochs.unwrap_or(DEFAULT_MAX_EPOCHS);
            stage.dropout = sc.dropout.unwrap_or(DEFAULT_DROPOUT);
            stages.push(stage);
        }
        let plan = TrainPlan {
            stages,
            seed: self.seed,
            test,
        };
        plan.validate()?;
        Ok(PreparedPlan {
            dims: Dims::new(vocab.len(), self.embed, self.hidden),
            vocab,
            plan,
            lexicon,
            manifest,
        })
    }

    /// Trains the plan, then writes the checkpoint next to its sidecar
    /// files: vocabulary, lexicon, split manifest, effective plan,
    /// per-stage checkpoints and the training log.
    pub fn train(&self, syllabifier: &Syllabifier) -> Result<TrainArtifacts> {
        let prepared = self.prepare(syllabifier)?;
        log::info!("effective plan:\n{}", self.to_toml());
        let out = &self.output;
        write_text(&sidecar(out, "plan.toml"), &self.to_toml())?;
        prepared.vocab.save(sidecar(out, "vocab"))?;
        prepared.lexicon.save(sidecar(out, "lexicon"))?;
        if let Some(m) = &prepared.manifest {
            m.write(sidecar(out, "split.json"))?;
        }

        let log_path = self.log_path();
        let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let log =
            TrainLog::new(std::io::BufWriter::new(file)).map_err(|e| Error::io(&log_path, e))?;
        let mut obs = ArtifactWriter {
            log,
            log_path,
            output: out.clone(),
            vocab: &prepared.vocab,
        };
        let init = ModelParams::<f32>::init(prepared.dims, self.seed);
        let PlanOutcome {
            params,
            optimizer,
            report,
        } = run_plan(&prepared.plan, init, &mut obs)?;
        let mut ckpt = Checkpoint::new(params, prepared.vocab.hash());
        ckpt.optimizer = optimizer;
        ckpt.save(out)?;
        Ok(TrainArtifacts {
            checkpoint: ckpt,
            report,
            prepared,
        })
    }
}

/// Everything a plan needs before the first epoch.
pub struct PreparedPlan {
    pub dims: Dims,
    pub vocab: Vocabulary,
    pub plan: TrainPlan,
    pub lexicon: Lexicon,
    pub manifest: Option<SplitManifest>,
}

pub struct TrainArtifacts {
    pub checkpoint: Checkpoint,
    pub report: PlanReport,
    pub prepared: PreparedPlan,
}

/// `model.ckpt` → `model.<ext>`
pub fn sidecar(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct ArtifactWriter<'a, W: std::io::Write> {
    log: TrainLog<W>,
    log_path: PathBuf,
    output: PathBuf,
    vocab: &'a Vocabulary,
}

impl<W: std::io::Write> TrainObserver<f32> for ArtifactWriter<'_, W> {
    fn epoch(&mut self, stage: &str, record: &super::EpochRecord) -> Result<()> {
        self.log
            .record(stage, record)
            .map_err(|e| Error::io(&self.log_path, e))
    }

    fn stage_done(
        &mut self,
        report: &StageReport,
        params: &ModelParams<f32>,
        optimizer: Option<&Adam<f32>>,
    ) -> Result<()> {
        let mut ckpt = Checkpoint::new(params.clone(), self.vocab.hash());
        ckpt.optimizer = optimizer.cloned();
        ckpt.save(sidecar(&self.output, &format!("{}.ckpt", report.name)))
    }
}
