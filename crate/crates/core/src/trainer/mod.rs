//! Staged training with early stopping on validation perplexity.

pub mod config;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::{batch_loss, perplexity, Adam, AdamConfig, ModelParams, Real};
use crate::vocab::TokenSeq;

pub use config::{PlanConfig, PlanOverrides, Preset, PresetCorpora, StageConfig};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_PATIENCE: usize = 3;
pub const DEFAULT_MAX_EPOCHS: usize = 50;
pub const DEFAULT_DROPOUT: f64 = 0.3;

#[derive(Clone, Debug)]
pub struct TrainStage {
    pub name: String,
    pub corpus: Vec<TokenSeq>,
    pub val: Vec<TokenSeq>,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub optimizer: AdamConfig,
}

impl TrainStage {
    /// A stage with default hyperparameters.
    pub fn new(name: impl Into<String>, corpus: Vec<TokenSeq>, val: Vec<TokenSeq>) -> Self {
        TrainStage {
            name: name.into(),
            corpus,
            val,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: DEFAULT_LR,
            patience: DEFAULT_PATIENCE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            dropout: DEFAULT_DROPOUT,
            optimizer: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::InvalidConfig(format!(
                "stage `{}`: {msg}",
                self.name
            )))
        };
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.val.is_empty() {
            return bad("validation set is empty".into());
        }
        if self.corpus.is_empty() {
            return bad("training corpus is empty".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainPlan {
    pub stages: Vec<TrainStage>,
    pub seed: u64,
    pub test: Option<Vec<TokenSeq>>,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig("plan has no stages".into()));
        }
        self.stages.iter().try_for_each(TrainStage::validate)
    }
}

/// One row of a stage history. Epochs are numbered from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ppl: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct StageReport {
    pub name: String,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

impl StageReport {
    pub fn best_val_ppl(&self) -> Option<f64> {
        let e = self.best_epoch?;
        Some(self.history[e - 1].val_ppl)
    }
}

#[derive(Clone, Debug)]
pub struct PlanReport {
    pub stages: Vec<StageReport>,
    pub test_ppl: Option<f64>,
}

impl PlanReport {
    pub fn final_val_ppl(&self) -> Option<f64> {
        self.stages.last()?.best_val_ppl()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Worse,
    Stop,
}

/// Tracks the best validation perplexity and how many epochs have passed
/// without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_ppl: f64) -> Verdict {
        match self.best {
            Some((_, best)) if val_ppl >= best => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Worse
                }
            }
            _ => {
                self.best = Some((epoch, val_ppl));
                self.bad_epochs = 0;
                Verdict::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hooks called while a plan runs. Both default to doing nothing.
pub trait TrainObserver<T> {
    fn epoch(&mut self, _stage: &str, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    fn stage_done(
        &mut self,
        _report: &StageReport,
        _params: &ModelParams<T>,
        _optimizer: Option<&Adam<T>>,
    ) -> Result<()> {
        Ok(())
    }
}

impl<T> TrainObserver<T> for () {}

/// Trained parameters with the optimizer state of the same epoch.
pub struct StageOutcome<T> {
    pub params: ModelParams<T>,
    pub optimizer: Option<Adam<T>>,
    pub report: StageReport,
}

/// Trains one stage from `params` with a fresh optimizer. Each epoch visits
/// the corpus in a seeded random order; the parameters of the epoch with the
/// lowest validation perplexity are returned.
pub fn run_stage<T: Real>(
    params: &ModelParams<T>,
    stage: &TrainStage,
    seed: u64,
    obs: &mut dyn TrainObserver<T>,
) -> Result<StageOutcome<T>> {
    stage.validate()?;
    let mut report = StageReport {
        name: stage.name.clone(),
        history: Vec::new(),
        best_epoch: None,
    };
    let mut best = (params.clone(), None);
    let mut current = params.clone();
    let mut opt = Adam::new(params, stage.optimizer);
    let mut stopper = EarlyStopping::new(stage.patience);
    let mut order: Vec<usize> = (0..stage.corpus.len()).collect();

    for epoch in 1..=stage.max_epochs {
        let started = Instant::now();
        let epoch_seed = mix_seed(seed, epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));

        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (b, chunk) in order.chunks(stage.batch_size).enumerate() {
            let batch: Vec<&TokenSeq> = chunk.iter().map(|&i| &stage.corpus[i]).collect();
            let (loss, grads) = batch_loss(
                &batch,
                &current,
                stage.dropout,
                mix_seed(epoch_seed, b as u64),
            )?;
            let diverged = || Error::NonFiniteLoss {
                stage: stage.name.clone(),
                epoch,
                batch: b + 1,
            };
            if !loss.is_finite() {
                return Err(diverged());
            }
            opt.step(&mut current, grads, stage.lr);
            if !current.is_finite() {
                return Err(diverged());
            }
            let n: usize = batch.iter().map(|s| s.len() - 1).sum();
            loss_sum += loss * n as f64;
            steps += n;
        }

        let val_ppl = perplexity(&stage.val, &current)?;
        if !val_ppl.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: stage.name.clone(),
                epoch,
                batch: 0,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_ppl,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "{} epoch {epoch}: train loss {:.4}, val ppl {:.4}",
            stage.name,
            record.train_loss,
            record.val_ppl
        );
        obs.epoch(&stage.name, &record)?;
        report.history.push(record);

        let verdict = stopper.observe(epoch, val_ppl);
        if verdict == Verdict::Improved {
            best = (current.clone(), Some(opt.clone()));
            report.best_epoch = Some(epoch);
        }
        if verdict == Verdict::Stop {
            break;
        }
    }
    Ok(StageOutcome {
        params: best.0,
        optimizer: best.1,
        report,
    })
}

/// Final parameters of a plan with per-stage histories.
pub struct PlanOutcome<T> {
    pub params: ModelParams<T>,
    pub optimizer: Option<Adam<T>>,
    pub report: PlanReport,
}

/// Runs the stages in order, each starting from the previous stage's best
/// parameters, and evaluates the test set if the plan has one.
pub fn run_plan<T: Real>(
    plan: &TrainPlan,
    init: ModelParams<T>,
    obs: &mut dyn TrainObserver<T>,
) -> Result<PlanOutcome<T>> {
    plan.validate()?;
    let mut params = init;
    let mut optimizer = None;
    let mut stages = Vec::with_capacity(plan.stages.len());
    for (k, stage) in plan.stages.iter().enumerate() {
        let out = run_stage(&params, stage, mix_seed(plan.seed, k as u64), obs)?;
        obs.stage_done(&out.report, &out.params, out.optimizer.as_ref())?;
        params = out.params;
        optimizer = out.optimizer;
        stages.push(out.report);
    }
    let test_ppl = match &plan.test {
        Some(test) => Some(perplexity(test, &params)?),
        None => None,
    };
    Ok(PlanOutcome {
        params,
        optimizer,
        report: PlanReport { stages, test_ppl },
    })
}

pub const LOG_HEADER: &str = "stage\tepoch\ttrain_loss\tval_ppl\twall_seconds";

/// One tab-separated log line (no trailing newline).
pub fn log_line(stage: &str, r: &EpochRecord) -> String {
    format!(
        "{stage}\t{}\t{:.6}\t{:.6}\t{:.3}",
        r.epoch, r.train_loss, r.val_ppl, r.wall_seconds
    )
}

/// Writes the training log as epochs complete.
pub struct TrainLog<W: Write> {
    out: W,
}

impl<W: Write> TrainLog<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{LOG_HEADER}")?;
        Ok(TrainLog { out })
    }

    pub fn record(&mut self, stage: &str, r: &EpochRecord) -> std::io::Result<()> {
        writeln!(self.out, "{}", log_line(stage, r))?;
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Dims;

    #[test]
    fn early_stopping_example() {
        let mut s = EarlyStopping::new(1);
        assert_eq!(s.observe(1, 10.0), Verdict::Improved);
        assert_eq!(s.observe(2, 9.0), Verdict::Improved);
        assert_eq!(s.observe(3, 9.5), Verdict::Stop);
        assert_eq!(s.best(), Some((2, 9.0)));
    }

    #[test]
    fn early_stopping_needs_strict_improvement() {
        let mut s = EarlyStopping::new(2);
        s.observe(1, 5.0);
        assert_eq!(s.observe(2, 5.0), Verdict::Worse);
        assert_eq!(s.observe(3, 4.0), Verdict::Improved);
        assert_eq!(s.observe(4, 4.5), Verdict::Worse);
        assert_eq!(s.observe(5, 4.0), Verdict::Stop);
        assert_eq!(s.best(), Some((3, 4.0)));
    }

    fn tiny_stage() -> TrainStage {
        let seqs: Vec<TokenSeq> = vec![
            TokenSeq(vec![1, 5, 6, 0, 7, 2, 3]),
            TokenSeq(vec![1, 8, 6, 2, 3]),
            TokenSeq(vec![1, 7, 0, 5, 2, 3]),
        ];
        let mut stage = TrainStage::new("tiny", seqs.clone(), seqs);
        stage.batch_size = 2;
        stage.dropout = 0.0;
        stage
    }

    #[test]
    fn zero_epochs_returns_input() {
        let p = ModelParams::<f32>::init(Dims::new(9, 4, 3), 1);
        let mut stage = tiny_stage();
        stage.max_epochs = 0;
        let out = run_stage(&p, &stage, 0, &mut ()).unwrap();
        assert_eq!(out.params, p);
        assert!(out.report.history.is_empty());
        assert_eq!(out.report.best_epoch, None);
    }

    #[test]
    fn returns_argmin_epoch_params() {
        let p = ModelParams::<f32>::init(Dims::new(9, 4, 3), 1);
        let mut stage = tiny_stage();
        stage.max_epochs = 6;
        stage.lr = 0.05;
        let out = run_stage(&p, &stage, 3, &mut ()).unwrap();
        let best = out.report.best_val_ppl().unwrap();
        assert!(out.report.history.iter().all(|r| r.val_ppl >= best));
        let ppl = perplexity(&stage.val, &out.params).unwrap();
        assert_eq!(ppl, best);
    }

    #[test]
    fn divergence_is_reported() {
        let mut p = ModelParams::<f32>::init(Dims::new(9, 4, 3), 1);
        p.w_proj.as_mut_slice()[0] = f32::NAN;
        let err = run_stage(&p, &tiny_stage(), 0, &mut ()).err().unwrap();
        assert!(err.is_divergence(), "{err}");
        assert!(matches!(
            err,
            Error::NonFiniteLoss {
                epoch: 1,
                batch: 1,
                ..
            }
        ));
    }

    #[test]
    fn one_small_step_lowers_batch_loss() {
        let p = ModelParams::<f64>::init(Dims::new(9, 4, 3), 1);
        let stage = tiny_stage();
        let batch: Vec<&TokenSeq> = stage.corpus.iter().collect();
        let (before, grads) = batch_loss(&batch, &p, 0.0, 0).unwrap();
        let mut q = p.clone();
        Adam::new(&p, AdamConfig::default()).step(&mut q, grads, 1e-4);
        let (after, _) = batch_loss(&batch, &q, 0.0, 0).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn plan_validation() {
        let plan = TrainPlan {
            stages: vec![],
            seed: 0,
            test: None,
        };
        assert!(plan.validate().is_err());
        let mut stage = tiny_stage();
        stage.patience = 0;
        assert!(stage.validate().is_err());
        let mut stage = tiny_stage();
        stage.val.clear();
        assert!(stage.validate().is_err());
    }

    #[test]
    fn single_stage_plan_matches_run_stage() {
        let p = ModelParams::<f32>::init(Dims::new(9, 4, 3), 1);
        let mut stage = tiny_stage();
        stage.max_epochs = 3;
        let plan = TrainPlan {
            stages: vec![stage.clone()],
            seed: 11,
            test: Some(stage.val.clone()),
        };
        let a = run_plan(&plan, p.clone(), &mut ()).unwrap();
        let b = run_stage(&p, &stage, mix_seed(11, 0), &mut ()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.report.test_ppl, b.report.best_val_ppl());
    }

    #[test]
    fn log_format() {
        let mut buf = Vec::new();
        let mut log = TrainLog::new(&mut buf).unwrap();
        let r = EpochRecord {
            epoch: 2,
            train_loss: 1.5,
            val_ppl: 4.25,
            wall_seconds: 0.5,
        };
        log.record("dc", &r).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "stage\tepoch\ttrain_loss\tval_ppl\twall_seconds\ndc\t2\t1.500000\t4.250000\t0.500\n"
        );
    }
}
