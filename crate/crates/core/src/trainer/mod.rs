//! Training loop: round-robin objective schedule, inverse square-root learning
//! rate with linear warmup, Adam, JSON-lines logging and resumable checkpoints.
//!
//! Everything random in step `t` is drawn from a generator seeded by
//! `(seed, t)`, and batches are cut from per-epoch permutations, so a run
//! resumed from any checkpoint replays the remaining steps bit for bit.

mod adam;
mod data;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use data::{LoadError, TrainData};

use crate::lang::{LanguageTag, SourceLang};
use crate::neural::{Checkpoint, DecodeOptions, Model, ModelConfig, NeuralError};
use crate::objectives::{objective_step, NoiseConfig, Objective, ObjectiveError, Sample, StepContext};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} needs parallel code/IR records but the parallel shard is empty")]
    MissingIR(Objective),
    #[error("loss became non-finite at step {step}; the last checkpoint is kept")]
    NonFiniteLoss { step: u64 },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objectives: Vec<Objective>,
    /// Total number of optimizer updates.
    pub steps: u64,
    /// Records per objective step.
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: u64,
    pub adam: AdamConfig,
    /// Save a checkpoint every this many updates (0: only at the start and end).
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Dialect back-translation through IR, for the IR pivot.
    pub pivot_mode: bool,
    /// Languages to train on; empty means every language present in the data.
    pub languages: Vec<SourceLang>,
    pub bt_max_len: usize,
    /// Parallel records decoded greedily for the validation metrics.
    pub validation_samples: usize,
    /// Rescale gradients whose global norm exceeds this.
    pub clip_norm: Option<f64>,
    pub noise: NoiseConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objectives: vec![
                Objective::Mlm,
                Objective::Ae,
                Objective::Bt,
                Objective::Tlm,
                Objective::Tae,
                Objective::IrGen,
            ],
            steps: 1000,
            batch_size: 8,
            lr: 1e-5,
            warmup: 200,
            adam: AdamConfig::default(),
            checkpoint_every: 500,
            seed: 0,
            pivot_mode: false,
            languages: Vec::new(),
            bt_max_len: 128,
            validation_samples: 8,
            clip_norm: None,
            noise: NoiseConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// MLM, AE and BT only.
    pub fn baseline() -> Self {
        Self {
            objectives: vec![Objective::Mlm, Objective::Ae, Objective::Bt],
            ..Self::default()
        }
    }

    #[cfg(feature = "native")]
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        toml::from_str(text).map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.objectives.is_empty() {
            return bad("the objective list is empty".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.pivot_mode && !(self.objectives.contains(&Objective::Bt) && self.objectives.contains(&Objective::Decomp)) {
            return bad("pivot_mode trains through BT and Decomp; list both objectives".into());
        }
        self.noise.validate().map_err(TrainError::InvalidConfig)?;
        self.model.validate()?;
        Ok(())
    }
}

/// Objective for step `step`: `objectives[step mod |objectives|]`.
pub fn schedule(step: u64, objectives: &[Objective]) -> Objective {
    objectives[(step % objectives.len() as u64) as usize]
}

/// `base · min(step / warmup, √(warmup / step))`, with step clamped to ≥ 1 under the root.
pub fn lr_at(step: u64, base: f64, warmup: u64) -> f64 {
    let s = step.max(1) as f64;
    if warmup == 0 {
        return base / s.sqrt();
    }
    let w = warmup as f64;
    base * (step as f64 / w).min((w / s).sqrt())
}

/// The generator for everything random in step `step`.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Step {
        step: u64,
        objective: Objective,
        loss: f64,
        tokens: usize,
        lr: f64,
        grad_norm: f64,
    },
    Checkpoint {
        step: u64,
        path: Option<PathBuf>,
        metrics: BTreeMap<String, f64>,
    },
}

pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub cfg: TrainConfig,
    pub vocab_hash: String,
    data: TrainData,
    ctx: StepContext,
    perms: HashMap<(Objective, u64), Vec<usize>>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, data: TrainData, vocab_hash: &str) -> Result<Trainer, TrainError> {
        let model = Model::new(cfg.model.clone())?;
        let adam = Adam::new(cfg.adam, model.param_count());
        Self::assemble(cfg, data, vocab_hash, model, adam)
    }

    /// Continues from `ck`; the checkpoint's model configuration wins over `cfg.model`.
    pub fn resume(ck: &Checkpoint, mut cfg: TrainConfig, data: TrainData, vocab_hash: &str) -> Result<Trainer, TrainError> {
        ck.expect_vocab(vocab_hash)?;
        let model = ck.model()?;
        cfg.model = ck.config.clone();
        let mut adam = Adam::new(cfg.adam, model.param_count());
        if let Some(state) = &ck.optimizer {
            adam.state = state.clone();
        }
        adam.t = ck.step;
        Self::assemble(cfg, data, vocab_hash, model, adam)
    }

    fn assemble(cfg: TrainConfig, data: TrainData, vocab_hash: &str, model: Model, adam: Adam) -> Result<Trainer, TrainError> {
        cfg.validate()?;
        let languages = if cfg.languages.is_empty() { data.languages() } else { cfg.languages.clone() };
        for &o in &cfg.objectives {
            let pool = if o.requires_ir() { &data.para } else { &data.mono };
            if pool.is_empty() {
                return Err(if o.requires_ir() {
                    TrainError::MissingIR(o)
                } else {
                    TrainError::InvalidConfig(format!("{o} needs monolingual records but none were loaded"))
                });
            }
        }
        if cfg.objectives.contains(&Objective::Bt) && languages.len() < 2 {
            return Err(TrainError::InvalidConfig("BT needs at least two source languages".into()));
        }
        let ctx = StepContext {
            noise: cfg.noise.clone(),
            languages,
            pivot: cfg.pivot_mode,
            bt_max_len: cfg.bt_max_len,
        };
        Ok(Trainer {
            model,
            adam,
            cfg,
            vocab_hash: vocab_hash.to_string(),
            data,
            ctx,
            perms: HashMap::new(),
        })
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.adam.t
    }

    pub fn data(&self) -> &TrainData {
        &self.data
    }

    /// Records for the `occurrence`-th step of `objective`: consecutive slices
    /// of a fresh permutation of the pool per epoch.
    fn batch(&mut self, objective: Objective, occurrence: u64) -> Vec<Sample> {
        let pool = if objective.requires_ir() { &self.data.para } else { &self.data.mono };
        let n = pool.len() as u64;
        let b = self.cfg.batch_size as u64;
        let mut out = Vec::with_capacity(b as usize);
        for j in occurrence * b..(occurrence + 1) * b {
            let epoch = j / n;
            let perm = self.perms.entry((objective, epoch)).or_insert_with(|| {
                let mut idx: Vec<usize> = (0..n as usize).collect();
                let mut rng = step_rng(self.cfg.seed ^ 0x9e37_79b9_7f4a_7c15, epoch * 8 + objective as u64);
                idx.shuffle(&mut rng);
                idx
            });
            out.push(pool[perm[(j % n) as usize]].clone());
        }
        let first_epoch = occurrence * b / n;
        self.perms.retain(|&(o, e), _| o != objective || e >= first_epoch);
        out
    }

    /// Applies one update and returns its log entry.
    pub fn train_step(&mut self) -> Result<LogEntry, TrainError> {
        let index = self.adam.t;
        let objective = schedule(index, &self.cfg.objectives);
        let occurrence = index / self.cfg.objectives.len() as u64;
        let batch = self.batch(objective, occurrence);
        let mut rng = step_rng(self.cfg.seed, index);
        let mut grads = vec![0.0; self.model.param_count()];
        let report = match objective_step(objective, &batch, &self.model, &self.ctx, &mut rng, Some(&mut grads)) {
            Err(ObjectiveError::Neural(NeuralError::NonFiniteLoss(_))) => {
                return Err(TrainError::NonFiniteLoss { step: index + 1 })
            }
            r => r?,
        };
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(TrainError::NonFiniteLoss { step: index + 1 });
        }
        if let Some(max) = self.cfg.clip_norm {
            if norm > max {
                grads.iter_mut().for_each(|g| *g *= max / norm);
            }
        }
        let lr = lr_at(index + 1, self.cfg.lr, self.cfg.warmup);
        self.adam.update(&mut self.model.params, &grads, lr);
        Ok(LogEntry::Step {
            step: self.adam.t,
            objective,
            loss: report.loss,
            tokens: report.tokens,
            lr,
            grad_norm: norm,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model, &self.vocab_hash, self.adam.t);
        ck.optimizer = Some(self.adam.state.clone());
        ck.extra = serde_json::to_value(&self.cfg).unwrap_or(serde_json::Value::Null);
        ck
    }

    /// Greedy exact-match rates on the first parallel records.
    pub fn validation_metrics(&self) -> BTreeMap<String, f64> {
        let mut metrics = BTreeMap::new();
        let set: Vec<&Sample> = self.data.para.iter().take(self.cfg.validation_samples).collect();
        if set.is_empty() {
            return metrics;
        }
        let opts = DecodeOptions::text(self.model.config.max_len);
        let mut hits = [0usize; 2];
        for s in &set {
            let (x, z) = (s.code_input(), s.ir_input().expect("parallel records carry IR"));
            if self.model.greedy_decode(&x, LanguageTag::Ir(s.lang), &opts).ok().as_ref() == Some(&z.ids) {
                hits[0] += 1;
            }
            if self.model.greedy_decode(&z, LanguageTag::Source(s.lang), &opts).ok().as_ref() == Some(&x.ids) {
                hits[1] += 1;
            }
        }
        metrics.insert("irgen_exact".into(), hits[0] as f64 / set.len() as f64);
        metrics.insert("decomp_exact".into(), hits[1] as f64 / set.len() as f64);
        metrics
    }

    /// Trains up to `cfg.steps`, reporting every entry to `sink` and saving
    /// checkpoints to `out_dir` when given.
    pub fn run(&mut self, out_dir: Option<&Path>, sink: &mut dyn FnMut(&LogEntry)) -> Result<(), TrainError> {
        if self.adam.t == 0 {
            self.save(out_dir, sink)?;
        }
        while self.adam.t < self.cfg.steps {
            let entry = self.train_step()?;
            sink(&entry);
            let t = self.adam.t;
            if t == self.cfg.steps || (self.cfg.checkpoint_every > 0 && t % self.cfg.checkpoint_every == 0) {
                self.save(out_dir, sink)?;
            }
        }
        Ok(())
    }

    fn save(&self, out_dir: Option<&Path>, sink: &mut dyn FnMut(&LogEntry)) -> Result<(), TrainError> {
        let path = match out_dir {
            Some(dir) => {
                let p = checkpoint_path(dir, self.adam.t);
                self.checkpoint().save(&p)?;
                let last = dir.join("last.ckpt");
                self.checkpoint().save(&last)?;
                Some(p)
            }
            None => None,
        };
        sink(&LogEntry::Checkpoint {
            step: self.adam.t,
            path,
            metrics: self.validation_metrics(),
        });
        Ok(())
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step-{step:08}.ckpt"))
}

/// Runs training into `out_dir`, appending to `out_dir/log.jsonl`, and returns
/// the final checkpoint. Resumes from `out_dir/last.ckpt` when `resume` is set
/// and that file exists.
pub fn train(data: TrainData, cfg: TrainConfig, vocab_hash: &str, out_dir: &Path, resume: bool) -> Result<Checkpoint, TrainError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TrainError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let last = out_dir.join("last.ckpt");
    let mut trainer = if resume && last.exists() {
        Trainer::resume(&Checkpoint::load(&last)?, cfg, data, vocab_hash)?
    } else {
        Trainer::new(cfg, data, vocab_hash)?
    };
    let log_path = out_dir.join("log.jsonl");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(io(&log_path))?;
    let mut write_err = None;
    let result = trainer.run(Some(out_dir), &mut |entry| {
        if let LogEntry::Step { step, objective, loss, .. } = entry {
            log::info!("step {step} {objective} loss {loss:.4}");
        }
        let line = serde_json::to_string(entry).expect("log entries serialize");
        if let Err(e) = writeln!(log, "{line}") {
            write_err.get_or_insert(e);
        }
    });
    if let Some(e) = write_err {
        return Err(TrainError::Io { path: log_path, source: e });
    }
    result?;
    Ok(trainer.checkpoint())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_round_robin() {
        let objs = [Objective::Mlm, Objective::Ae, Objective::Bt];
        let picks: Vec<Objective> = (0..9).map(|s| schedule(s, &objs)).collect();
        for o in objs {
            assert_eq!(picks.iter().filter(|&&p| p == o).count(), 3);
        }
        assert!((0..5).all(|s| schedule(s, &[Objective::Decomp]) == Objective::Decomp));
    }

    #[test]
    fn lr_schedule_landmarks() {
        assert_eq!(lr_at(200, 1e-3, 200), 1e-3);
        assert!((lr_at(800, 1e-3, 200) - 5e-4).abs() < 1e-18);
        assert_eq!(lr_at(0, 1e-3, 200), 0.0);
        assert!((lr_at(100, 1e-3, 200) - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn empty_objectives_rejected() {
        let cfg = TrainConfig {
            objectives: vec![],
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(TrainError::InvalidConfig(_))));
    }
}
