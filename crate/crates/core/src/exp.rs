//! Experiment orchestration: configs, variant phase schedules, seed
//! replication, candidate sweeps, grid search, and artifact export.
//!
//! Every run is a pure function of (config, seeds): the data split comes
//! from `data_seed`, each seed owns its ChaCha stream, and re-running
//! reproduces all numeric outputs bit-exactly on the same platform.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentParams;
use crate::baselines::{baseline_mp_step, evaluate_baseline, BaselineMethod, BaselineSenderParams};
use crate::data::{self, DatasetSplit};
use crate::games::{
    self, evaluate, EvalReceiver, SenderMode, TrainHyper, TrainStepReport,
};
use crate::metrics::{
    accuracy, active_words, conditional_entropy, topsim, unique_messages, Transcript,
};
use crate::numcore::{AdamParams, NumError};
use crate::vq::Metric;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "VQEL")]
    Vqel,
    #[serde(rename = "GS_ST")]
    GsSt,
    #[serde(rename = "REINFORCE")]
    Reinforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "SP_S")]
    SpS,
    #[serde(rename = "SP_S_MP")]
    SpSMp,
    #[serde(rename = "SP_R")]
    SpR,
    #[serde(rename = "SP_R_MP")]
    SpRMp,
    #[serde(rename = "SP_SR_MP")]
    SpSrMp,
    #[serde(rename = "MP_only")]
    MpOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SenderUpdate {
    Frozen,
    #[serde(rename = "RL")]
    Rl,
    #[serde(rename = "RLPres")]
    RlPres,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReceiverUpdate {
    Frozen,
    FineTuned,
}

/// Everything needed to reproduce one experiment. Every field has a
/// default; a config file may set any subset and CLI flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub variant: Variant,
    pub sender_update: SenderUpdate,
    pub receiver_update: ReceiverUpdate,
    pub metric: Metric,
    pub dim: usize,
    pub k: usize,
    pub msg_len: usize,
    pub beta: f64,
    pub lr: f64,
    /// Learning rate for a pretrained sender during mutual play; `None`
    /// falls back to `lr`. Each agent owns its optimizer, so a sender
    /// being gently fine-tuned and a receiver learning from scratch can
    /// run at different rates.
    pub mp_sender_lr: Option<f64>,
    pub weight_decay: f64,
    pub t_sim: f64,
    pub tau_sample: f64,
    pub tau0: f64,
    pub ema_gamma: f64,
    pub ema_eps: f64,
    pub expiry_warmup: usize,
    pub expiry_every: usize,
    pub rl_baseline: bool,
    pub epochs_self: usize,
    pub epochs_mutual: usize,
    pub batch: usize,
    pub eval_batch: usize,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Vqel,
            variant: Variant::SpS,
            sender_update: SenderUpdate::Rl,
            receiver_update: ReceiverUpdate::FineTuned,
            metric: Metric::Cosine,
            dim: 64,
            k: 10,
            msg_len: 4,
            beta: 0.25,
            lr: 3e-4,
            mp_sender_lr: None,
            weight_decay: 1e-5,
            t_sim: 0.5,
            tau_sample: 0.1,
            tau0: 1.0,
            ema_gamma: 0.99,
            ema_eps: 1e-5,
            expiry_warmup: 200,
            expiry_every: 100,
            rl_baseline: true,
            epochs_self: 50,
            epochs_mutual: 50,
            batch: 32,
            eval_batch: 100,
            seeds: vec![1, 2, 3],
            data_seed: 17,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        if self.k == 0 || self.msg_len == 0 || self.dim == 0 {
            return bad("k, msg_len, and dim must be positive".into());
        }
        if self.batch < 2 {
            return bad("batch must be at least 2 (the contrastive loss needs distractors)".into());
        }
        if self.eval_batch < 2 || self.eval_batch > 1000 {
            return bad(format!(
                "eval_batch {} outside [2, 1000] (test split size)",
                self.eval_batch
            ));
        }
        if self.epochs_self + self.epochs_mutual == 0 {
            return bad("at least one training epoch is required".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds list must be nonempty".into());
        }
        if !(self.lr > 0.0) || !(self.t_sim > 0.0) || !(self.tau_sample > 0.0) {
            return bad("lr, t_sim, and tau_sample must be positive".into());
        }
        if let Some(mp_lr) = self.mp_sender_lr {
            if !(mp_lr > 0.0) {
                return bad("mp_sender_lr must be positive when set".into());
            }
        }
        if self.method == Method::Vqel
            && self.variant == Variant::MpOnly
            && self.sender_update == SenderUpdate::Frozen
        {
            return bad(
                "MP_only with a frozen sender can never invent a language; \
                 choose RL or RLPres"
                    .into(),
            );
        }
        Ok(())
    }

    /// Stable short hash of the full config document.
    pub fn fingerprint(&self) -> String {
        let doc = serde_json::to_string(self).expect("config serializes");
        let mut h = DefaultHasher::new();
        doc.hash(&mut h);
        format!("{:016x}", h.finish())
    }

    fn hyper(&self) -> TrainHyper {
        TrainHyper {
            beta: self.beta,
            t_sim: self.t_sim,
            tau_sample: self.tau_sample,
            adam: AdamParams::new(self.lr, self.weight_decay),
            mp_sender_adam: self
                .mp_sender_lr
                .map(|lr| AdamParams::new(lr, self.weight_decay)),
            rl_baseline: self.rl_baseline,
            expiry_warmup: self.expiry_warmup,
            expiry_every: self.expiry_every,
        }
    }

    fn sender_mode(&self) -> SenderMode {
        match self.sender_update {
            SenderUpdate::Frozen => SenderMode::Frozen,
            SenderUpdate::Rl => SenderMode::Rl,
            SenderUpdate::RlPres => SenderMode::RlPres,
        }
    }

    fn new_agent(&self, rng: &mut ChaCha8Rng) -> AgentParams {
        AgentParams::new(
            self.dim,
            self.k,
            self.msg_len,
            self.metric,
            self.ema_gamma,
            self.ema_eps,
            rng,
        )
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    /// Process exit code contract: 1 config, 2 numerics, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numeric(_) => 2,
            RunError::Io(_) => 3,
        }
    }
}

impl From<NumError> for RunError {
    fn from(e: NumError) -> Self {
        RunError::Numeric(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub active_words: f64,
    pub topsim: f64,
    pub conditional_entropy: f64,
    pub unique_messages: usize,
    /// Mean training loss per epoch, in phase order.
    pub epoch_losses: Vec<f64>,
}

/// Mean and cross-seed standard deviation; the deviation is absent when
/// only one seed ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: Option<f64>,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() >= 2 {
        let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        Some((ss / (n - 1.0)).sqrt())
    } else {
        None
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    /// Entropy values use this logarithm base throughout.
    pub entropy_log_base: u32,
    pub per_seed: Vec<SeedResult>,
    pub accuracy: MeanStd,
    pub active_words: MeanStd,
    pub topsim: MeanStd,
    pub conditional_entropy: MeanStd,
    pub unique_messages: MeanStd,
    /// Wall-clock time of the whole run; excluded from determinism checks.
    pub wall_seconds: f64,
}

impl RunResult {
    /// Everything except wall-clock, which legitimately varies between
    /// otherwise identical invocations.
    pub fn numeric_eq(&self, other: &RunResult) -> bool {
        self.config == other.config
            && self.fingerprint == other.fingerprint
            && self.per_seed == other.per_seed
            && self.accuracy == other.accuracy
            && self.active_words == other.active_words
            && self.topsim == other.topsim
            && self.conditional_entropy == other.conditional_entropy
            && self.unique_messages == other.unique_messages
    }
}

// ---------------------------------------------------------------------------
// Trained models and checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrainedPair {
    Vqel {
        sender: AgentParams,
        receiver: Option<AgentParams>,
    },
    Baseline {
        sender: BaselineSenderParams,
        receiver: AgentParams,
    },
}

impl TrainedPair {
    pub fn evaluate(
        &self,
        eval_ids: &[usize],
        candidates_b: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Transcript>, RunError> {
        let t = match self {
            TrainedPair::Vqel { sender, receiver } => match receiver {
                None => evaluate(sender, &EvalReceiver::SelfPlay, eval_ids, candidates_b, rng)?,
                Some(r) => {
                    evaluate(sender, &EvalReceiver::Pair(r), eval_ids, candidates_b, rng)?
                }
            },
            TrainedPair::Baseline { sender, receiver } => {
                evaluate_baseline(sender, receiver, eval_ids, candidates_b, rng)?
            }
        };
        Ok(t)
    }
}

/// Enough state to resume or re-evaluate a finished seed: every parameter
/// tensor (codebook EMA state included) plus the training RNG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub fingerprint: String,
    pub seed: u64,
    pub pair: TrainedPair,
    pub rng: ChaCha8Rng,
}

pub const CHECKPOINT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Training schedules
// ---------------------------------------------------------------------------

fn epoch_mean(reports: &[TrainStepReport]) -> f64 {
    reports.iter().map(|r| r.total).sum::<f64>() / reports.len().max(1) as f64
}

struct SelfPlayPhase<'a> {
    agent: &'a mut AgentParams,
    step: &'a mut usize,
}

fn run_self_play(
    cfg: &ExperimentConfig,
    phase: SelfPlayPhase,
    train_ids: &[usize],
    epochs: usize,
    rng: &mut ChaCha8Rng,
    losses: &mut Vec<f64>,
) -> Result<(), RunError> {
    let hp = cfg.hyper();
    for _ in 0..epochs {
        let mut reports = Vec::new();
        for batch in data::epoch_batches(train_ids, cfg.batch, rng) {
            let r = games::self_play_step(phase.agent, &batch, &hp, *phase.step, rng)?;
            *phase.step += 1;
            reports.push(r);
        }
        losses.push(epoch_mean(&reports));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_mutual_play(
    cfg: &ExperimentConfig,
    sender: &mut AgentParams,
    receiver: &mut AgentParams,
    sender_step: &mut usize,
    train_ids: &[usize],
    epochs: usize,
    receiver_trainable: bool,
    rng: &mut ChaCha8Rng,
    losses: &mut Vec<f64>,
) -> Result<(), RunError> {
    let hp = cfg.hyper();
    let mode = cfg.sender_mode();
    for _ in 0..epochs {
        let mut reports = Vec::new();
        for batch in data::epoch_batches(train_ids, cfg.batch, rng) {
            let r = games::mutual_play_step(
                sender,
                receiver,
                &batch,
                &hp,
                mode,
                receiver_trainable,
                *sender_step,
                rng,
            )?;
            *sender_step += 1;
            reports.push(r);
        }
        losses.push(epoch_mean(&reports));
    }
    Ok(())
}

/// Train one seed end to end per the configured variant's phase schedule.
pub fn train_one(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(TrainedPair, Vec<f64>, ChaCha8Rng), RunError> {
    let split = make_split(cfg);
    let train_ids = &split.train;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::new();

    if cfg.method != Method::Vqel {
        // Baseline senders play 100 mutual-play epochs against a fresh
        // receiver — the same total budget as 50 SP + 50 MP.
        let bm = match cfg.method {
            Method::GsSt => BaselineMethod::GsSt,
            Method::Reinforce => BaselineMethod::Reinforce,
            Method::Vqel => unreachable!(),
        };
        let mut sender =
            BaselineSenderParams::new(bm, cfg.dim, cfg.k, cfg.msg_len, cfg.tau0, &mut rng);
        let mut receiver = cfg.new_agent(&mut rng);
        let hp = cfg.hyper();
        for _ in 0..cfg.epochs_self + cfg.epochs_mutual {
            let mut reports = Vec::new();
            for batch in data::epoch_batches(train_ids, cfg.batch, &mut rng) {
                reports.push(baseline_mp_step(&mut sender, &mut receiver, &batch, &hp, &mut rng)?);
            }
            losses.push(epoch_mean(&reports));
        }
        return Ok((TrainedPair::Baseline { sender, receiver }, losses, rng));
    }

    let pair = match cfg.variant {
        Variant::SpS | Variant::SpR => {
            let mut agent = cfg.new_agent(&mut rng);
            let mut step = 0;
            run_self_play(
                cfg,
                SelfPlayPhase { agent: &mut agent, step: &mut step },
                train_ids,
                cfg.epochs_self,
                &mut rng,
                &mut losses,
            )?;
            TrainedPair::Vqel { sender: agent, receiver: None }
        }
        Variant::SpSMp => {
            let mut sender = cfg.new_agent(&mut rng);
            let mut receiver = cfg.new_agent(&mut rng);
            let mut step = 0;
            run_self_play(
                cfg,
                SelfPlayPhase { agent: &mut sender, step: &mut step },
                train_ids,
                cfg.epochs_self,
                &mut rng,
                &mut losses,
            )?;
            run_mutual_play(
                cfg, &mut sender, &mut receiver, &mut step, train_ids, cfg.epochs_mutual,
                true, &mut rng, &mut losses,
            )?;
            TrainedPair::Vqel { sender, receiver: Some(receiver) }
        }
        Variant::SpSrMp => {
            let mut sender = cfg.new_agent(&mut rng);
            let mut receiver = cfg.new_agent(&mut rng);
            let mut s_step = 0;
            let mut r_step = 0;
            run_self_play(
                cfg,
                SelfPlayPhase { agent: &mut sender, step: &mut s_step },
                train_ids,
                cfg.epochs_self,
                &mut rng,
                &mut losses,
            )?;
            run_self_play(
                cfg,
                SelfPlayPhase { agent: &mut receiver, step: &mut r_step },
                train_ids,
                cfg.epochs_self,
                &mut rng,
                &mut losses,
            )?;
            run_mutual_play(
                cfg, &mut sender, &mut receiver, &mut s_step, train_ids, cfg.epochs_mutual,
                true, &mut rng, &mut losses,
            )?;
            TrainedPair::Vqel { sender, receiver: Some(receiver) }
        }
        Variant::SpRMp => {
            // Only the eventual receiver self-plays; a fresh sender must
            // then learn the receiver's private protocol over the symbolic
            // channel.
            let mut sender = cfg.new_agent(&mut rng);
            let mut receiver = cfg.new_agent(&mut rng);
            let mut r_step = 0;
            run_self_play(
                cfg,
                SelfPlayPhase { agent: &mut receiver, step: &mut r_step },
                train_ids,
                cfg.epochs_self,
                &mut rng,
                &mut losses,
            )?;
            let mut s_step = 0;
            let fine_tune = cfg.receiver_update == ReceiverUpdate::FineTuned;
            run_mutual_play(
                cfg, &mut sender, &mut receiver, &mut s_step, train_ids, cfg.epochs_mutual,
                fine_tune, &mut rng, &mut losses,
            )?;
            TrainedPair::Vqel { sender, receiver: Some(receiver) }
        }
        Variant::MpOnly => {
            let mut sender = cfg.new_agent(&mut rng);
            let mut receiver = cfg.new_agent(&mut rng);
            let mut step = 0;
            run_mutual_play(
                cfg, &mut sender, &mut receiver, &mut step, train_ids,
                cfg.epochs_self + cfg.epochs_mutual, true, &mut rng, &mut losses,
            )?;
            TrainedPair::Vqel { sender, receiver: Some(receiver) }
        }
    };
    Ok((pair, losses, rng))
}

pub fn make_split(cfg: &ExperimentConfig) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
    data::split(&mut rng)
}

/// The evaluation stream used for a seed's test pass; exposed so saved
/// checkpoints can be re-evaluated identically.
pub fn eval_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

fn seed_metrics(
    cfg: &ExperimentConfig,
    seed: u64,
    transcripts: &[Transcript],
) -> Result<SeedResult, RunError> {
    let mut ts_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5113_3bca_ac45_0175);
    Ok(SeedResult {
        seed,
        accuracy: accuracy(transcripts)?,
        active_words: active_words(transcripts, cfg.k),
        topsim: topsim(transcripts, &mut ts_rng)?,
        conditional_entropy: conditional_entropy(transcripts)?,
        unique_messages: unique_messages(transcripts),
        epoch_losses: Vec::new(),
    })
}

/// Execute the full run: every seed trained, evaluated on the test split,
/// and aggregated. Checkpoints are returned alongside so callers can
/// persist or re-evaluate without retraining.
pub fn run_full(cfg: &ExperimentConfig) -> Result<(RunResult, Vec<Checkpoint>), RunError> {
    cfg.validate()?;
    let started = Instant::now();
    let split = make_split(cfg);
    let fingerprint = cfg.fingerprint();
    let mut per_seed = Vec::new();
    let mut checkpoints = Vec::new();
    for &seed in &cfg.seeds {
        let (pair, losses, rng) = train_one(cfg, seed)?;
        let transcripts = pair.evaluate(&split.test, cfg.eval_batch, &mut eval_rng(seed))?;
        let mut sr = seed_metrics(cfg, seed, &transcripts)?;
        sr.epoch_losses = losses;
        per_seed.push(sr);
        checkpoints.push(Checkpoint {
            version: CHECKPOINT_VERSION,
            fingerprint: fingerprint.clone(),
            seed,
            pair,
            rng,
        });
    }
    let col = |f: fn(&SeedResult) -> f64| {
        per_seed.iter().map(f).collect::<Vec<_>>()
    };
    let result = RunResult {
        config: cfg.clone(),
        fingerprint,
        entropy_log_base: 2,
        accuracy: mean_std(&col(|s| s.accuracy)),
        active_words: mean_std(&col(|s| s.active_words)),
        topsim: mean_std(&col(|s| s.topsim)),
        conditional_entropy: mean_std(&col(|s| s.conditional_entropy)),
        unique_messages: mean_std(&col(|s| s.unique_messages as f64)),
        per_seed,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((result, checkpoints))
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunResult, RunError> {
    run_full(cfg).map(|(r, _)| r)
}

// ---------------------------------------------------------------------------
// Candidate sweep
// ---------------------------------------------------------------------------

/// Evaluate one trained model (first configured seed) at each candidate
/// count in `b_list`; returns (B, test accuracy) rows.
pub fn sweep_candidates(
    cfg: &ExperimentConfig,
    b_list: &[usize],
) -> Result<Vec<(usize, f64)>, RunError> {
    cfg.validate()?;
    let split = make_split(cfg);
    for &b in b_list {
        if b < 2 || b > split.test.len() {
            return Err(RunError::Config(format!(
                "candidate count {} outside [2, {}]",
                b,
                split.test.len()
            )));
        }
    }
    let seed = cfg.seeds[0];
    let (pair, _, _) = train_one(cfg, seed)?;
    sweep_trained(&pair, &split, seed, b_list)
}

/// The evaluation half of the sweep, reusable against an existing model.
pub fn sweep_trained(
    pair: &TrainedPair,
    split: &DatasetSplit,
    seed: u64,
    b_list: &[usize],
) -> Result<Vec<(usize, f64)>, RunError> {
    let mut rows = Vec::with_capacity(b_list.len());
    for &b in b_list {
        let mut rng = eval_rng(seed ^ (b as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
        let t = pair.evaluate(&split.test, b, &mut rng)?;
        rows.push((b, accuracy(&t)?));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub lr: Vec<f64>,
    pub tau_sample: Vec<f64>,
    pub tau0: Vec<f64>,
}

impl GridSpec {
    /// A grid holding every axis at the config's current value.
    pub fn singleton(cfg: &ExperimentConfig) -> Self {
        GridSpec {
            lr: vec![cfg.lr],
            tau_sample: vec![cfg.tau_sample],
            tau0: vec![cfg.tau0],
        }
    }
}

/// Multiplicative grid from `lo` to `hi`, stepping by ×10^0.1 (ten
/// log-uniform points per decade), endpoints included.
pub fn decade_grid(lo: f64, hi: f64) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo, "decade_grid needs 0 < lo <= hi");
    let step = 10f64.powf(0.1);
    let n = ((hi / lo).log10() / 0.1).round() as usize;
    (0..=n).map(|i| lo * step.powi(i as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lr: f64,
    pub tau_sample: f64,
    pub tau0: f64,
    pub valid_accuracy: f64,
}

/// Exhaustive search over the grid's cartesian product, selecting by
/// validation accuracy (first configured seed). Ties keep the earliest
/// point in iteration order.
pub fn grid_search(
    cfg: &ExperimentConfig,
    grid: &GridSpec,
) -> Result<(ExperimentConfig, Vec<GridRow>), RunError> {
    if grid.lr.is_empty() || grid.tau_sample.is_empty() || grid.tau0.is_empty() {
        return Err(RunError::Config("grid axes must be nonempty".into()));
    }
    let split = make_split(cfg);
    let seed = *cfg.seeds.first().ok_or_else(|| RunError::Config("seeds empty".into()))?;
    let mut table = Vec::new();
    let mut best: Option<(f64, ExperimentConfig)> = None;
    for &lr in &grid.lr {
        for &tau_sample in &grid.tau_sample {
            for &tau0 in &grid.tau0 {
                let mut point = cfg.clone();
                point.lr = lr;
                point.tau_sample = tau_sample;
                point.tau0 = tau0;
                point.validate()?;
                let (pair, _, _) = train_one(&point, seed)?;
                let t = pair.evaluate(&split.valid, point.eval_batch, &mut eval_rng(seed))?;
                let acc = accuracy(&t)?;
                table.push(GridRow { lr, tau_sample, tau0, valid_accuracy: acc });
                if best.as_ref().map_or(true, |(b, _)| acc > *b) {
                    best = Some((acc, point));
                }
            }
        }
    }
    Ok((best.unwrap().1, table))
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Atomic file write: stage beside the target, then rename into place, so
/// an aborted run never leaves a partial results file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn fmt4(x: f64) -> String {
    format!("{:.4}", x)
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub const SUMMARY_HEADER: &str =
    "method,variant,sender_update,ACC_mean,ACC_std,AW,TopSim,HCM";

/// One summary row per finished config, floats at 4 decimals.
pub fn summary_csv(results: &[&RunResult]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in results {
        let row = [
            enum_name(&r.config.method),
            enum_name(&r.config.variant),
            enum_name(&r.config.sender_update),
            fmt4(r.accuracy.mean),
            fmt4(r.accuracy.std.unwrap_or(0.0)),
            fmt4(r.active_words.mean),
            fmt4(r.topsim.mean),
            fmt4(r.conditional_entropy.mean),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Persist a finished run: results.json, summary.csv, and one checkpoint
/// file per seed, all under the config's output directory.
pub fn export(result: &RunResult, checkpoints: &[Checkpoint]) -> Result<(), RunError> {
    let dir = &result.config.output_dir;
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| RunError::Io(e.to_string()))?;
    write_atomic(&dir.join("results.json"), &json)?;
    write_atomic(&dir.join("summary.csv"), &summary_csv(&[result]))?;
    for ck in checkpoints {
        let doc = serde_json::to_string(ck).map_err(|e| RunError::Io(e.to_string()))?;
        write_atomic(&dir.join(format!("checkpoint_seed{}.json", ck.seed)), &doc)?;
    }
    Ok(())
}

pub fn load_results(path: &Path) -> Result<RunResult, RunError> {
    let doc = fs::read_to_string(path)?;
    serde_json::from_str(&doc).map_err(|e| RunError::Io(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, RunError> {
    let doc = fs::read_to_string(path)?;
    serde_json::from_str(&doc).map_err(|e| RunError::Io(e.to_string()))
}
