//! The two training procedures: self-play, where one agent invents a
//! discrete language end-to-end through its own codebook, and mutual play,
//! where a sender and a receiver communicate over a non-differentiable
//! symbolic channel.

use rand::Rng;

use crate::agent::{AgentParams, AgentVars, GenMode, MessageBatch, MessageKind};
use crate::data::CandidateSet;
use crate::metrics::Transcript;
use crate::numcore::{adam_step, AdamParams, NumError, Result, Tape, Var};

/// Hyperparameters shared by both game loops.
#[derive(Debug, Clone, Copy)]
pub struct TrainHyper {
    /// Commitment-loss weight β.
    pub beta: f64,
    /// Contrastive similarity temperature.
    pub t_sim: f64,
    /// Sampling temperature for soft (mutual-play) generation.
    pub tau_sample: f64,
    pub adam: AdamParams,
    /// Optimizer for the sender during mutual play; falls back to `adam`.
    /// Each agent owns its optimizer, so the fine-tuning rate of a
    /// pretrained sender can differ from the rate of a receiver learning
    /// from scratch.
    pub mp_sender_adam: Option<AdamParams>,
    /// Subtract the batch-mean reward before the policy-gradient update.
    pub rl_baseline: bool,
    /// Steps before stale-code expiry starts.
    pub expiry_warmup: usize,
    /// Expiry cadence in steps (0 disables expiry).
    pub expiry_every: usize,
}

/// How the sender is treated during mutual play.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderMode {
    Frozen,
    Rl,
    RlPres,
}

/// Loss decomposition of one optimization step.
#[derive(Debug, Clone, Copy)]
pub struct TrainStepReport {
    pub contrastive: f64,
    pub commitment: f64,
    pub rl: Option<f64>,
    pub total: f64,
    pub batch_accuracy: f64,
}

/// Contrastive pieces kept on the tape: per-sample losses `[M, 1]`, their
/// mean, and the raw similarity matrix for accuracy readout.
pub struct ContrastiveOut {
    pub per_sample: Var,
    pub mean: Var,
    pub sims: Var,
}

/// Cross-entropy of each message representation against its target among
/// the candidates, with similarities = dot products of L2-normalized rows
/// divided by `t_sim`.
pub fn contrastive_loss(
    tape: &mut Tape,
    v_m: Var,
    candidates: Var,
    targets: &[usize],
    t_sim: f64,
) -> Result<ContrastiveOut> {
    if t_sim <= 0.0 {
        return Err(NumError::Parameter { name: "t_sim", value: t_sim });
    }
    let nm = tape.l2_normalize_rows(v_m)?;
    let nc = tape.l2_normalize_rows(candidates)?;
    let sims = tape.matmul_nt(nm, nc)?;
    let lsm = tape.log_softmax_rows(sims, t_sim)?;
    let at_target = tape.take_per_row(lsm, targets)?;
    let per_sample = tape.scale(at_target, -1.0);
    let mean = tape.mean_all(per_sample);
    Ok(ContrastiveOut { per_sample, mean, sims })
}

/// Lowest-index argmax per row of a row-major matrix.
fn row_argmax(values: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    (0..rows)
        .map(|i| {
            let row = &values[i * cols..(i + 1) * cols];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn batch_accuracy(tape: &Tape, sims: Var) -> f64 {
    let (rows, cols) = tape.shape(sims);
    let picks = row_argmax(tape.values(sims), rows, cols);
    let hits = picks.iter().enumerate().filter(|&(i, &p)| p == i).count();
    hits as f64 / rows as f64
}

/// In-batch target list for a CLIP-style batch: row i's target is column i.
fn diagonal_targets(b: usize) -> Vec<usize> {
    (0..b).collect()
}

/// Score-function loss −Σ_i R_i · Σ_t log P(w_t^{(i)}), with an optional
/// batch-mean baseline subtracted from the rewards. The rewards enter as
/// plain numbers, so no gradient reaches whatever produced them.
pub fn reinforce_loss(
    tape: &mut Tape,
    step_log_probs: &[Var],
    rewards: &[f64],
    use_baseline: bool,
) -> Result<Var> {
    if step_log_probs.is_empty() {
        return Err(NumError::Domain {
            op: "reinforce_loss",
            what: "no step log-probabilities (generation was not in soft mode)".into(),
        });
    }
    let b = rewards.len();
    let baseline = if use_baseline { rewards.iter().sum::<f64>() / b as f64 } else { 0.0 };
    let advantages: Vec<f64> = rewards.iter().map(|r| r - baseline).collect();
    let mut total_lp = step_log_probs[0];
    for &lp in &step_log_probs[1..] {
        total_lp = tape.add(total_lp, lp)?;
    }
    let adv = tape.constant(b, 1, advantages);
    let weighted = tape.mul(adv, total_lp)?;
    let s = tape.sum_all(weighted);
    Ok(tape.scale(s, -1.0))
}

/// Codebook maintenance after a gradient step: EMA movement of the codes
/// toward their assigned encoder outputs, plus periodic stale-code expiry.
fn codebook_maintenance<R: Rng>(
    agent: &mut AgentParams,
    msg: &MessageBatch,
    hp: &TrainHyper,
    step_index: usize,
    rng: &mut R,
) -> Result<()> {
    for a in &msg.assignments {
        agent.codebook.ema_update(a);
    }
    if hp.expiry_every > 0
        && step_index >= hp.expiry_warmup
        && step_index % hp.expiry_every == 0
    {
        let pool: Vec<f64> = msg.assignments.iter().flat_map(|a| a.inputs.iter().copied()).collect();
        let threshold = 1.0 / (4.0 * agent.k as f64);
        agent.codebook.expire_stale(&pool, threshold, rng)?;
    }
    Ok(())
}

fn apply_grads(
    agent: &mut AgentParams,
    grads: &crate::numcore::Gradients,
    vars: &AgentVars,
    adam: AdamParams,
) -> Result<()> {
    let slices: Vec<&[f64]> = vars.all.iter().map(|&v| grads.of(v)).collect();
    adam_step(&mut agent.params, &slices, adam)
}

/// One self-play optimization step: the agent describes each object to
/// itself through its discrete bottleneck and is trained to pick the
/// described object out of the batch.
pub fn self_play_step<R: Rng>(
    agent: &mut AgentParams,
    batch: &CandidateSet,
    hp: &TrainHyper,
    step_index: usize,
    rng: &mut R,
) -> Result<TrainStepReport> {
    let b = batch.len();
    let mut tape = Tape::new();
    let vars = agent.stage(&mut tape, true);
    let v_o = agent.perceive_object(&mut tape, &vars, &batch.one_hots())?;
    let msg = agent.generate_message(&mut tape, &vars, v_o, GenMode::Hard, rng)?;
    let v_m = agent.perceive_message(&mut tape, &vars, &msg, MessageKind::Discrete)?;
    let out = contrastive_loss(&mut tape, v_m, v_o, &diagonal_targets(b), hp.t_sim)?;
    // msg.commitment sums over batch, steps, and dims; Eq. 6 is a squared
    // norm per step, so only batch and steps are averaged out.
    let denom = (b * agent.msg_len) as f64;
    let commit_mean = tape.scale(msg.commitment, 1.0 / denom);
    let weighted_commit = tape.scale(commit_mean, hp.beta);
    let total = tape.add(out.mean, weighted_commit)?;
    tape.check_finite(total, "self_play total loss")?;

    let report = TrainStepReport {
        contrastive: tape.scalar(out.mean),
        commitment: tape.scalar(commit_mean),
        rl: None,
        total: tape.scalar(total),
        batch_accuracy: batch_accuracy(&tape, out.sims),
    };
    let grads = tape.backward(total)?;
    apply_grads(agent, &grads, &vars, hp.adam)?;
    codebook_maintenance(agent, &msg, hp, step_index, rng)?;
    Ok(report)
}

/// One mutual-play optimization step. The sender samples a symbolic
/// message; the receiver decodes it with its own embeddings, so the
/// contrastive gradient stops at the channel. The sender is left frozen,
/// fine-tuned by REINFORCE plus commitment, or additionally kept close to
/// its self-play objective.
pub fn mutual_play_step<R: Rng>(
    sender: &mut AgentParams,
    receiver: &mut AgentParams,
    batch: &CandidateSet,
    hp: &TrainHyper,
    mode: SenderMode,
    receiver_trainable: bool,
    step_index: usize,
    rng: &mut R,
) -> Result<TrainStepReport> {
    let b = batch.len();
    let one_hots = batch.one_hots();
    let mut tape = Tape::new();
    let sender_trainable = mode != SenderMode::Frozen;
    let s_vars = sender.stage(&mut tape, sender_trainable);
    let r_vars = receiver.stage(&mut tape, receiver_trainable);

    let v_o_s = sender.perceive_object(&mut tape, &s_vars, &one_hots)?;
    let msg = sender.generate_message(
        &mut tape,
        &s_vars,
        v_o_s,
        GenMode::Soft { tau: hp.tau_sample },
        rng,
    )?;

    let v_m = receiver.perceive_symbols(&mut tape, &r_vars, &msg.symbols)?;
    let v_o_r = receiver.perceive_object(&mut tape, &r_vars, &one_hots)?;
    let recv = contrastive_loss(&mut tape, v_m, v_o_r, &diagonal_targets(b), hp.t_sim)?;

    let denom = (b * sender.msg_len) as f64;
    let commit_mean = tape.scale(msg.commitment, 1.0 / denom);

    let mut total = recv.mean;
    let mut rl_value = None;
    if sender_trainable {
        // reward = minus the receiver's per-sample loss, detached
        let rewards: Vec<f64> = tape.values(recv.per_sample).iter().map(|&l| -l).collect();
        let lps = msg.step_log_probs.as_ref().expect("soft generation records log-probs");
        // Σ_t log P is summed over the batch; match the contrastive scale
        let rl_sum = reinforce_loss(&mut tape, lps, &rewards, hp.rl_baseline)?;
        let rl = tape.scale(rl_sum, 1.0 / b as f64);
        rl_value = Some(tape.scalar(rl));
        let weighted_commit = tape.scale(commit_mean, hp.beta);
        total = tape.add(total, rl)?;
        total = tape.add(total, weighted_commit)?;
        if mode == SenderMode::RlPres {
            // the sender's own self-play objective on the same batch
            let v_m_s = sender.perceive_message(&mut tape, &s_vars, &msg, MessageKind::Discrete)?;
            let own = contrastive_loss(&mut tape, v_m_s, v_o_s, &diagonal_targets(b), hp.t_sim)?;
            let own_commit = tape.scale(commit_mean, hp.beta);
            total = tape.add(total, own.mean)?;
            total = tape.add(total, own_commit)?;
        }
    }
    tape.check_finite(total, "mutual_play total loss")?;

    let report = TrainStepReport {
        contrastive: tape.scalar(recv.mean),
        commitment: tape.scalar(commit_mean),
        rl: rl_value,
        total: tape.scalar(total),
        batch_accuracy: batch_accuracy(&tape, recv.sims),
    };
    let grads = tape.backward(total)?;
    if sender_trainable {
        apply_grads(sender, &grads, &s_vars, hp.mp_sender_adam.unwrap_or(hp.adam))?;
        codebook_maintenance(sender, &msg, hp, step_index, rng)?;
    }
    if receiver_trainable {
        apply_grads(receiver, &grads, &r_vars, hp.adam)?;
    }
    Ok(report)
}

/// Who decodes the message at evaluation time.
pub enum EvalReceiver<'a> {
    /// The sender routes its own discrete message back to itself.
    SelfPlay,
    /// A distinct receiver consumes plain symbols.
    Pair(&'a AgentParams),
}

/// Greedy evaluation of one candidate batch; returns one transcript row
/// per batch item (every item serves as target once).
pub fn evaluate_batch<R: Rng>(
    sender: &AgentParams,
    receiver: &EvalReceiver,
    batch: &CandidateSet,
    rng: &mut R,
) -> Result<Vec<Transcript>> {
    let b = batch.len();
    let one_hots = batch.one_hots();
    let mut tape = Tape::new();
    let s_vars = sender.stage(&mut tape, false);
    let v_o_s = sender.perceive_object(&mut tape, &s_vars, &one_hots)?;
    let msg = sender.generate_message(&mut tape, &s_vars, v_o_s, GenMode::Hard, rng)?;
    let (v_m, v_cand) = match receiver {
        EvalReceiver::SelfPlay => {
            let v_m = sender.perceive_message(&mut tape, &s_vars, &msg, MessageKind::Discrete)?;
            (v_m, v_o_s)
        }
        EvalReceiver::Pair(r) => {
            let r_vars = r.stage(&mut tape, false);
            let v_m = r.perceive_symbols(&mut tape, &r_vars, &msg.symbols)?;
            let v_cand = r.perceive_object(&mut tape, &r_vars, &one_hots)?;
            (v_m, v_cand)
        }
    };
    let nm = tape.l2_normalize_rows(v_m)?;
    let nc = tape.l2_normalize_rows(v_cand)?;
    let sims = tape.matmul_nt(nm, nc)?;
    let picks = row_argmax(tape.values(sims), b, b);
    Ok((0..b)
        .map(|i| Transcript {
            target_id: batch.objects[i].id,
            message: msg.item_symbols(i),
            chosen_index: picks[i],
            target_index: i,
        })
        .collect())
}

/// Full-split evaluation: shuffles the ids, cuts batches of `candidates_b`,
/// and concatenates the transcripts.
pub fn evaluate<R: Rng>(
    sender: &AgentParams,
    receiver: &EvalReceiver,
    eval_ids: &[usize],
    candidates_b: usize,
    rng: &mut R,
) -> Result<Vec<Transcript>> {
    if candidates_b > eval_ids.len() {
        return Err(NumError::Domain {
            op: "evaluate",
            what: format!(
                "candidate count {candidates_b} exceeds eval set size {}",
                eval_ids.len()
            ),
        });
    }
    let mut transcripts = Vec::with_capacity(eval_ids.len());
    for batch in crate::data::epoch_batches(eval_ids, candidates_b, rng) {
        transcripts.extend(evaluate_batch(sender, receiver, &batch, rng)?);
    }
    Ok(transcripts)
}
