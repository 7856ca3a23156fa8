//! Comparison senders without a vector-quantization module: a plain
//! REINFORCE policy and Gumbel-Softmax with the straight-through trick and
//! a learned per-step inverse temperature. Both share the agent's
//! generation architecture; the codebook's K x d footprint is taken over
//! by `vocab_head`, whose rows double as the sender's symbol embeddings,
//! so trainable-parameter totals stay aligned with the quantized sender.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{run_gru_cell, AgentParams, GruVars, OBJECT_DIM};
use crate::data::CandidateSet;
use crate::games::{contrastive_loss, reinforce_loss, TrainHyper, TrainStepReport};
use crate::metrics::Transcript;
use crate::numcore::{Param, ParamSet, Result, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    Reinforce,
    GsSt,
}

// Parameter order inside the ParamSet; mirrors the quantized sender with
// vocab_head in place of the codebook.
const B_OBJECT_EMBED: usize = 0;
const B_BOS: usize = 1;
const B_GEN_GRU: usize = 2; // 9 consecutive entries
const B_PROJ_W: usize = 11;
const B_PROJ_B: usize = 12;
const B_VOCAB_HEAD: usize = 13;
const B_GS_TEMP_W: usize = 14; // GS-ST only

/// A gradient-trained sender with a plain linear symbol head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineSenderParams {
    pub method: BaselineMethod,
    pub dim: usize,
    pub k: usize,
    pub msg_len: usize,
    /// Temperature floor τ₀ of the learned GS temperature (unused for
    /// REINFORCE).
    pub tau0: f64,
    pub params: ParamSet,
}

/// Tape handles for one staging of the baseline sender.
pub struct BaselineVars {
    pub all: Vec<Var>,
}

impl BaselineVars {
    pub fn object_embed(&self) -> Var {
        self.all[B_OBJECT_EMBED]
    }
    pub fn bos(&self) -> Var {
        self.all[B_BOS]
    }
    pub fn proj_w(&self) -> Var {
        self.all[B_PROJ_W]
    }
    pub fn proj_b(&self) -> Var {
        self.all[B_PROJ_B]
    }
    pub fn vocab_head(&self) -> Var {
        self.all[B_VOCAB_HEAD]
    }
    pub fn gs_temp_w(&self) -> Var {
        self.all[B_GS_TEMP_W]
    }
    pub fn gen_gru(&self) -> GruVars {
        GruVars {
            wz: self.all[B_GEN_GRU],
            uz: self.all[B_GEN_GRU + 1],
            bz: self.all[B_GEN_GRU + 2],
            wr: self.all[B_GEN_GRU + 3],
            ur: self.all[B_GEN_GRU + 4],
            br: self.all[B_GEN_GRU + 5],
            wh: self.all[B_GEN_GRU + 6],
            uh: self.all[B_GEN_GRU + 7],
            bh: self.all[B_GEN_GRU + 8],
        }
    }
}

/// One generated baseline message batch.
pub struct BaselineMessage {
    /// `symbols[t][i]` = symbol of item i at step t.
    pub symbols: Vec<Vec<usize>>,
    /// Per-step `[B, 1]` log-probabilities (REINFORCE only).
    pub step_log_probs: Option<Vec<Var>>,
    /// Per-step `[B, K]` straight-through one-hots: forward is the hard
    /// choice, backward flows through the relaxed sample (GS-ST only).
    pub st_onehots: Option<Vec<Var>>,
}

fn uniform_init<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// The learned temperature τ = 1 / (softplus(wᵀh) + τ₀).
pub fn gs_temperature(wh: f64, tau0: f64) -> f64 {
    1.0 / (softplus(wh) + tau0)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Standard Gumbel noise −log(−log(U)), clamped away from the poles.
pub fn gumbel_noise<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen::<f64>().max(1e-20);
    -(-u.ln()).max(1e-20).ln()
}

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

/// How symbols are chosen at each generation step.
#[derive(Clone)]
pub enum BaselineGen {
    /// Sample categorically (REINFORCE training) and record log-probs.
    Sample,
    /// Deterministic argmax decode, no gradient bookkeeping (evaluation).
    Greedy,
    /// Gumbel-Softmax with the straight-through trick; the test hook
    /// injects frozen per-step `[B*K]` noise instead of sampling.
    Gumbel { frozen_noise: Option<Vec<Vec<f64>>> },
}

impl BaselineSenderParams {
    pub fn new<R: Rng>(
        method: BaselineMethod,
        dim: usize,
        k: usize,
        msg_len: usize,
        tau0: f64,
        rng: &mut R,
    ) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let mut set = ParamSet::default();
        set.push(Param::new("object_embed", OBJECT_DIM, dim, uniform_init(rng, OBJECT_DIM, dim, scale)));
        set.push(Param::new("bos", 1, dim, uniform_init(rng, 1, dim, scale)));
        for gate in ["z", "r", "h"] {
            set.push(Param::new(format!("gen_gru.w{gate}"), dim, dim, uniform_init(rng, dim, dim, scale)));
            set.push(Param::new(format!("gen_gru.u{gate}"), dim, dim, uniform_init(rng, dim, dim, scale)));
            set.push(Param::new(format!("gen_gru.b{gate}"), 1, dim, uniform_init(rng, 1, dim, scale)));
        }
        set.push(Param::new("proj_w", dim, dim, uniform_init(rng, dim, dim, scale)));
        set.push(Param::new("proj_b", 1, dim, uniform_init(rng, 1, dim, scale)));
        set.push(Param::new("vocab_head", k, dim, uniform_init(rng, k, dim, scale)));
        if method == BaselineMethod::GsSt {
            set.push(Param::new("gs_temp_w", 1, dim, uniform_init(rng, 1, dim, scale)));
        }
        BaselineSenderParams { method, dim, k, msg_len, tau0, params: set }
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params.total_len()
    }

    pub fn stage(&self, tape: &mut Tape, trainable: bool) -> BaselineVars {
        let all = self
            .params
            .params
            .iter()
            .map(|p| tape.leaf(p.rows, p.cols, p.value.clone(), trainable))
            .collect();
        BaselineVars { all }
    }

    /// Same object embedding as the quantized agent: `[B, 40] -> [B, d]`.
    pub fn perceive_object(&self, tape: &mut Tape, vars: &BaselineVars, one_hots: &[f64]) -> Result<Var> {
        let b = one_hots.len() / OBJECT_DIM;
        let x = tape.constant(b, OBJECT_DIM, one_hots.to_vec());
        tape.matmul(x, vars.object_embed())
    }

    /// Unrolls the generator. Per step: GRU, projection, symbol logits
    /// `z · vocab_headᵀ`, then the mode-specific choice; the chosen
    /// symbol's vocab_head row feeds the next step.
    pub fn generate<R: Rng>(
        &self,
        tape: &mut Tape,
        vars: &BaselineVars,
        v_o: Var,
        gen: &BaselineGen,
        rng: &mut R,
    ) -> Result<BaselineMessage> {
        let (b, _) = tape.shape(v_o);
        let mut h = v_o;
        let mut last_word = tape.gather_rows(vars.bos(), &vec![0usize; b])?;
        let mut symbols = Vec::with_capacity(self.msg_len);
        let mut step_log_probs = matches!(gen, BaselineGen::Sample).then(Vec::new);
        let mut st_onehots = matches!(gen, BaselineGen::Gumbel { .. }).then(Vec::new);
        for t in 0..self.msg_len {
            h = run_gru_cell(tape, vars.gen_gru(), h, last_word)?;
            let zp = tape.matmul(h, vars.proj_w())?;
            let z = tape.add_row(zp, vars.proj_b())?;
            let logits = tape.matmul_nt(z, vars.vocab_head())?;
            let chosen: Vec<usize>;
            match gen {
                BaselineGen::Sample => {
                    let probs = tape.softmax_rows(logits, 1.0)?;
                    let pv = tape.values(probs).to_vec();
                    chosen = (0..b)
                        .map(|i| crate::vq::sample_categorical(&pv[i * self.k..(i + 1) * self.k], rng))
                        .collect();
                    let lsm = tape.log_softmax_rows(logits, 1.0)?;
                    let lp = tape.take_per_row(lsm, &chosen)?;
                    step_log_probs.as_mut().unwrap().push(lp);
                    last_word = tape.gather_rows(vars.vocab_head(), &chosen)?;
                }
                BaselineGen::Greedy => {
                    chosen = row_argmax(tape.values(logits), b, self.k);
                    last_word = tape.gather_rows(vars.vocab_head(), &chosen)?;
                }
                BaselineGen::Gumbel { frozen_noise } => {
                    // per-item inverse temperature 1/τ = softplus(wᵀh) + τ₀
                    let wh = tape.matmul_nt(h, vars.gs_temp_w())?;
                    let ewh = tape.exp(wh);
                    let p1 = tape.add_scalar(ewh, 1.0);
                    let sp = tape.log(p1)?;
                    let inv_tau = tape.add_scalar(sp, self.tau0);
                    let ones = tape.constant(1, self.k, vec![1.0; self.k]);
                    let inv_tau_b = tape.matmul(inv_tau, ones)?;

                    let noise_vals = match frozen_noise {
                        Some(steps) => steps[t].clone(),
                        None => (0..b * self.k).map(|_| gumbel_noise(rng)).collect(),
                    };
                    let noise = tape.constant(b, self.k, noise_vals);
                    let noisy = tape.add(logits, noise)?;
                    let scaled = tape.mul(noisy, inv_tau_b)?;
                    let y = tape.softmax_rows(scaled, 1.0)?;
                    chosen = row_argmax(tape.values(y), b, self.k);
                    let mut hard = vec![0.0; b * self.k];
                    for (i, &c) in chosen.iter().enumerate() {
                        hard[i * self.k + c] = 1.0;
                    }
                    let hard = tape.constant(b, self.k, hard);
                    let st = tape.straight_through(hard, y)?;
                    st_onehots.as_mut().unwrap().push(st);
                    last_word = tape.matmul(st, vars.vocab_head())?;
                }
            }
            symbols.push(chosen);
        }
        Ok(BaselineMessage { symbols, step_log_probs, st_onehots })
    }
}

/// Learned-parameter totals of the sender-side modules, for the parity
/// check across methods. The quantized sender counts object_embed, bos,
/// gen_gru, proj, and the K x d codebook (EMA-learned but learned state
/// all the same); baselines count the same tensors with vocab_head in the
/// codebook's place. GS-ST carries d extra scalars for its temperature.
pub fn vqel_sender_param_count(agent: &AgentParams) -> usize {
    let sender_slots = [0usize, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
    let named: usize = sender_slots.iter().map(|&i| agent.params.params[i].len()).sum();
    named + agent.k * agent.dim
}

pub fn baseline_sender_param_count(sender: &BaselineSenderParams) -> usize {
    sender.params.total_len()
}

/// One mutual-play step for a baseline sender against a standard
/// receiver. REINFORCE senders learn from the score-function estimator on
/// sampled symbols; GS-ST senders get gradient straight through the
/// relaxed one-hots the receiver consumes. The receiver is always updated
/// by the contrastive term alone.
pub fn baseline_mp_step<R: Rng>(
    sender: &mut BaselineSenderParams,
    receiver: &mut AgentParams,
    batch: &CandidateSet,
    hp: &TrainHyper,
    rng: &mut R,
) -> Result<TrainStepReport> {
    let b = batch.len();
    let one_hots = batch.one_hots();
    let mut tape = Tape::new();
    let s_vars = sender.stage(&mut tape, true);
    let r_vars = receiver.stage(&mut tape, true);
    let v_o_s = sender.perceive_object(&mut tape, &s_vars, &one_hots)?;
    let gen = match sender.method {
        BaselineMethod::Reinforce => BaselineGen::Sample,
        BaselineMethod::GsSt => BaselineGen::Gumbel { frozen_noise: None },
    };
    let msg = sender.generate(&mut tape, &s_vars, v_o_s, &gen, rng)?;

    let v_m = match sender.method {
        BaselineMethod::Reinforce => receiver.perceive_symbols(&mut tape, &r_vars, &msg.symbols)?,
        BaselineMethod::GsSt => {
            // the straight-through one-hot picks the receiver's own symbol
            // embedding row in the forward pass
            let mut h = tape.constant(b, receiver.dim, vec![0.0; b * receiver.dim]);
            for st in msg.st_onehots.as_ref().unwrap() {
                let x = tape.matmul(*st, r_vars.symbol_embed())?;
                h = receiver.gru_cell(&mut tape, r_vars.percep_gru(), h, x)?;
            }
            h
        }
    };
    let v_o_r = receiver.perceive_object(&mut tape, &r_vars, &one_hots)?;
    let targets: Vec<usize> = (0..b).collect();
    let recv = contrastive_loss(&mut tape, v_m, v_o_r, &targets, hp.t_sim)?;

    let mut total = recv.mean;
    let mut rl_value = None;
    if sender.method == BaselineMethod::Reinforce {
        let rewards: Vec<f64> = tape.values(recv.per_sample).iter().map(|&l| -l).collect();
        let lps = msg.step_log_probs.as_ref().unwrap();
        let rl_sum = reinforce_loss(&mut tape, lps, &rewards, hp.rl_baseline)?;
        let rl = tape.scale(rl_sum, 1.0 / b as f64);
        rl_value = Some(tape.scalar(rl));
        total = tape.add(total, rl)?;
    }
    tape.check_finite(total, "baseline mp total loss")?;

    let picks = row_argmax(tape.values(recv.sims), b, b);
    let hits = picks.iter().enumerate().filter(|&(i, &p)| p == i).count();
    let report = TrainStepReport {
        contrastive: tape.scalar(recv.mean),
        commitment: 0.0,
        rl: rl_value,
        total: tape.scalar(total),
        batch_accuracy: hits as f64 / b as f64,
    };

    let grads = tape.backward(total)?;
    let s_slices: Vec<&[f64]> = s_vars.all.iter().map(|&v| grads.of(v)).collect();
    crate::numcore::adam_step(&mut sender.params, &s_slices, hp.adam)?;
    let r_slices: Vec<&[f64]> = r_vars.all.iter().map(|&v| grads.of(v)).collect();
    crate::numcore::adam_step(&mut receiver.params, &r_slices, hp.adam)?;
    Ok(report)
}

/// Greedy evaluation of a baseline pair over a full split.
pub fn evaluate_baseline<R: Rng>(
    sender: &BaselineSenderParams,
    receiver: &AgentParams,
    eval_ids: &[usize],
    candidates_b: usize,
    rng: &mut R,
) -> Result<Vec<Transcript>> {
    let mut transcripts = Vec::with_capacity(eval_ids.len());
    for batch in crate::data::epoch_batches(eval_ids, candidates_b, rng) {
        let b = batch.len();
        let one_hots = batch.one_hots();
        let mut tape = Tape::new();
        let s_vars = sender.stage(&mut tape, false);
        let r_vars = receiver.stage(&mut tape, false);
        let v_o_s = sender.perceive_object(&mut tape, &s_vars, &one_hots)?;
        let msg = sender.generate(&mut tape, &s_vars, v_o_s, &BaselineGen::Greedy, rng)?;
        let v_m = receiver.perceive_symbols(&mut tape, &r_vars, &msg.symbols)?;
        let v_o_r = receiver.perceive_object(&mut tape, &r_vars, &one_hots)?;
        let nm = tape.l2_normalize_rows(v_m)?;
        let nc = tape.l2_normalize_rows(v_o_r)?;
        let sims = tape.matmul_nt(nm, nc)?;
        let picks = row_argmax(tape.values(sims), b, b);
        for i in 0..b {
            transcripts.push(Transcript {
                target_id: batch.objects[i].id,
                message: msg.symbols.iter().map(|step| step[i]).collect(),
                chosen_index: picks[i],
                target_index: i,
            });
        }
    }
    Ok(transcripts)
}
