//! The three-part agent: object perception, message generation (GRU + VQ),
//! and message perception. One parameter set serves both the sender and
//! receiver roles; messages flow either as code vectors (discrete, gradient
//! path intact) or as symbol indices (symbolic, non-differentiable).
//!
//! All forward passes are batched: a batch of B objects moves through the
//! tape as `[B, d]` matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{NumError, Param, ParamSet, Result, Tape, Var};
use crate::vq::{AssignMode, AssignmentBatch, Codebook, Metric};

pub const OBJECT_DIM: usize = 40;
pub const ATTRIBUTES: usize = 4;
pub const ATTRIBUTE_VALUES: usize = 10;

// Fixed parameter order inside the ParamSet.
const P_OBJECT_EMBED: usize = 0;
const P_BOS: usize = 1;
const P_GEN_GRU: usize = 2; // 9 consecutive entries
const P_PROJ_W: usize = 11;
const P_PROJ_B: usize = 12;
const P_PERCEP_GRU: usize = 13; // 9 consecutive entries
const P_SYMBOL_EMBED: usize = 22;
const PARAM_COUNT: usize = 23;

/// All trainable tensors of one agent plus its EMA-learned codebook.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentParams {
    pub dim: usize,
    pub k: usize,
    pub msg_len: usize,
    pub params: ParamSet,
    pub codebook: Codebook,
}

/// Tape handles for one staging of the agent's parameters.
pub struct AgentVars {
    pub all: Vec<Var>,
}

/// Handles for one GRU cell: update gate, reset gate, candidate.
#[derive(Clone, Copy)]
pub struct GruVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wh: Var,
    pub uh: Var,
    pub bh: Var,
}

impl AgentVars {
    pub fn object_embed(&self) -> Var {
        self.all[P_OBJECT_EMBED]
    }
    pub fn bos(&self) -> Var {
        self.all[P_BOS]
    }
    pub fn proj_w(&self) -> Var {
        self.all[P_PROJ_W]
    }
    pub fn proj_b(&self) -> Var {
        self.all[P_PROJ_B]
    }
    pub fn symbol_embed(&self) -> Var {
        self.all[P_SYMBOL_EMBED]
    }
    fn gru_at(&self, base: usize) -> GruVars {
        GruVars {
            wz: self.all[base],
            uz: self.all[base + 1],
            bz: self.all[base + 2],
            wr: self.all[base + 3],
            ur: self.all[base + 4],
            br: self.all[base + 5],
            wh: self.all[base + 6],
            uh: self.all[base + 7],
            bh: self.all[base + 8],
        }
    }
    pub fn gen_gru(&self) -> GruVars {
        self.gru_at(P_GEN_GRU)
    }
    pub fn percep_gru(&self) -> GruVars {
        self.gru_at(P_PERCEP_GRU)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum GenMode {
    Hard,
    Soft { tau: f64 },
}

/// One generated batch of messages: per-step symbols, tape nodes for the
/// straight-through code vectors, per-step log-probs in soft mode, and the
/// raw encoder outputs needed for EMA updates.
pub struct MessageBatch {
    /// `symbols[t][i]` = symbol of item i at step t.
    pub symbols: Vec<Vec<usize>>,
    /// Per-step `[B, d]` straight-through code nodes.
    pub st_codes: Vec<Var>,
    /// Per-step `[B, 1]` log-probabilities (soft mode only).
    pub step_log_probs: Option<Vec<Var>>,
    /// Scalar: total commitment, summed over batch items, steps, and dims.
    pub commitment: Var,
    /// Per-step encoder outputs and their assignments, for EMA/expiry.
    pub assignments: Vec<AssignmentBatch>,
}

impl MessageBatch {
    pub fn batch_size(&self) -> usize {
        self.symbols[0].len()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Symbol sequence of one batch item.
    pub fn item_symbols(&self, i: usize) -> Vec<usize> {
        self.symbols.iter().map(|step| step[i]).collect()
    }
}

/// Which representation the receiver consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Discrete,
    Symbolic,
}

fn uniform_init<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn push_gru<R: Rng>(set: &mut ParamSet, prefix: &str, d: usize, scale: f64, rng: &mut R) {
    for gate in ["z", "r", "h"] {
        set.push(Param::new(format!("{prefix}.w{gate}"), d, d, uniform_init(rng, d, d, scale)));
        set.push(Param::new(format!("{prefix}.u{gate}"), d, d, uniform_init(rng, d, d, scale)));
        set.push(Param::new(format!("{prefix}.b{gate}"), 1, d, uniform_init(rng, 1, d, scale)));
    }
}

impl AgentParams {
    pub fn new<R: Rng>(dim: usize, k: usize, msg_len: usize, metric: Metric, decay: f64, laplace_eps: f64, rng: &mut R) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let mut set = ParamSet::default();
        set.push(Param::new("object_embed", OBJECT_DIM, dim, uniform_init(rng, OBJECT_DIM, dim, scale)));
        set.push(Param::new("bos", 1, dim, uniform_init(rng, 1, dim, scale)));
        push_gru(&mut set, "gen_gru", dim, scale, rng);
        set.push(Param::new("proj_w", dim, dim, uniform_init(rng, dim, dim, scale)));
        set.push(Param::new("proj_b", 1, dim, uniform_init(rng, 1, dim, scale)));
        push_gru(&mut set, "percep_gru", dim, scale, rng);
        set.push(Param::new("symbol_embed", k, dim, uniform_init(rng, k, dim, scale)));
        debug_assert_eq!(set.params.len(), PARAM_COUNT);
        let codebook = Codebook::new(k, dim, metric, decay, laplace_eps, rng);
        AgentParams { dim, k, msg_len, params: set, codebook }
    }

    /// Total gradient-trainable scalar count (the EMA codebook is excluded).
    pub fn trainable_param_count(&self) -> usize {
        self.params.total_len()
    }

    /// Puts every parameter on the tape. With `trainable = false` the staged
    /// copies receive no gradient (frozen agent).
    pub fn stage(&self, tape: &mut Tape, trainable: bool) -> AgentVars {
        let all = self
            .params
            .params
            .iter()
            .map(|p| tape.leaf(p.rows, p.cols, p.value.clone(), trainable))
            .collect();
        AgentVars { all }
    }

    /// Validates and embeds a batch of 40-dim one-hot objects: `[B, 40] -> [B, d]`.
    pub fn perceive_object(&self, tape: &mut Tape, vars: &AgentVars, one_hots: &[f64]) -> Result<Var> {
        if one_hots.len() % OBJECT_DIM != 0 {
            return Err(NumError::ShapeMismatch {
                op: "perceive_object",
                expected: (1, OBJECT_DIM),
                got: (1, one_hots.len()),
            });
        }
        let b = one_hots.len() / OBJECT_DIM;
        for i in 0..b {
            let row = &one_hots[i * OBJECT_DIM..(i + 1) * OBJECT_DIM];
            for a in 0..ATTRIBUTES {
                let block = &row[a * ATTRIBUTE_VALUES..(a + 1) * ATTRIBUTE_VALUES];
                let sum: f64 = block.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || block.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(NumError::Domain {
                        op: "perceive_object",
                        what: format!("item {i} attribute block {a} is not one-hot"),
                    });
                }
            }
        }
        let x = tape.constant(b, OBJECT_DIM, one_hots.to_vec());
        tape.matmul(x, vars.object_embed())
    }

    /// Standard GRU cell on row-vector batches.
    pub fn gru_cell(&self, tape: &mut Tape, g: GruVars, h_prev: Var, x: Var) -> Result<Var> {
        run_gru_cell(tape, g, h_prev, x)
    }
}

/// Standard GRU cell on row-vector batches; shared by all sender variants.
pub fn run_gru_cell(tape: &mut Tape, g: GruVars, h_prev: Var, x: Var) -> Result<Var> {
    let xz = tape.matmul(x, g.wz)?;
    let hz = tape.matmul(h_prev, g.uz)?;
    let sz = tape.add(xz, hz)?;
    let sz = tape.add_row(sz, g.bz)?;
    let update = tape.sigmoid(sz);

    let xr = tape.matmul(x, g.wr)?;
    let hr = tape.matmul(h_prev, g.ur)?;
    let sr = tape.add(xr, hr)?;
    let sr = tape.add_row(sr, g.br)?;
    let reset = tape.sigmoid(sr);

    let rh = tape.mul(reset, h_prev)?;
    let xc = tape.matmul(x, g.wh)?;
    let hc = tape.matmul(rh, g.uh)?;
    let sc = tape.add(xc, hc)?;
    let sc = tape.add_row(sc, g.bh)?;
    let cand = tape.tanh(sc);

    // h' = (1 - u) * h_prev + u * cand
    let neg_u = tape.scale(update, -1.0);
    let one_minus_u = tape.add_scalar(neg_u, 1.0);
    let keep = tape.mul(one_minus_u, h_prev)?;
    let take = tape.mul(update, cand)?;
    tape.add(keep, take)
}

impl AgentParams {
    /// Unrolls the message generator: `h_0 = v_o`, then for each of L steps a
    /// GRU update on the previous word, a linear projection, and a codebook
    /// assignment. The BOS vector feeds the first step.
    pub fn generate_message<R: Rng>(
        &self,
        tape: &mut Tape,
        vars: &AgentVars,
        v_o: Var,
        mode: GenMode,
        rng: &mut R,
    ) -> Result<MessageBatch> {
        let (b, d) = tape.shape(v_o);
        assert_eq!(d, self.dim);
        let zeros_ix = vec![0usize; b];
        let mut h = v_o;
        let mut last_word = tape.gather_rows(vars.bos(), &zeros_ix)?;
        let mut symbols = Vec::with_capacity(self.msg_len);
        let mut st_codes = Vec::with_capacity(self.msg_len);
        let mut step_log_probs = match mode {
            GenMode::Hard => None,
            GenMode::Soft { .. } => Some(Vec::with_capacity(self.msg_len)),
        };
        let mut assignments = Vec::with_capacity(self.msg_len);
        let mut commitment = tape.scalar_leaf(0.0);
        for _ in 0..self.msg_len {
            h = self.gru_cell(tape, vars.gen_gru(), h, last_word)?;
            let zp = tape.matmul(h, vars.proj_w())?;
            let z = tape.add_row(zp, vars.proj_b())?;
            let assign_mode = match mode {
                GenMode::Hard => AssignMode::Hard,
                GenMode::Soft { tau } => AssignMode::Soft { tau },
            };
            let q = self.codebook.quantize_batch(tape, z, assign_mode, rng)?;
            assignments.push(AssignmentBatch { inputs: tape.values(z).to_vec(), chosen: q.chosen.clone() });
            commitment = tape.add(commitment, q.commitment)?;
            if let (Some(lps), Some(lp)) = (step_log_probs.as_mut(), q.log_probs) {
                lps.push(lp);
            }
            symbols.push(q.chosen);
            st_codes.push(q.st_codes);
            last_word = q.st_codes;
        }
        Ok(MessageBatch { symbols, st_codes, step_log_probs, commitment, assignments })
    }

    /// Runs the perception GRU over a message batch and returns `v_m: [B, d]`.
    ///
    /// Discrete kind consumes the straight-through code nodes (gradient path
    /// intact); Symbolic kind looks up this agent's own symbol embeddings.
    pub fn perceive_message(&self, tape: &mut Tape, vars: &AgentVars, msg: &MessageBatch, kind: MessageKind) -> Result<Var> {
        let b = msg.batch_size();
        let mut h = tape.constant(b, self.dim, vec![0.0; b * self.dim]);
        for t in 0..msg.len() {
            let x = match kind {
                MessageKind::Discrete => msg.st_codes[t],
                MessageKind::Symbolic => tape.gather_rows(vars.symbol_embed(), &msg.symbols[t])?,
            };
            h = self.gru_cell(tape, vars.percep_gru(), h, x)?;
        }
        Ok(h)
    }

    /// Symbolic perception from plain symbol sequences (no sender tape nodes).
    pub fn perceive_symbols(&self, tape: &mut Tape, vars: &AgentVars, symbols: &[Vec<usize>]) -> Result<Var> {
        let b = symbols[0].len();
        let mut h = tape.constant(b, self.dim, vec![0.0; b * self.dim]);
        for step in symbols {
            let x = tape.gather_rows(vars.symbol_embed(), step)?;
            h = self.gru_cell(tape, vars.percep_gru(), h, x)?;
        }
        Ok(h)
    }
}
