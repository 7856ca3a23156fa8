//! Vector-quantization codebook: hard/soft assignment, straight-through
//! quantization, commitment loss, EMA learning, and stale-code expiry.
//!
//! The codebook is learned outside the gradient path: codes enter every tape
//! as constants, gradients stop at the straight-through boundary, and the
//! codes move by exponential moving averages of assigned encoder outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{NumError, Result, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Codebook {
    pub k: usize,
    pub dim: usize,
    pub metric: Metric,
    /// K x dim row-major code vectors (unit rows in Cosine mode).
    pub codes: Vec<f64>,
    pub ema_cluster_size: Vec<f64>,
    /// K x dim row-major EMA of assigned inputs.
    pub ema_embed_sum: Vec<f64>,
    /// Per-code EMA of the "was assigned this batch" indicator.
    pub usage_ema: Vec<f64>,
    pub decay: f64,
    pub laplace_eps: f64,
}

/// Per-batch record of which inputs went to which codes.
#[derive(Debug, Clone)]
pub struct AssignmentBatch {
    /// B x dim inputs, row-major.
    pub inputs: Vec<f64>,
    pub chosen: Vec<usize>,
}

/// Tape nodes produced by quantizing one batch of encoder outputs.
pub struct QuantizedStep {
    pub chosen: Vec<usize>,
    /// `[B, dim]`; forward = chosen codes, backward = straight-through to z.
    pub st_codes: Var,
    /// Scalar: sum over the batch of `||z_i - sg(e_{w_i})||^2`.
    pub commitment: Var,
    /// `[B, 1]` log-probabilities of the sampled codes (soft mode only).
    pub log_probs: Option<Var>,
    /// The codebook snapshot on the tape; never receives gradient.
    pub codes_const: Var,
}

#[derive(Debug, Clone, Copy)]
pub enum AssignMode {
    Hard,
    Soft { tau: f64 },
}

impl Codebook {
    pub fn new<R: Rng>(k: usize, dim: usize, metric: Metric, decay: f64, laplace_eps: f64, rng: &mut R) -> Self {
        assert!(k >= 2 && dim >= 1);
        let mut codes = Vec::with_capacity(k * dim);
        for _ in 0..k {
            let mut row: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
            match metric {
                Metric::Cosine => normalize_in_place(&mut row),
                Metric::Euclidean => {
                    let s = 1.0 / (dim as f64).sqrt();
                    for v in &mut row {
                        *v *= s;
                    }
                }
            }
            codes.extend(row);
        }
        let ema_embed_sum = codes.clone();
        Codebook {
            k,
            dim,
            metric,
            codes,
            ema_cluster_size: vec![1.0; k],
            ema_embed_sum,
            usage_ema: vec![1.0; k],
            decay,
            laplace_eps,
        }
    }

    pub fn code(&self, index: usize) -> &[f64] {
        &self.codes[index * self.dim..(index + 1) * self.dim]
    }

    /// Distance from `z` to every code: squared L2 in Euclidean mode,
    /// `1 - cos(z, e_k)` in Cosine mode.
    pub fn distances(&self, z: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(z.len(), self.dim);
        if !z.iter().all(|v| v.is_finite()) {
            return Err(NumError::NonFinite("vq input".into()));
        }
        match self.metric {
            Metric::Euclidean => Ok((0..self.k)
                .map(|k| {
                    self.code(k)
                        .iter()
                        .zip(z)
                        .map(|(e, x)| (x - e) * (x - e))
                        .sum()
                })
                .collect()),
            Metric::Cosine => {
                let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if zn <= 1e-12 {
                    return Err(NumError::DegenerateInput(1e-12));
                }
                Ok((0..self.k)
                    .map(|k| {
                        let code = self.code(k);
                        let en = code.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let dot: f64 = code.iter().zip(z).map(|(e, x)| e * x).sum();
                        1.0 - dot / (zn * en)
                    })
                    .collect())
            }
        }
    }

    /// Nearest code under the active metric, lowest index on ties.
    pub fn assign_hard(&self, z: &[f64]) -> Result<(usize, &[f64])> {
        let d = self.distances(z)?;
        let mut best = 0;
        for (i, &di) in d.iter().enumerate().skip(1) {
            if di < d[best] {
                best = i;
            }
        }
        Ok((best, self.code(best)))
    }

    /// Samples a code from `softmax(-distances / tau)` using `rng`.
    /// Returns the index, its log-probability, and the full distribution.
    pub fn assign_soft<R: Rng>(&self, z: &[f64], tau: f64, rng: &mut R) -> Result<(usize, f64, Vec<f64>)> {
        if tau <= 0.0 {
            return Err(NumError::Parameter { name: "tau", value: tau });
        }
        let d = self.distances(z)?;
        let max_logit = d.iter().map(|&x| -x / tau).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = d.iter().map(|&x| (-x / tau - max_logit).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
        let index = sample_categorical(&probs, rng);
        Ok((index, probs[index].ln(), probs))
    }

    /// Quantizes a `[B, dim]` tape node. The returned `st_codes` carries the
    /// chosen codes forward while routing gradients back into `z`; the
    /// commitment term reaches `z` only, never the codebook.
    pub fn quantize_batch<R: Rng>(
        &self,
        tape: &mut Tape,
        z: Var,
        mode: AssignMode,
        rng: &mut R,
    ) -> Result<QuantizedStep> {
        let (b, d) = tape.shape(z);
        assert_eq!(d, self.dim);
        let mut chosen = Vec::with_capacity(b);
        {
            let zv = tape.values(z);
            for i in 0..b {
                let row = &zv[i * d..(i + 1) * d];
                let ix = match mode {
                    AssignMode::Hard => self.assign_hard(row)?.0,
                    AssignMode::Soft { tau } => self.assign_soft(row, tau, rng)?.0,
                };
                chosen.push(ix);
            }
        }
        let codes_const = tape.constant(self.k, self.dim, self.codes.clone());
        let picked = tape.gather_rows(codes_const, &chosen)?;
        let st_codes = tape.straight_through(picked, z)?;
        let diff = tape.sub(z, picked)?;
        let sq = tape.mul(diff, diff)?;
        let commitment = tape.sum_all(sq);
        let log_probs = match mode {
            AssignMode::Hard => None,
            AssignMode::Soft { tau } => {
                let logits = self.logits_on_tape(tape, z, codes_const)?;
                let lsm = tape.log_softmax_rows(logits, tau)?;
                Some(tape.take_per_row(lsm, &chosen)?)
            }
        };
        Ok(QuantizedStep { chosen, st_codes, commitment, log_probs, codes_const })
    }

    /// Negated distances as a differentiable `[B, K]` node; the sampling
    /// distribution of Soft mode is `softmax(logits / tau)`.
    pub fn logits_on_tape(&self, tape: &mut Tape, z: Var, codes_const: Var) -> Result<Var> {
        match self.metric {
            Metric::Euclidean => {
                let dist = tape.sq_dist_to_rows(z, codes_const)?;
                Ok(tape.scale(dist, -1.0))
            }
            Metric::Cosine => {
                let zn = tape.l2_normalize_rows(z)?;
                let cn = tape.l2_normalize_rows(codes_const)?;
                let cos = tape.matmul_nt(zn, cn)?;
                // -(1 - cos) = cos - 1
                Ok(tape.add_scalar(cos, -1.0))
            }
        }
    }

    /// One EMA step from a batch of assignments.
    pub fn ema_update(&mut self, batch: &AssignmentBatch) {
        let (k, d) = (self.k, self.dim);
        let g = self.decay;
        let b = batch.chosen.len();
        assert_eq!(batch.inputs.len(), b * d);
        let mut counts = vec![0.0; k];
        let mut sums = vec![0.0; k * d];
        for (i, &w) in batch.chosen.iter().enumerate() {
            counts[w] += 1.0;
            for j in 0..d {
                sums[w * d + j] += batch.inputs[i * d + j];
            }
        }
        for kk in 0..k {
            self.ema_cluster_size[kk] = g * self.ema_cluster_size[kk] + (1.0 - g) * counts[kk];
            for j in 0..d {
                self.ema_embed_sum[kk * d + j] =
                    g * self.ema_embed_sum[kk * d + j] + (1.0 - g) * sums[kk * d + j];
            }
            let used = if counts[kk] > 0.0 { 1.0 } else { 0.0 };
            self.usage_ema[kk] = g * self.usage_ema[kk] + (1.0 - g) * used;
        }
        let total: f64 = self.ema_cluster_size.iter().sum();
        for kk in 0..k {
            // Laplace-smoothed cluster size
            let smoothed =
                (self.ema_cluster_size[kk] + self.laplace_eps) / (total + k as f64 * self.laplace_eps) * total;
            for j in 0..d {
                self.codes[kk * d + j] = self.ema_embed_sum[kk * d + j] / smoothed;
            }
            if self.metric == Metric::Cosine {
                let row = &mut self.codes[kk * d..(kk + 1) * d];
                normalize_in_place(row);
            }
        }
    }

    /// Replaces every code with `usage_ema < threshold` by a uniformly sampled
    /// row of `pool` (`N x dim`). Returns the number of codes replaced.
    pub fn expire_stale<R: Rng>(&mut self, pool: &[f64], threshold: f64, rng: &mut R) -> Result<usize> {
        let d = self.dim;
        assert_eq!(pool.len() % d, 0);
        let n = pool.len() / d;
        let stale: Vec<usize> = (0..self.k).filter(|&kk| self.usage_ema[kk] < threshold).collect();
        if stale.is_empty() {
            return Ok(0);
        }
        if n == 0 {
            return Err(NumError::Domain { op: "expire_stale", what: "empty replacement pool".into() });
        }
        for kk in stale.iter().copied() {
            let pick = rng.gen_range(0..n);
            let mut row = pool[pick * d..(pick + 1) * d].to_vec();
            if self.metric == Metric::Cosine {
                normalize_in_place(&mut row);
            }
            self.codes[kk * d..(kk + 1) * d].copy_from_slice(&row);
            self.ema_cluster_size[kk] = 1.0;
            self.ema_embed_sum[kk * d..(kk + 1) * d].copy_from_slice(&row);
            self.usage_ema[kk] = 1.0;
        }
        Ok(stale.len())
    }
}

fn normalize_in_place(row: &mut [f64]) {
    let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 1e-12 {
        for v in row {
            *v /= n;
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Inverse-CDF draw from an explicit probability vector.
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
