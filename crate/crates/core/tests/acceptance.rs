//! End-to-end acceptance suite. Each numbered criterion prints one
//! pass/fail line; the test fails if any criterion fails. The full suite
//! trains every experiment variant at desk scale and takes a few hours on
//! one core — run with `-- --nocapture` to watch the lines appear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqel_core::agent::{AgentParams, GenMode, MessageKind};
use vqel_core::data::{CandidateSet, ObjectRecord};
use vqel_core::exp::{
    run_full, sweep_trained, ExperimentConfig, Method, ReceiverUpdate, RunResult, SenderUpdate,
    Variant,
};
use vqel_core::games::contrastive_loss;
use vqel_core::metrics::{conditional_entropy, topsim, Transcript};
use vqel_core::vq::{AssignMode, AssignmentBatch, Codebook, Metric};
use vqel_core::Tape;

struct Scorecard {
    lines: Vec<(usize, bool, String)>,
}

impl Scorecard {
    fn new() -> Self {
        Scorecard { lines: Vec::new() }
    }

    fn record(&mut self, id: usize, pass: bool, detail: String) {
        println!(
            "criterion {:02} [{}] {}",
            id,
            if pass { "PASS" } else { "FAIL" },
            detail
        );
        self.lines.push((id, pass, detail));
    }

    fn finish(self) {
        let failures: Vec<_> = self.lines.iter().filter(|(_, p, _)| !p).collect();
        assert!(
            failures.is_empty(),
            "{} of {} criteria failed: {:?}",
            failures.len(),
            self.lines.len(),
            failures
        );
    }
}

fn base() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn train(label: &str, cfg: &ExperimentConfig) -> (RunResult, Vec<vqel_core::exp::Checkpoint>) {
    let t0 = std::time::Instant::now();
    let out = run_full(cfg).unwrap_or_else(|e| panic!("{label} run failed: {e}"));
    println!(
        "trained {label}: ACC {:.4} AW {:.4} TopSim {:.4} H(C|M) {:.4} ({:.0}s)",
        out.0.accuracy.mean,
        out.0.active_words.mean,
        out.0.topsim.mean,
        out.0.conditional_entropy.mean,
        t0.elapsed().as_secs_f64()
    );
    out
}

#[test]
fn acceptance() {
    let mut card = Scorecard::new();

    // ------------------------------------------------------------------
    // Property criteria first: cheap, independent of training outcomes.
    // ------------------------------------------------------------------
    criterion_11_finite_differences(&mut card);
    criterion_12_vq_suite(&mut card);
    criterion_13_metric_oracles(&mut card);
    criterion_14_straight_through(&mut card);
    criterion_15_determinism(&mut card);

    // ------------------------------------------------------------------
    // Quantitative criteria: full desk-scale training runs.
    // ------------------------------------------------------------------
    let (sps, _) = train("VQEL SP_S", &base());

    let spsmp_cfg = ExperimentConfig { variant: Variant::SpSMp, ..base() };
    let (spsmp, spsmp_ck) = train("VQEL SP_S+MP (RL)", &spsmp_cfg);

    let (spsrmp, _) = train(
        "VQEL SP_{S,R}+MP",
        &ExperimentConfig { variant: Variant::SpSrMp, ..base() },
    );

    let (mponly, _) = train(
        "VQEL MP-only",
        &ExperimentConfig { variant: Variant::MpOnly, ..base() },
    );

    let (gs, _) = train("GS-ST baseline", &ExperimentConfig { method: Method::GsSt, ..base() });
    let (rf, _) = train(
        "REINFORCE baseline",
        &ExperimentConfig { method: Method::Reinforce, ..base() },
    );

    let sprmp = |ru: ReceiverUpdate| ExperimentConfig {
        variant: Variant::SpRMp,
        receiver_update: ru,
        seeds: vec![1, 2],
        ..base()
    };
    let (spr_frozen, _) = train("SP_R+MP frozen receiver", &sprmp(ReceiverUpdate::Frozen));
    let (spr_ft, _) = train("SP_R+MP fine-tuned receiver", &sprmp(ReceiverUpdate::FineTuned));

    let (eucl, _) = train(
        "VQEL SP_S Euclidean",
        &ExperimentConfig { metric: Metric::Euclidean, ..base() },
    );

    // 1. Self-play sender accuracy.
    card.record(
        1,
        sps.accuracy.mean >= 0.75,
        format!("VQEL SP_S ACC {:.4} >= 0.75", sps.accuracy.mean),
    );

    // 2. Mutual play on top of sender self-play.
    card.record(
        2,
        spsmp.accuracy.mean >= sps.accuracy.mean && spsmp.accuracy.mean >= 0.80,
        format!(
            "SP_S+MP ACC {:.4} >= max(SP_S {:.4}, 0.80)",
            spsmp.accuracy.mean, sps.accuracy.mean
        ),
    );

    // 3. Both agents self-play before mutual play.
    card.record(
        3,
        spsrmp.accuracy.mean >= spsmp.accuracy.mean - 0.02 && spsrmp.accuracy.mean >= 0.84,
        format!(
            "SP_SR+MP ACC {:.4} >= max(SP_S+MP {:.4} - 0.02, 0.84)",
            spsrmp.accuracy.mean, spsmp.accuracy.mean
        ),
    );

    // 4. Full vocabulary usage for every VQEL variant trained above.
    let aw_all: Vec<(&str, f64)> = vec![
        ("SP_S", sps.active_words.mean),
        ("SP_S_MP", spsmp.active_words.mean),
        ("SP_SR_MP", spsrmp.active_words.mean),
        ("MP_only", mponly.active_words.mean),
        ("SP_R_MP frozen", spr_frozen.active_words.mean),
        ("SP_R_MP fine-tuned", spr_ft.active_words.mean),
        ("SP_S Euclidean", eucl.active_words.mean),
    ];
    card.record(
        4,
        aw_all.iter().all(|(_, aw)| *aw == 1.0),
        format!("active words exactly 1.00 for every VQEL variant: {aw_all:?}"),
    );

    // 5. Conditional entropy low and below both baselines.
    card.record(
        5,
        sps.conditional_entropy.mean <= 0.5
            && sps.conditional_entropy.mean < gs.conditional_entropy.mean
            && sps.conditional_entropy.mean < rf.conditional_entropy.mean,
        format!(
            "H(C|M) SP_S {:.4} <= 0.5 and < GS-ST {:.4} and < REINFORCE {:.4}",
            sps.conditional_entropy.mean,
            gs.conditional_entropy.mean,
            rf.conditional_entropy.mean
        ),
    );

    // 6. Self-play phase is crucial: MP-only trails far behind.
    card.record(
        6,
        spsmp.accuracy.mean - mponly.accuracy.mean >= 0.2,
        format!(
            "SP_S+MP ACC {:.4} - MP-only ACC {:.4} >= 0.2",
            spsmp.accuracy.mean, mponly.accuracy.mean
        ),
    );

    // 7. Baseline envelope: GS-ST stable, REINFORCE high-variance.
    let rf_std = rf.accuracy.std.unwrap_or(0.0);
    card.record(
        7,
        (0.70..=0.85).contains(&gs.accuracy.mean)
            && (0.20..=0.80).contains(&rf.accuracy.mean)
            && rf_std > 0.05,
        format!(
            "GS-ST ACC {:.4} in [0.70,0.85]; REINFORCE ACC {:.4} in [0.20,0.80] with std {:.4} > 0.05",
            gs.accuracy.mean, rf.accuracy.mean, rf_std
        ),
    );

    // 8. Receiver-only self-play transfers poorly unless fine-tuned.
    card.record(
        8,
        spr_frozen.accuracy.mean < 0.3 && spr_frozen.accuracy.mean < spr_ft.accuracy.mean,
        format!(
            "SP_R+MP frozen ACC {:.4} < 0.3 and < fine-tuned ACC {:.4}",
            spr_frozen.accuracy.mean, spr_ft.accuracy.mean
        ),
    );

    // 9. Cosine quantization beats Euclidean.
    card.record(
        9,
        sps.accuracy.mean - eucl.accuracy.mean >= 0.03,
        format!(
            "Cosine SP_S ACC {:.4} - Euclidean {:.4} >= 0.03",
            sps.accuracy.mean, eucl.accuracy.mean
        ),
    );

    // 10. Candidate-count sweep shape on a trained pair.
    {
        let split = vqel_core::exp::make_split(&spsmp_cfg);
        let rows =
            sweep_trained(&spsmp_ck[0].pair, &split, spsmp_ck[0].seed, &[2, 8, 32, 100]).unwrap();
        let acc_at = |b: usize| rows.iter().find(|(bb, _)| *bb == b).unwrap().1;
        let close = (acc_at(100) - acc_at(32)).abs() <= 0.05;
        let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1 + 0.02);
        card.record(
            10,
            close && monotone,
            format!("sweep rows {rows:?}: |ACC(100)-ACC(32)| <= 0.05 and non-increasing within 0.02"),
        );
    }

    card.finish();
}

// ---------------------------------------------------------------------------
// Criterion 11: finite-difference gradients
// ---------------------------------------------------------------------------

/// Central finite differences of `f` against the analytic gradient of a
/// scalar loss built by `graph`, perturbing one flat parameter vector.
fn fd_check(
    theta: &[f64],
    graph: &dyn Fn(&mut Tape, &[f64]) -> (vqel_core::Var, vqel_core::Var),
    tol: f64,
) -> (f64, bool) {
    let mut tape = Tape::new();
    let (leaf, loss) = graph(&mut tape, theta);
    let grads = tape.backward(loss).unwrap();
    let g = grads.of(leaf);
    let step = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut plus = theta.to_vec();
        plus[i] += step;
        let mut minus = theta.to_vec();
        minus[i] -= step;
        let mut tp = Tape::new();
        let lp = graph(&mut tp, &plus).1;
        let fp = tp.scalar(lp);
        let mut tm = Tape::new();
        let lm = graph(&mut tm, &minus).1;
        let fm = tm.scalar(lm);
        let fd = (fp - fm) / (2.0 * step);
        let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0);
        worst = worst.max(err);
    }
    (worst, worst < tol)
}

fn criterion_11_finite_differences(card: &mut Scorecard) {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let theta: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut details = Vec::new();
    let mut all_pass = true;

    // elementwise / reduction / normalization ops chained together
    let (err, ok) = fd_check(
        &theta,
        &|tape, th| {
            let x = tape.leaf(3, 4, th.to_vec(), true);
            let s = tape.sigmoid(x);
            let t = tape.tanh(s);
            let n = tape.l2_normalize_rows(t).unwrap();
            let ls = tape.log_softmax_rows(n, 0.7).unwrap();
            let m = tape.mul(ls, ls).unwrap();
            (x, tape.mean_all(m))
        },
        1e-4,
    );
    all_pass &= ok;
    details.push(format!("op chain {err:.2e}"));

    // matmul + matmul_nt + take_per_row
    let (err, ok) = fd_check(
        &theta,
        &|tape, th| {
            let x = tape.leaf(3, 4, th.to_vec(), true);
            let sq = tape.matmul_nt(x, x).unwrap();
            let prod = tape.matmul(sq, x).unwrap();
            let diag = tape.take_per_row(prod, &[0, 1, 2]).unwrap();
            (x, tape.sum_all(diag))
        },
        1e-4,
    );
    all_pass &= ok;
    details.push(format!("matmul {err:.2e}"));

    // the GRU cell, parameters in the recurrent weight matrix
    let d = 3;
    let theta_gru: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let h0: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fixed: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let (err, ok) = fd_check(
        &theta_gru,
        &|tape, th| {
            let uh = tape.leaf(d, d, th.to_vec(), true);
            let h = tape.constant(2, d, h0.clone());
            let x = tape.constant(2, d, x0.clone());
            let w = tape.constant(d, d, fixed.clone());
            let b = tape.constant(1, d, vec![0.1; d]);
            let g = vqel_core::agent::GruVars {
                wz: w, uz: w, bz: b, wr: w, ur: w, br: b, wh: w, uh, bh: b,
            };
            let out = vqel_core::agent::run_gru_cell(tape, g, h, x).unwrap();
            let sq = tape.mul(out, out).unwrap();
            (uh, tape.sum_all(sq))
        },
        1e-4,
    );
    all_pass &= ok;
    details.push(format!("gru {err:.2e}"));

    // contrastive loss wrt the message vectors
    let cands: Vec<f64> = (0..3 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (err, ok) = fd_check(
        &theta,
        &|tape, th| {
            let vm = tape.leaf(3, 4, th.to_vec(), true);
            let vo = tape.constant(3, 4, cands.clone());
            let out = contrastive_loss(tape, vm, vo, &[0, 1, 2], 0.3).unwrap();
            (vm, out.mean)
        },
        1e-4,
    );
    all_pass &= ok;
    details.push(format!("contrastive {err:.2e}"));

    // full self-play step via the fixed-offset surrogate (criterion allows
    // 1e-3 for the composed step)
    let (err, ok) = self_play_fd(&mut rng);
    all_pass &= ok;
    details.push(format!("self-play step {err:.2e}"));

    card.record(
        11,
        all_pass,
        format!("worst finite-difference rel errs: {}", details.join(", ")),
    );
}

fn toy_batch(ids: &[usize]) -> CandidateSet {
    CandidateSet { objects: ids.iter().map(|&i| ObjectRecord::from_id(i)).collect() }
}

fn diagonal(b: usize) -> Vec<usize> {
    (0..b).collect()
}

/// The self-play loss with straight-through offsets and commitment centers
/// frozen at the evaluation point; at the center it equals the true loss
/// and its gradient equals the straight-through gradient.
fn self_play_surrogate(
    agent: &AgentParams,
    batch: &CandidateSet,
    beta: f64,
    t_sim: f64,
    offsets: &[Vec<f64>],
    centers: &[Vec<f64>],
) -> f64 {
    let b = batch.len();
    let d = agent.dim;
    let mut tape = Tape::new();
    let vars = agent.stage(&mut tape, false);
    let v_o = agent.perceive_object(&mut tape, &vars, &batch.one_hots()).unwrap();
    let mut h = v_o;
    let mut last = tape.gather_rows(vars.bos(), &vec![0usize; b]).unwrap();
    let mut qs = Vec::new();
    let mut commitment = tape.scalar_leaf(0.0);
    for t in 0..agent.msg_len {
        h = agent.gru_cell(&mut tape, vars.gen_gru(), h, last).unwrap();
        let zp = tape.matmul(h, vars.proj_w()).unwrap();
        let z = tape.add_row(zp, vars.proj_b()).unwrap();
        let off = tape.constant(b, d, offsets[t].clone());
        let q = tape.add(z, off).unwrap();
        let e = tape.constant(b, d, centers[t].clone());
        let diff = tape.sub(z, e).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        let c = tape.sum_all(sq);
        commitment = tape.add(commitment, c).unwrap();
        qs.push(q);
        last = q;
    }
    let mut hm = tape.constant(b, d, vec![0.0; b * d]);
    for &q in &qs {
        hm = agent.gru_cell(&mut tape, vars.percep_gru(), hm, q).unwrap();
    }
    let out = contrastive_loss(&mut tape, hm, v_o, &diagonal(b), t_sim).unwrap();
    let commit = tape.scale(commitment, beta / (b * agent.msg_len) as f64);
    let total = tape.add(out.mean, commit).unwrap();
    tape.scalar(total)
}

fn self_play_fd(rng: &mut ChaCha8Rng) -> (f64, bool) {
    let mut init = ChaCha8Rng::seed_from_u64(3);
    let agent = AgentParams::new(4, 3, 2, Metric::Euclidean, 0.99, 1e-5, &mut init);
    let batch = toy_batch(&[17, 4242, 9876]);
    let (beta, t_sim) = (0.25, 0.5);

    let mut tape = Tape::new();
    let vars = agent.stage(&mut tape, true);
    let v_o = agent.perceive_object(&mut tape, &vars, &batch.one_hots()).unwrap();
    let msg = agent.generate_message(&mut tape, &vars, v_o, GenMode::Hard, rng).unwrap();
    let v_m = agent.perceive_message(&mut tape, &vars, &msg, MessageKind::Discrete).unwrap();
    let out = contrastive_loss(&mut tape, v_m, v_o, &diagonal(3), t_sim).unwrap();
    let commit = tape.scale(msg.commitment, beta / (3 * agent.msg_len) as f64);
    let total = tape.add(out.mean, commit).unwrap();

    let mut offsets = Vec::new();
    let mut centers = Vec::new();
    for a in &msg.assignments {
        let codes: Vec<f64> =
            a.chosen.iter().flat_map(|&k| agent.codebook.code(k).to_vec()).collect();
        let off: Vec<f64> = codes.iter().zip(&a.inputs).map(|(c, z)| c - z).collect();
        centers.push(codes);
        offsets.push(off);
    }
    let center = self_play_surrogate(&agent, &batch, beta, t_sim, &offsets, &centers);
    assert!((center - tape.scalar(total)).abs() < 1e-10, "surrogate center mismatch");
    let grads = tape.backward(total).unwrap();

    let step = 1e-5;
    let mut worst = 0.0f64;
    for (pi, p) in agent.params.params.iter().enumerate() {
        let g = grads.of(vars.all[pi]);
        for i in 0..p.len() {
            let mut plus = agent.clone();
            plus.params.params[pi].value[i] += step;
            let mut minus = agent.clone();
            minus.params.params[pi].value[i] -= step;
            let fd = (self_play_surrogate(&plus, &batch, beta, t_sim, &offsets, &centers)
                - self_play_surrogate(&minus, &batch, beta, t_sim, &offsets, &centers))
                / (2.0 * step);
            let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    (worst, worst < 1e-3)
}

// ---------------------------------------------------------------------------
// Criterion 12: vector-quantization suite
// ---------------------------------------------------------------------------

fn criterion_12_vq_suite(card: &mut Scorecard) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut details = Vec::new();
    let mut all_pass = true;

    // hard assignment == exhaustive scan on 1000 random inputs
    let mut cb = Codebook::new(8, 5, Metric::Euclidean, 0.99, 1e-5, &mut rng);
    let mut scan_ok = true;
    for _ in 0..1000 {
        let z: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dists = cb.distances(&z).unwrap();
        let brute = (0..8)
            .min_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let zv = tape.constant(1, 5, z.clone());
        let q = cb.quantize_batch(&mut tape, zv, AssignMode::Hard, &mut rng).unwrap();
        scan_ok &= q.chosen[0] == brute;
    }
    all_pass &= scan_ok;
    details.push(format!("hard-assign scan {}", if scan_ok { "ok" } else { "MISMATCH" }));

    // EMA recursion == scalar reference loop to 1e-12, starting from the
    // codebook's initial EMA state
    let mut reference_counts = cb.ema_cluster_size.clone();
    let mut reference_sums = cb.ema_embed_sum.clone();
    let g = cb.decay;
    let mut ema_ok = true;
    for _ in 0..50 {
        let inputs: Vec<f64> = (0..3 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let chosen: Vec<usize> = (0..3).map(|_| rng.gen_range(0..8)).collect();
        // scalar reference for the same recursion
        let mut nk = vec![0.0f64; 8];
        let mut sk = vec![0.0f64; 8 * 5];
        for (i, &k) in chosen.iter().enumerate() {
            nk[k] += 1.0;
            for j in 0..5 {
                sk[k * 5 + j] += inputs[i * 5 + j];
            }
        }
        for k in 0..8 {
            reference_counts[k] = g * reference_counts[k] + (1.0 - g) * nk[k];
            for j in 0..5 {
                reference_sums[k * 5 + j] =
                    g * reference_sums[k * 5 + j] + (1.0 - g) * sk[k * 5 + j];
            }
        }
        cb.ema_update(&AssignmentBatch { inputs, chosen });
        for k in 0..8 {
            ema_ok &= (cb.ema_cluster_size[k] - reference_counts[k]).abs() < 1e-12;
            let total: f64 = reference_counts.iter().sum();
            let denom = (reference_counts[k] + cb.laplace_eps)
                / (total + 8.0 * cb.laplace_eps)
                * total;
            for j in 0..5 {
                let expect = reference_sums[k * 5 + j] / denom;
                ema_ok &= (cb.code(k)[j] - expect).abs() < 1e-9;
            }
        }
    }
    all_pass &= ema_ok;
    details.push(format!("ema recursion {}", if ema_ok { "ok" } else { "MISMATCH" }));

    // unit-norm invariant in cosine mode, across updates
    let mut cc = Codebook::new(6, 4, Metric::Cosine, 0.99, 1e-5, &mut rng);
    let mut norm_ok = true;
    for _ in 0..20 {
        let inputs: Vec<f64> = (0..4 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let chosen: Vec<usize> = (0..4).map(|_| rng.gen_range(0..6)).collect();
        cc.ema_update(&AssignmentBatch { inputs, chosen });
        for k in 0..6 {
            let n: f64 = cc.code(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            norm_ok &= (n - 1.0).abs() < 1e-12;
        }
    }
    all_pass &= norm_ok;
    details.push(format!("cosine unit norm {}", if norm_ok { "ok" } else { "VIOLATED" }));

    // commitment gradient never touches the codebook: codes enter the tape
    // as constants, so quantization must not create grad-requiring nodes
    // from them
    let mut tape = Tape::new();
    let z = tape.leaf(2, 5, (0..10).map(|i| i as f64 * 0.1).collect(), true);
    let q = cb.quantize_batch(&mut tape, z, AssignMode::Hard, &mut rng).unwrap();
    let codes_before = cb.codes.clone();
    let e = tape.gather_rows(q.codes_const, &q.chosen).unwrap();
    let diff = tape.sub(z, e).unwrap();
    let sq = tape.mul(diff, diff).unwrap();
    let commit = tape.sum_all(sq);
    let grads = tape.backward(commit).unwrap();
    let code_grad = grads.of(q.codes_const);
    let grad_ok = code_grad.iter().all(|&v| v == 0.0) && cb.codes == codes_before;
    all_pass &= grad_ok;
    details.push(format!("commitment grad isolation {}", if grad_ok { "ok" } else { "LEAK" }));

    card.record(12, all_pass, details.join(", "));
}

// ---------------------------------------------------------------------------
// Criterion 13: metric oracles
// ---------------------------------------------------------------------------

fn criterion_13_metric_oracles(card: &mut Scorecard) {
    // identity-compositional language: message symbol t = attribute t
    let ts: Vec<Transcript> = (0..600)
        .map(|i| {
            let id = (i * 131) % 10_000;
            let rec = ObjectRecord::from_id(id);
            Transcript {
                target_id: id,
                message: rec.attributes.to_vec(),
                chosen_index: 0,
                target_index: 0,
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ts_val = topsim(&ts, &mut rng).unwrap();
    let topsim_ok = (ts_val - 1.0).abs() < 1e-12;

    // injective protocol: H(C|M) exactly zero
    let hcm = conditional_entropy(&ts).unwrap();
    let hcm_ok = hcm == 0.0;

    // hand corpus vs brute-force plug-in oracle
    let hand = vec![
        Transcript { target_id: 0, message: vec![1, 1], chosen_index: 0, target_index: 0 },
        Transcript { target_id: 1, message: vec![1, 1], chosen_index: 0, target_index: 0 },
        Transcript { target_id: 2, message: vec![2, 2], chosen_index: 0, target_index: 0 },
        Transcript { target_id: 2, message: vec![2, 2], chosen_index: 0, target_index: 0 },
        Transcript { target_id: 3, message: vec![2, 2], chosen_index: 0, target_index: 0 },
        Transcript { target_id: 3, message: vec![2, 2], chosen_index: 0, target_index: 0 },
    ];
    // message (1,1): concepts {0,1} uniform -> 1 bit, weight 2/6
    // message (2,2): concepts {2,3} uniform -> 1 bit, weight 4/6
    let oracle = 2.0 / 6.0 * 1.0 + 4.0 / 6.0 * 1.0;
    let hand_val = conditional_entropy(&hand).unwrap();
    let hand_ok = (hand_val - oracle).abs() < 1e-12;

    card.record(
        13,
        topsim_ok && hcm_ok && hand_ok,
        format!(
            "topsim identity {:.12} (expect 1), injective H(C|M) {:.1e} (expect 0), hand corpus {:.12} vs oracle {:.12}",
            ts_val, hcm, hand_val, oracle
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 14: straight-through contract
// ---------------------------------------------------------------------------

fn criterion_14_straight_through(card: &mut Scorecard) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let disc: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cont: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut tape = Tape::new();
    let d = tape.leaf(3, 4, disc.clone(), true);
    let c = tape.leaf(3, 4, cont.clone(), true);
    let st = tape.straight_through(d, c).unwrap();
    let forward_ok = tape.values(st) == disc.as_slice();
    let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let wv = tape.constant(3, 4, w.clone());
    let prod = tape.mul(st, wv).unwrap();
    let loss = tape.sum_all(prod);
    let grads = tape.backward(loss).unwrap();
    let to_continuous = grads.of(c).to_vec();
    let to_discrete = grads.of(d).to_vec();
    let routing_ok =
        to_continuous == w && to_discrete.iter().all(|&v| v == 0.0);
    card.record(
        14,
        forward_ok && routing_ok,
        format!(
            "forward bit-exact: {forward_ok}; gradient to continuous only: {routing_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 15: determinism
// ---------------------------------------------------------------------------

fn criterion_15_determinism(card: &mut Scorecard) {
    let cfg = ExperimentConfig {
        dim: 16,
        epochs_self: 2,
        epochs_mutual: 1,
        variant: Variant::SpSMp,
        sender_update: SenderUpdate::Rl,
        seeds: vec![7],
        eval_batch: 100,
        ..base()
    };
    let (r1, _) = run_full(&cfg).unwrap();
    let (r2, _) = run_full(&cfg).unwrap();
    card.record(
        15,
        r1.numeric_eq(&r2),
        format!(
            "two invocations bit-identical: {} (ACC {:.4})",
            r1.numeric_eq(&r2),
            r1.accuracy.mean
        ),
    );
}
