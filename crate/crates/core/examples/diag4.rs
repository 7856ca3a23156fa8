//! Isolation test: after self-play, what does each mutual-play side effect do
//! to the language on its own? Runs one epoch of (a) EMA codebook updates only,
//! (b) adam on commitment only (beta path, no RL), comparing greedy messages
//! before and after.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqel_core::agent::AgentParams;

use vqel_core::data;
use vqel_core::exp::{make_split, ExperimentConfig};
use vqel_core::games::{self, EvalReceiver, TrainHyper};
use vqel_core::metrics::{accuracy, conditional_entropy, unique_messages};
use vqel_core::numcore::AdamParams;
use vqel_core::agent::GenMode;
use vqel_core::vq::Metric;

fn report(agent: &AgentParams, split: &data::DatasetSplit, label: &str) -> Vec<Vec<usize>> {
    let mut erng = ChaCha8Rng::seed_from_u64(99);
    let tr = games::evaluate(agent, &EvalReceiver::SelfPlay, &split.test, 100, &mut erng).unwrap();
    println!(
        "{label}: self_acc {:.3} uniq {} hcm {:.3}",
        accuracy(&tr).unwrap(), unique_messages(&tr), conditional_entropy(&tr).unwrap()
    );
    tr.iter().map(|t| t.message.clone()).collect()
}

fn main() {
    let cfg = ExperimentConfig::default();
    let split = make_split(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agent = AgentParams::new(64, 10, 4, Metric::Cosine, 0.99, 1e-5, &mut rng);
    let hp = TrainHyper {
        beta: 0.25, t_sim: 0.5, tau_sample: 0.1,
        adam: AdamParams::new(3e-4, 1e-5),
        mp_sender_adam: None, rl_baseline: true, expiry_warmup: 200, expiry_every: 100,
    };
    let mut step = 0;
    for _ep in 0..50 {
        for batch in &data::epoch_batches(&split.train, 32, &mut rng) {
            games::self_play_step(&mut agent, batch, &hp, step, &mut rng).unwrap();
            step += 1;
        }
    }
    let base = report(&agent, &split, "after SP");

    // (a) EMA only: regenerate greedy messages over the training set once,
    // feeding each batch's assignments to the codebook, no gradient updates.
    let mut ema_agent = agent.clone();
    let mut mrng = ChaCha8Rng::seed_from_u64(123);
    for batch in &data::epoch_batches(&split.train, 32, &mut mrng) {
        let one_hots = batch.one_hots();
        let mut tape = vqel_core::numcore::Tape::new();
        let vars = ema_agent.stage(&mut tape, false);
        let v_o = ema_agent.perceive_object(&mut tape, &vars, &one_hots).unwrap();
        let msg = ema_agent
            .generate_message(&mut tape, &vars, v_o, GenMode::Hard, &mut mrng)
            .unwrap();
        for a in &msg.assignments {
            ema_agent.codebook.ema_update(a);
        }
    }
    let after = report(&ema_agent, &split, "after 1 epoch EMA-only");
    let changed = base.iter().zip(&after).filter(|(a, b)| a != b).count();
    println!("messages changed by EMA-only epoch: {changed}/{}", base.len());
}
