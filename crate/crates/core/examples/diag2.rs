//! Mutual-play recipe scan: pretrain one sender with self-play, then try
//! several (lr, tau_sample) recipes for the RL mutual-play phase and watch
//! the language survive or collapse.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqel_core::agent::AgentParams;
use vqel_core::data;
use vqel_core::exp::{make_split, ExperimentConfig};
use vqel_core::games::{self, EvalReceiver, SenderMode, TrainHyper};
use vqel_core::metrics::{accuracy, conditional_entropy, unique_messages};
use vqel_core::numcore::AdamParams;
use vqel_core::vq::Metric;

fn main() {
    let cfg = ExperimentConfig::default();
    let split = make_split(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sender = AgentParams::new(64, 10, 4, Metric::Cosine, 0.99, 1e-5, &mut rng);
    let sp_hp = TrainHyper {
        beta: 0.25, t_sim: 0.5, tau_sample: 0.1,
        adam: AdamParams::new(3e-4, 1e-5),
        mp_sender_adam: None, rl_baseline: true, expiry_warmup: 200, expiry_every: 100,
    };
    let mut step = 0;
    for _ep in 0..50 {
        for batch in &data::epoch_batches(&split.train, 32, &mut rng) {
            games::self_play_step(&mut sender, batch, &sp_hp, step, &mut rng).unwrap();
            step += 1;
        }
    }
    let mut erng = ChaCha8Rng::seed_from_u64(99);
    let tr = games::evaluate(&sender, &EvalReceiver::SelfPlay, &split.test, 100, &mut erng).unwrap();
    println!(
        "after SP: test_acc {:.3} uniq {} hcm {:.3}",
        accuracy(&tr).unwrap(), unique_messages(&tr), conditional_entropy(&tr).unwrap()
    );

    let args: Vec<String> = std::env::args().collect();
    let recipes: Vec<(f64, f64, String, f64)> = args[1..]
        .chunks(4)
        .map(|c| {
            (c[0].parse().unwrap(), c[1].parse().unwrap(), c[2].clone(), c[3].parse().unwrap())
        })
        .collect();
    for (lr, tau, mode_name, beta) in recipes {
        let mode = if mode_name == "pres" { SenderMode::RlPres } else { SenderMode::Rl };
        let mut s = sender.clone();
        let mut mrng = ChaCha8Rng::seed_from_u64(123);
        let mut receiver = AgentParams::new(64, 10, 4, Metric::Cosine, 0.99, 1e-5, &mut mrng);
        let hp = TrainHyper { tau_sample: tau, beta, adam: AdamParams::new(lr, 1e-5), ..sp_hp };
        let mut mstep = step;
        println!("--- MP recipe lr {lr:e} tau {tau} mode {mode_name} beta {beta}");
        for ep in 0..50 {
            let mut acc = 0.0;
            let batches = data::epoch_batches(&split.train, 32, &mut mrng);
            let n = batches.len() as f64;
            for batch in &batches {
                let r = games::mutual_play_step(
                    &mut s, &mut receiver, batch, &hp, mode, true, mstep, &mut mrng,
                ).unwrap();
                mstep += 1;
                acc += r.batch_accuracy;
            }
            if ep % 5 == 4 || ep == 0 {
                let mut erng = ChaCha8Rng::seed_from_u64(99);
                let tr = games::evaluate(&s, &EvalReceiver::Pair(&receiver), &split.test, 100, &mut erng).unwrap();
                println!(
                    "  mp ep {ep:02} batch_acc {:.3} test_acc {:.3} uniq {} hcm {:.3}",
                    acc / n, accuracy(&tr).unwrap(), unique_messages(&tr),
                    conditional_entropy(&tr).unwrap()
                );
            }
        }
    }
}
