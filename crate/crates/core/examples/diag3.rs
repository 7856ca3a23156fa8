//! Baseline recipe scan: train the GS-ST or REINFORCE sender/receiver pair
//! for a few (lr, tau) recipes and watch test accuracy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqel_core::agent::AgentParams;
use vqel_core::baselines::{self, BaselineMethod, BaselineSenderParams};
use vqel_core::data;
use vqel_core::exp::{make_split, ExperimentConfig};
use vqel_core::games::TrainHyper;
use vqel_core::metrics::{accuracy, unique_messages};
use vqel_core::numcore::AdamParams;
use vqel_core::vq::Metric;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let method = if args[1] == "gs" { BaselineMethod::GsSt } else { BaselineMethod::Reinforce };
    let epochs: usize = args[2].parse().unwrap();
    let recipes: Vec<(f64, f64)> =
        args[3..].chunks(2).map(|c| (c[0].parse().unwrap(), c[1].parse().unwrap())).collect();
    let cfg = ExperimentConfig::default();
    let split = make_split(&cfg);
    for (lr, tau) in recipes {
        // tau means tau0 for GS-ST and tau_sample for REINFORCE
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sender = BaselineSenderParams::new(method, 64, 10, 4, tau, &mut rng);
        let mut receiver = AgentParams::new(64, 10, 4, Metric::Cosine, 0.99, 1e-5, &mut rng);
        let hp = TrainHyper {
            beta: 0.25, t_sim: 0.5, tau_sample: tau,
            adam: AdamParams::new(lr, 1e-5),
            mp_sender_adam: None, rl_baseline: true, expiry_warmup: 200, expiry_every: 100,
        };
        println!("--- {:?} lr {lr:e} tau {tau}", method);
        for ep in 0..epochs {
            let mut acc = 0.0;
            let batches = data::epoch_batches(&split.train, 32, &mut rng);
            let n = batches.len() as f64;
            for batch in &batches {
                let r = baselines::baseline_mp_step(&mut sender, &mut receiver, batch, &hp, &mut rng).unwrap();
                acc += r.batch_accuracy;
            }
            if ep % 10 == 9 || ep == 0 {
                let mut erng = ChaCha8Rng::seed_from_u64(99);
                let tr = baselines::evaluate_baseline(&sender, &receiver, &split.test, 100, &mut erng).unwrap();
                println!(
                    "  ep {ep:02} batch_acc {:.3} test_acc {:.3} uniq {}",
                    acc / n, accuracy(&tr).unwrap(), unique_messages(&tr)
                );
            }
        }
    }
}
