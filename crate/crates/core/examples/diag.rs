use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vqel_core::agent::AgentParams;
use vqel_core::data;
use vqel_core::exp::{make_split, ExperimentConfig};
use vqel_core::games::{self, EvalReceiver, TrainHyper};
use vqel_core::metrics::{accuracy, conditional_entropy, unique_messages};
use vqel_core::numcore::AdamParams;
use vqel_core::vq::Metric;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let beta: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.25);
    let t_sim: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10);
    let cfg = ExperimentConfig::default();
    let split = make_split(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agent = AgentParams::new(64, 10, 4, Metric::Cosine, 0.99, 1e-5, &mut rng);
    let hp = TrainHyper {
        beta, t_sim, tau_sample: 0.1,
        adam: AdamParams::new(lr, 1e-5),
        mp_sender_adam: None, rl_baseline: true, expiry_warmup: 200, expiry_every: 100,
    };
    let mut step = 0;
    for ep in 0..epochs {
        let (mut c, mut m, mut a) = (0.0, 0.0, 0.0);
        let batches = data::epoch_batches(&split.train, 32, &mut rng);
        let n = batches.len() as f64;
        for batch in &batches {
            let r = games::self_play_step(&mut agent, batch, &hp, step, &mut rng).unwrap();
            step += 1;
            c += r.contrastive; m += r.commitment; a += r.batch_accuracy;
        }
        let t = agent.clone();
        let mut erng = ChaCha8Rng::seed_from_u64(99);
        let tr = games::evaluate(&t, &EvalReceiver::SelfPlay, &split.test, 100, &mut erng).unwrap();
        println!(
            "ep {ep:02} contrastive {:>8.4} commitment {:>12.2} batch_acc {:.3} | test_acc {:.3} uniq {} hcm {:.3}",
            c / n, m / n, a / n, accuracy(&tr).unwrap(), unique_messages(&tr),
            conditional_entropy(&tr).unwrap()
        );
    }
}
