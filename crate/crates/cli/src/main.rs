//! `vqel` — experiment runner for the VQEL referential-game laboratory.
//!
//! Exit codes: 0 success, 1 config error, 2 numerical failure (NaN),
//! 3 I/O error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use vqel_core::exp::{
    self, decade_grid, ExperimentConfig, GridSpec, RunError,
};
use vqel_core::metrics;

#[derive(Parser)]
#[command(name = "vqel", about = "VQEL emergent-language experiments", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train per the configured variant, evaluate on the test split, and
    /// export results.json / summary.csv / checkpoints.
    Train(RunArgs),
    /// Re-evaluate a saved checkpoint on the test split.
    Eval {
        #[command(flatten)]
        args: RunArgs,
        /// Checkpoint file produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate one trained model at several candidate-set sizes.
    SweepCandidates {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated candidate counts, e.g. 2,8,32,100.
        #[arg(long, default_value = "2,8,32,100")]
        b_list: String,
    },
    /// Grid search over lr / tau_sample / tau0, selecting by validation
    /// accuracy.
    Grid {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated learning rates; `lo..hi` expands to a
        /// multiplicative x10^0.1 grid.
        #[arg(long)]
        lr_grid: Option<String>,
        #[arg(long)]
        tau_sample_grid: Option<String>,
        #[arg(long)]
        tau0_grid: Option<String>,
    },
    /// Write the train/valid/test id split as a JSON document for audit.
    ExportDatasetSplit {
        /// Seed controlling the shuffle.
        #[arg(long, default_value_t = 17)]
        data_seed: u64,
        /// Output file path.
        #[arg(long, default_value = "split.json")]
        out: PathBuf,
    },
}

/// Config file plus per-field overrides; a flag always beats the file,
/// which beats the built-in default.
#[derive(Args)]
struct RunArgs {
    /// JSON config file mirroring the full experiment config; any subset
    /// of fields may be present.
    #[arg(long)]
    config: Option<PathBuf>,
    /// VQEL | GS_ST | REINFORCE
    #[arg(long)]
    method: Option<String>,
    /// SP_S | SP_S_MP | SP_R | SP_R_MP | SP_SR_MP | MP_only
    #[arg(long)]
    variant: Option<String>,
    /// Frozen | RL | RLPres
    #[arg(long)]
    sender_update: Option<String>,
    /// Frozen | FineTuned
    #[arg(long)]
    receiver_update: Option<String>,
    /// Cosine | Euclidean
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    msg_len: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Mutual-play learning rate for a pretrained sender (defaults to --lr).
    #[arg(long)]
    mp_sender_lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    t_sim: Option<f64>,
    #[arg(long)]
    tau_sample: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    epochs_self: Option<usize>,
    #[arg(long)]
    epochs_mutual: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    eval_batch: Option<usize>,
    /// Comma-separated seed list, e.g. 1,2,3.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn parse_enum<T: DeserializeOwned>(what: &str, s: &str) -> Result<T, RunError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| RunError::Config(format!("unrecognized {what} value: {s}")))
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>, RunError> {
    s.split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| RunError::Config(format!("bad {what} list: {s}")))
}

/// `lo..hi` expands multiplicatively by x10^0.1; otherwise a comma list.
fn parse_grid_axis(what: &str, s: &str) -> Result<Vec<f64>, RunError> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| {
            RunError::Config(format!("bad {what} range start: {s}"))
        })?;
        let hi: f64 = hi.trim().parse().map_err(|_| {
            RunError::Config(format!("bad {what} range end: {s}"))
        })?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(RunError::Config(format!("{what} range must satisfy 0 < lo <= hi")));
        }
        Ok(decade_grid(lo, hi))
    } else {
        parse_list(what, s)
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let doc = fs::read_to_string(path).map_err(|e| {
                RunError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&doc)
                .map_err(|e| RunError::Config(format!("config parse error: {e}")))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.method {
        cfg.method = parse_enum("method", v)?;
    }
    if let Some(v) = &args.variant {
        cfg.variant = parse_enum("variant", v)?;
    }
    if let Some(v) = &args.sender_update {
        cfg.sender_update = parse_enum("sender_update", v)?;
    }
    if let Some(v) = &args.receiver_update {
        cfg.receiver_update = parse_enum("receiver_update", v)?;
    }
    if let Some(v) = &args.metric {
        cfg.metric = parse_enum("metric", v)?;
    }
    macro_rules! over {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() { cfg.$field = v; })*
        };
    }
    over!(
        dim, k, msg_len, beta, lr, weight_decay, t_sim, tau_sample, tau0,
        epochs_self, epochs_mutual, batch, eval_batch, data_seed, output_dir
    );
    if let Some(v) = args.mp_sender_lr {
        cfg.mp_sender_lr = Some(v);
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = parse_list("seeds", v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: &RunArgs) -> Result<(), RunError> {
    let cfg = load_config(args)?;
    let (result, checkpoints) = exp::run_full(&cfg)?;
    exp::export(&result, &checkpoints)?;
    println!(
        "ACC {:.4} | AW {:.4} | TopSim {:.4} | H(C|M) {:.4} bits",
        result.accuracy.mean,
        result.active_words.mean,
        result.topsim.mean,
        result.conditional_entropy.mean
    );
    println!("results written to {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_eval(args: &RunArgs, checkpoint: &PathBuf) -> Result<(), RunError> {
    let cfg = load_config(args)?;
    let ck = exp::load_checkpoint(checkpoint)?;
    let split = exp::make_split(&cfg);
    let mut rng = exp::eval_rng(ck.seed);
    let transcripts = ck.pair.evaluate(&split.test, cfg.eval_batch, &mut rng)?;
    let acc = metrics::accuracy(&transcripts)?;
    let aw = metrics::active_words(&transcripts, cfg.k);
    println!("ACC {:.4} | AW {:.4} | n {}", acc, aw, transcripts.len());
    Ok(())
}

fn cmd_sweep(args: &RunArgs, b_list: &str) -> Result<(), RunError> {
    let cfg = load_config(args)?;
    let bs: Vec<usize> = parse_list("b_list", b_list)?;
    let rows = exp::sweep_candidates(&cfg, &bs)?;
    let mut csv = String::from("B,ACC\n");
    for (b, acc) in &rows {
        csv.push_str(&format!("{},{:.4}\n", b, acc));
    }
    print!("{csv}");
    exp::write_atomic(&cfg.output_dir.join("sweep.csv"), &csv)?;
    Ok(())
}

fn cmd_grid(
    args: &RunArgs,
    lr: Option<&str>,
    tau_sample: Option<&str>,
    tau0: Option<&str>,
) -> Result<(), RunError> {
    let cfg = load_config(args)?;
    let mut grid = GridSpec::singleton(&cfg);
    if let Some(s) = lr {
        grid.lr = parse_grid_axis("lr_grid", s)?;
    }
    if let Some(s) = tau_sample {
        grid.tau_sample = parse_grid_axis("tau_sample_grid", s)?;
    }
    if let Some(s) = tau0 {
        grid.tau0 = parse_grid_axis("tau0_grid", s)?;
    }
    let (best, table) = exp::grid_search(&cfg, &grid)?;
    let mut csv = String::from("lr,tau_sample,tau0,valid_ACC\n");
    for row in &table {
        csv.push_str(&format!(
            "{:e},{:e},{:e},{:.4}\n",
            row.lr, row.tau_sample, row.tau0, row.valid_accuracy
        ));
    }
    print!("{csv}");
    exp::write_atomic(&cfg.output_dir.join("grid.csv"), &csv)?;
    let best_doc = serde_json::to_string_pretty(&best)
        .map_err(|e| RunError::Io(e.to_string()))?;
    exp::write_atomic(&cfg.output_dir.join("best_config.json"), &best_doc)?;
    println!("best lr={:e} tau_sample={:e} tau0={:e}", best.lr, best.tau_sample, best.tau0);
    Ok(())
}

fn cmd_export_split(data_seed: u64, out: &PathBuf) -> Result<(), RunError> {
    let cfg = ExperimentConfig { data_seed, ..ExperimentConfig::default() };
    let split = exp::make_split(&cfg);
    let doc = serde_json::to_string(&split).map_err(|e| RunError::Io(e.to_string()))?;
    exp::write_atomic(out, &doc)?;
    println!("split written to {}", out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), RunError> {
    match &cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval { args, checkpoint } => cmd_eval(args, checkpoint),
        Cmd::SweepCandidates { args, b_list } => cmd_sweep(args, b_list),
        Cmd::Grid { args, lr_grid, tau_sample_grid, tau0_grid } => cmd_grid(
            args,
            lr_grid.as_deref(),
            tau_sample_grid.as_deref(),
            tau0_grid.as_deref(),
        ),
        Cmd::ExportDatasetSplit { data_seed, out } => cmd_export_split(*data_seed, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn bare_args() -> RunArgs {
        RunArgs {
            config: None,
            method: None,
            variant: None,
            sender_update: None,
            receiver_update: None,
            metric: None,
            dim: None,
            k: None,
            msg_len: None,
            beta: None,
            lr: None,
            weight_decay: None,
            t_sim: None,
            tau_sample: None,
            tau0: None,
            epochs_self: None,
            epochs_mutual: None,
            batch: None,
            eval_batch: None,
            seeds: None,
            data_seed: None,
            output_dir: None,
        }
    }

    #[test]
    fn defaults_when_no_config_or_flags() {
        let cfg = load_config(&bare_args()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, r#"{{"lr": 0.01, "dim": 32, "variant": "SP_S_MP"}}"#).unwrap();
        let mut args = bare_args();
        args.config = Some(file.path().to_path_buf());
        args.lr = Some(0.02);
        args.seeds = Some("5,6".into());
        let cfg = load_config(&args).unwrap();
        assert_eq!(cfg.lr, 0.02, "flag beats file");
        assert_eq!(cfg.dim, 32, "file beats default");
        assert_eq!(cfg.seeds, vec![5, 6]);
        assert_eq!(cfg.k, 10, "untouched fields keep defaults");
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut args = bare_args();
        args.variant = Some("SP_X".into());
        assert!(matches!(load_config(&args), Err(RunError::Config(_))));
        let mut args = bare_args();
        args.seeds = Some("1,two".into());
        assert!(matches!(load_config(&args), Err(RunError::Config(_))));
        let mut args = bare_args();
        args.batch = Some(1);
        assert!(matches!(load_config(&args), Err(RunError::Config(_))));
    }

    #[test]
    fn grid_axis_parses_lists_and_ranges() {
        assert_eq!(parse_grid_axis("lr", "0.1,0.2").unwrap(), vec![0.1, 0.2]);
        let g = parse_grid_axis("lr", "1e-4..1e-3").unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1e-3).abs() < 1e-9);
        assert!(parse_grid_axis("lr", "3..1").is_err());
    }
}
