use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tkgc::commands;
use tkgc::config::{parse_override_value, RunConfig};

#[derive(Parser)]
#[command(name = "tkgc", version, about = "Temporal knowledge-graph completion")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw split files and write the encoded dataset container.
    Ingest(Opts),
    /// Train one configuration.
    Train(Opts),
    /// Evaluate a checkpoint.
    Eval(Opts),
    /// Run a resumable grid search.
    Grid(Opts),
    /// Emit norm curves as CSV.
    PlotNorms(Opts),
    /// Describe a dataset container or checkpoint.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct Opts {
    /// Flat TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set lambda_time=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    valid: Option<String>,
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(short = 'd', long)]
    rank: Option<String>,
    #[arg(long, alias = "reg")]
    regulariser: Option<String>,
    #[arg(short, long)]
    p: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lambda_emb: Option<String>,
    #[arg(long)]
    lambda_time: Option<String>,
    #[arg(long, alias = "lr")]
    learning_rate: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    ties: Option<String>,
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    norms: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(short, long)]
    output: Option<String>,
}

impl Opts {
    fn run_config(&self, threads: usize) -> tkgc::Result<RunConfig> {
        let file = self.config.as_deref().map(RunConfig::read_table).transpose()?;
        let str_value = |v: &str| toml::Value::String(v.to_string());
        let mut o: Vec<(String, toml::Value)> = Vec::new();
        let named: [(&str, &Option<String>, bool); 26] = [
            ("train", &self.train, true),
            ("valid", &self.valid, true),
            ("test", &self.test, true),
            ("format", &self.format, true),
            ("dataset", &self.dataset, true),
            ("out_dir", &self.out_dir, true),
            ("model", &self.model, false),
            ("rank", &self.rank, false),
            ("regulariser", &self.regulariser, false),
            ("p", &self.p, false),
            ("hidden", &self.hidden, false),
            ("lambda_emb", &self.lambda_emb, false),
            ("lambda_time", &self.lambda_time, false),
            ("learning_rate", &self.learning_rate, false),
            ("batch_size", &self.batch_size, false),
            ("epochs", &self.epochs, false),
            ("seed", &self.seed, false),
            ("checkpoint", &self.checkpoint, true),
            ("split", &self.split, true),
            ("ties", &self.ties, true),
            ("report", &self.report, true),
            ("norms", &self.norms, false),
            ("lo", &self.lo, false),
            ("hi", &self.hi, false),
            ("samples", &self.samples, false),
            ("output", &self.output, true),
        ];
        for (key, value, plain) in named {
            if let Some(v) = value {
                let parsed = if plain { str_value(v) } else { parse_override_value(v) };
                let parsed = match (key, parsed) {
                    ("norms", toml::Value::String(s)) => toml::Value::Array(vec![toml::Value::String(s)]),
                    (_, p) => p,
                };
                o.push((key.to_string(), parsed));
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| tkgc::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            o.push((k.trim().to_string(), parse_override_value(v)));
        }
        if threads > 0 {
            o.push(("threads".into(), toml::Value::Integer(threads as i64)));
        }
        RunConfig::from_parts(file, &o)
    }
}

fn run(cli: Cli) -> tkgc::Result<()> {
    let threads = |cfg: &RunConfig| cfg.threads.unwrap_or(cli.threads);
    let pool = |n: usize| {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    };
    match &cli.command {
        Command::Ingest(o) => {
            let cfg = o.run_config(cli.threads)?;
            let s = commands::ingest(&cfg)?;
            println!("{}", s.stats);
            println!("sha256\t{}", s.dataset_hash);
            println!("seconds\t{:.3}", s.seconds);
        }
        Command::Train(o) => {
            let cfg = o.run_config(cli.threads)?;
            let config = cfg.train_config()?;
            pool(threads(&cfg));
            let s = commands::train(&cfg, |r| {
                let valid = r.valid.map(|m| format!("\tvalid_mrr {:.4}", m.mrr())).unwrap_or_default();
                eprintln!("epoch {}\tloss {:.6}{valid}", r.epoch, r.train_loss);
            })?;
            println!("model\t{}\t{}", config.model.kind, config.temporal);
            println!("checkpoint\t{}", s.checkpoint.display());
            if let Some(m) = s.valid {
                println!("valid_mrr\t{:.6}", m.mrr);
            }
            if let Some(m) = s.test {
                println!("test_mrr\t{:.6}\ttest_hits@1\t{:.6}\ttest_hits@3\t{:.6}\ttest_hits@10\t{:.6}", m.mrr, m.hits_at_1, m.hits_at_3, m.hits_at_10);
            }
        }
        Command::Eval(o) => {
            let cfg = o.run_config(cli.threads)?;
            pool(threads(&cfg));
            let r = commands::eval(&cfg)?;
            let m = r.metrics;
            println!("split\t{}\tties\t{}\tfilter\t{}", r.split, r.tie_policy, r.filter);
            for (name, d) in [("overall", m.overall), ("right", m.right), ("left", m.left)] {
                println!(
                    "{name}\tqueries {}\tmrr {:.6}\thits@1 {:.6}\thits@3 {:.6}\thits@10 {:.6}",
                    d.queries, d.mrr, d.hits_at_1, d.hits_at_3, d.hits_at_10
                );
            }
        }
        Command::Grid(o) => {
            let cfg = o.run_config(cli.threads)?;
            pool(threads(&cfg));
            let g = commands::grid(&cfg)?;
            let failed = g.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "configurations\t{}\tcomputed\t{}\tresumed\t{}\tfailed\t{failed}",
                g.rows.len(),
                g.computed,
                g.resumed
            );
            if let Some(best) = g.rows.first().filter(|r| r.error.is_none()) {
                println!("best\t{}\tvalid_mrr\t{:.6}", best.id, best.valid_mrr().unwrap_or(0.0));
            }
        }
        Command::PlotNorms(o) => {
            let cfg = o.run_config(cli.threads)?;
            let csv = commands::plot_norms(&cfg)?;
            if cfg.output.is_none() {
                print!("{csv}");
            }
        }
        Command::Inspect { path } => print!("{}", commands::inspect(path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
