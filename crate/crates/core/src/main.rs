use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use majlab::harness::commands::{
    cmd_bias, cmd_control, cmd_gram, cmd_linf, cmd_mse_bound, cmd_ratio_decay, cmd_train, cmd_variance, cmd_verify,
    parse_range, CommandError, CommandOutput,
};
use majlab::harness::config::parse_config_text;
use majlab::harness::io::atomic_write;
use majlab::harness::{OutputFormat, RunConfig};
use majlab::model::write_checkpoint;
use majlab::TransformerParams;

#[derive(Parser)]
#[command(name = "majlab", version, about = "Experiments on learning k-majority with approximate gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Output {
    /// Artifact path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Size of the worker pool.
    #[arg(long)]
    workers: Option<usize>,
}

/// Run settings. Flags override `--config`, which overrides the defaults and `MAJLAB_SEED`.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Flat `key=value` file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// A number, `inf`, or `auto`.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `transformer` or `linear`.
    #[arg(long)]
    model: Option<String>,
    /// `computed_tokens` or `raw_tokens`.
    #[arg(long)]
    recursion: Option<String>,
    /// `neg_cos` or `quartic`.
    #[arg(long)]
    link: Option<String>,
    /// `exhaustive` or `sampled:N`.
    #[arg(long)]
    family: Option<String>,
    /// `hide_when_close` or `paper_literal`.
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    sup_draws: Option<String>,
    #[arg(long)]
    slack_c0: Option<String>,
    #[arg(long)]
    slack_c1: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    c2: Option<String>,
    #[arg(long)]
    c3: Option<String>,
    #[arg(long)]
    c4: Option<String>,
    /// Record wall time in the report (makes reports differ run to run).
    #[arg(long)]
    wall_time: bool,
    #[command(flatten)]
    output: Output,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CommandError> {
        let mut cfg = RunConfig::from_env()?;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CommandError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let pairs = parse_config_text(&text)?;
            cfg.apply_all(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        }
        let flags = [
            ("d", &self.d),
            ("k", &self.k),
            ("n", &self.n),
            ("T", &self.t),
            ("lr", &self.lr),
            ("epsilon", &self.epsilon),
            ("seed", &self.seed),
            ("model", &self.model),
            ("recursion", &self.recursion),
            ("link", &self.link),
            ("family", &self.family),
            ("direction", &self.direction),
            ("sup_draws", &self.sup_draws),
            ("slack_c0", &self.slack_c0),
            ("slack_c1", &self.slack_c1),
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("c3", &self.c3),
            ("c4", &self.c4),
            ("format", &self.output.format),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.output.out {
            cfg.out = Some(out.clone());
        }
        if let Some(w) = self.output.workers {
            cfg.workers = Some(w);
        }
        cfg.record_wall_time |= self.wall_time;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the closed-form support count against enumeration and the polynomial identity.
    Verify {
        #[arg(long, default_value_t = 14)]
        d_max: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep |A/B - 1| along k = 2⌊d/4⌋, m = ⌊d/2⌋.
    RatioDecay {
        /// Inclusive range `lo:hi`.
        #[arg(long = "d", default_value = "8:48")]
        range: String,
        #[command(flatten)]
        output: Output,
    },
    /// Exact bias E_S[MAJ(x,S)] for each number of negative coordinates.
    Bias {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        k: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Gradient variance across the support family at random parameters.
    Variance {
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Gram matrix, its top eigenvalue and the partial-frame inequality.
    Gram {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train under the approximate gradient oracle.
    Train {
        /// Write the final transformer weights here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train under the oracle and compare the L∞ error with Pr[Q].
    Linf {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate the MSE lower bound without training.
    MseBound {
        #[arg(long)]
        sup_sq: f64,
        #[arg(long, default_value_t = 0.0)]
        exp_term: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train with true gradients.
    Control {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn format_of(output: &Output) -> Result<OutputFormat, CommandError> {
    match output.format.as_deref() {
        None => Ok(OutputFormat::Csv),
        Some(s) => s.parse().map_err(CommandError::Usage),
    }
}

fn init_pool(workers: Option<usize>) -> Result<(), CommandError> {
    if let Some(w) = workers {
        if w == 0 {
            return Err(CommandError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CommandError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

/// `run.json` plus `trace.csv` gives `run.trace.csv`.
fn companion_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

enum Failure {
    Usage(String),
    Io(String),
}

fn emit(output: &CommandOutput, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            for (suffix, contents) in &output.companions {
                let p = companion_path(path, suffix);
                atomic_write(&p, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display())))?;
            }
            atomic_write(path, &output.artifact).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{}", output.artifact);
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<(CommandOutput, Option<PathBuf>), Failure> {
    let usage = |e: CommandError| {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    };
    let simple = |output: &Output| -> Result<OutputFormat, Failure> {
        init_pool(output.workers).map_err(usage)?;
        format_of(output).map_err(usage)
    };
    let run_cfg = |run: &RunArgs| -> Result<RunConfig, Failure> {
        let cfg = run.resolve().map_err(usage)?;
        init_pool(cfg.workers).map_err(usage)?;
        Ok(cfg)
    };
    Ok(match command {
        Command::Verify { d_max, output } => {
            let f = simple(&output)?;
            (cmd_verify(d_max, f).map_err(usage)?, output.out)
        }
        Command::RatioDecay { range, output } => {
            let f = simple(&output)?;
            let (lo, hi) = parse_range(&range).map_err(usage)?;
            (cmd_ratio_decay(lo, hi, f).map_err(usage)?, output.out)
        }
        Command::Bias { d, k, output } => {
            let f = simple(&output)?;
            (cmd_bias(d, k, f).map_err(usage)?, output.out)
        }
        Command::Variance { draws, run } => {
            let cfg = run_cfg(&run)?;
            (cmd_variance(&cfg, draws).map_err(usage)?, cfg.out)
        }
        Command::Gram { trials, run } => {
            let cfg = run_cfg(&run)?;
            (cmd_gram(&cfg, trials).map_err(usage)?, cfg.out)
        }
        Command::Train { checkpoint, run } => {
            let cfg = run_cfg(&run)?;
            let (output, outcome) = cmd_train(&cfg).map_err(usage)?;
            if let Some(path) = checkpoint {
                let mc = outcome
                    .model_config
                    .ok_or_else(|| Failure::Usage("--checkpoint needs the transformer model".into()))?;
                let params = TransformerParams::from_flat(&mc, &outcome.final_params)
                    .map_err(|e| Failure::Io(e.to_string()))?;
                atomic_write(&path, &write_checkpoint(&mc, &params))
                    .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
            }
            (output, cfg.out)
        }
        Command::Linf { run } => {
            let cfg = run_cfg(&run)?;
            (cmd_linf(&cfg).map_err(usage)?, cfg.out)
        }
        Command::MseBound { sup_sq, exp_term, run } => {
            let cfg = run_cfg(&run)?;
            (cmd_mse_bound(&cfg, sup_sq, exp_term).map_err(usage)?, cfg.out)
        }
        Command::Control { run } => {
            let cfg = run_cfg(&run)?;
            (cmd_control(&cfg).map_err(usage)?.0, cfg.out)
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = dispatch(cli.command).and_then(|(output, out)| emit(&output, out.as_deref()).map(|_| output));
    match result {
        Ok(output) if output.violations.is_empty() => ExitCode::SUCCESS,
        Ok(output) => {
            for v in &output.violations {
                eprintln!("violation: {v}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg) | Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
