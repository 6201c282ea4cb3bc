use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hetcc::allocation::pair_values;
use hetcc_cli::report::{format_table, write_schedule, write_trace};
use hetcc_cli::{
    generate_instance, run_experiment, solve_policy, Comparison, ExperimentConfig, GeneratorSpec,
    InstanceSource, Policy, ScheduleRow, ShiftRule, TraceRow,
};

#[derive(Parser, Debug)]
#[command(
    name = "hetcc",
    version,
    about = "Coded computing schedules for heterogeneous workers"
)]
struct Cli {
    /// Worker threads for solving and simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random instance and write it as JSON.
    Generate {
        #[command(flatten)]
        instance: GeneratorArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute one policy's schedule and its predicted completion times.
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum)]
        policy: Policy,
        #[command(flatten)]
        sca: ScaArgs,
        /// CSV of every assigned (master, worker) pair.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one policy and estimate its completion times by simulation.
    Simulate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum)]
        policy: Policy,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[command(flatten)]
        sca: ScaArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several policies on one instance and tabulate the results.
    Compare {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(
            long,
            value_enum,
            value_delimiter = ',',
            default_value = "uncoded,coded-uniform,greedy-simple,greedy-iterated,sca"
        )]
        policies: Vec<Policy>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[command(flatten)]
        sca: ScaArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-iteration SCA trace, written when `sca` is selected.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run the SCA solver alone and write its per-iteration trace.
    ScaTrace {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        sca: ScaArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct GeneratorArgs {
    #[arg(long, default_value_t = 2)]
    masters: usize,
    #[arg(long, default_value_t = 20)]
    workers: usize,
    /// Lower end of the straggle-rate range, in 1/ms.
    #[arg(long, default_value_t = 1.0)]
    u_lo: f64,
    #[arg(long, default_value_t = 5.0)]
    u_hi: f64,
    /// `reciprocal` (shift = 1/rate) or `constant:<ms per row>`.
    #[arg(long, default_value = "reciprocal")]
    shift: ShiftRule,
    /// Rows each master must recover.
    #[arg(long, default_value_t = 100_000)]
    rows: u64,
    #[arg(long, default_value_t = 1)]
    cols: u64,
}

impl GeneratorArgs {
    fn spec(&self, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            masters: self.masters,
            workers: self.workers,
            u_lo: self.u_lo,
            u_hi: self.u_hi,
            shift: self.shift,
            rows: self.rows,
            cols: self.cols,
            seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct InstanceArgs {
    /// Instance file; when absent a random instance is generated from `--seed`.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Seeds instance generation, greedy exploration and simulation.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl InstanceArgs {
    fn source(&self) -> InstanceSource {
        match &self.instance {
            Some(path) => InstanceSource::File(path.clone()),
            None => InstanceSource::Generated(self.generator.spec(self.seed)),
        }
    }

    fn config(&self, policies: Vec<Policy>, trials: usize, sca: &ScaArgs) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(self.source(), policies, trials, self.seed);
        config.sca.alpha = sca.alpha;
        config.sca.convergence_tol = sca.tol;
        config
    }
}

#[derive(Args, Debug, Clone)]
struct ScaArgs {
    /// SCA step decay.
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    /// SCA stops once the relative change of t falls below this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn report(comparison: &Comparison) -> ExitCode {
    print!("{}", format_table(&comparison.rows()));
    for failure in &comparison.failures {
        eprintln!("{} failed: {}", failure.policy, failure.message);
    }
    if comparison.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Generate {
            instance,
            seed,
            out,
        } => {
            let file = generate_instance(&instance.spec(seed))?;
            file.write(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {}x{} instance (seed {seed}) to {}",
                file.instance.num_masters(),
                file.instance.num_workers(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve {
            instance,
            policy,
            sca,
            out,
        } => {
            let config = instance.config(vec![policy], 1, &sca);
            config.validate()?;
            let file = config.source.load()?;
            let pairs = pair_values(&file.instance)?;
            let (schedule, _) = solve_policy(policy, &file.instance, &pairs, &config)?;
            for (m, t) in schedule.per_master_t.iter().enumerate() {
                println!("master {m}: t_approx {:.2} s", t / 1000.0);
            }
            println!("overall: t_approx {:.2} s", schedule.t_approx / 1000.0);
            if let Some(path) = out {
                write_schedule(&path, &ScheduleRow::from_schedule(&schedule))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            instance,
            policy,
            trials,
            sca,
            out,
        } => {
            let mut config = instance.config(vec![policy], trials, &sca);
            config.out = out;
            let (_, comparison) = run_experiment(&config)?;
            Ok(report(&comparison))
        }
        Command::Compare {
            instance,
            policies,
            trials,
            sca,
            out,
            trace_out,
        } => {
            let mut config = instance.config(policies, trials, &sca);
            config.out = out;
            config.trace_out = trace_out;
            let (_, comparison) = run_experiment(&config)?;
            Ok(report(&comparison))
        }
        Command::ScaTrace { instance, sca, out } => {
            let config = instance.config(vec![Policy::Sca], 1, &sca);
            config.validate()?;
            let file = config.source.load()?;
            let pairs = pair_values(&file.instance)?;
            let (_, outcome) = solve_policy(Policy::Sca, &file.instance, &pairs, &config)?;
            let outcome = outcome.expect("sca policy yields a trace");
            let trace = TraceRow::from_outcome(&outcome);
            for row in &trace {
                println!("{:>5} {:.6} s", row.iteration, row.t_ms / 1000.0);
            }
            println!(
                "stopped: {:?} after {} iterations",
                outcome.stop,
                trace.len() - 1
            );
            if let Some(path) = out {
                write_trace(&path, &trace)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
