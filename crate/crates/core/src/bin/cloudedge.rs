use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cloudedge::allocator::{self, AllocInstance};
use cloudedge::harness::config::{
    load_config, ControllerKind, ExperimentConfig, Scenario, OUTPUT_DIR_ENV,
};
use cloudedge::harness::experiment::{run_experiment, write_outputs, SeedStatus};
use cloudedge::harness::metrics::{compare, emit_plot_data, read_jsonl, MetricsRecord, Phase};

#[derive(Parser)]
#[command(name = "cloudedge", version, about = "Cloud-edge boiler control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Train,
    Eval,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Train => Phase::Train,
            PhaseArg::Eval => Phase::Eval,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write per-seed metrics.
    Run {
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Output directory (falls back to the config, then $CLOUDEDGE_OUT_DIR, then ./results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved config as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Compare two metrics files (a relative to b).
    Compare {
        metrics_a: PathBuf,
        metrics_b: PathBuf,
        /// Only use records from this phase.
        #[arg(long, value_enum)]
        phase: Option<PhaseArg>,
        /// Also write the comparison as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Solve a standalone allocation instance given as JSON.
    Alloc {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Write episode,reward,reward_ma50,failures_cum CSV from a metrics file.
    PlotData {
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        phase: Option<PhaseArg>,
    },
}

fn output_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn read_filtered(path: &Path, phase: Option<PhaseArg>) -> Result<Vec<MetricsRecord>> {
    let mut recs = read_jsonl(path)?;
    if let Some(p) = phase {
        let p = Phase::from(p);
        recs.retain(|r| r.phase == p);
    }
    if recs.is_empty() {
        bail!("{} has no matching records", path.display());
    }
    Ok(recs)
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run {
            config,
            scenario,
            controller,
            seeds,
            episodes,
            out,
            print_config,
        } => {
            let mut cfg = match &config {
                Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = scenario {
                cfg.scenario = s;
            }
            if let Some(c) = controller {
                cfg.controller = c;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            cfg.validate()?;
            if print_config {
                print!("{}", cfg.to_toml_string());
                return Ok(ExitCode::SUCCESS);
            }
            let dir = output_dir(out, &cfg);
            let outcomes = run_experiment(&cfg)?;
            let paths = write_outputs(&cfg, &outcomes, &dir)?;
            let mut failed = 0;
            for o in &outcomes {
                match &o.status {
                    SeedStatus::Completed => {
                        let eval: Vec<_> = o.records_in(Phase::Eval).collect();
                        let shown = if eval.is_empty() { o.records.iter().collect() } else { eval };
                        let n = shown.len().max(1) as f64;
                        let reward = shown.iter().map(|r| r.cumulative_reward).sum::<f64>() / n;
                        let failures: u32 = shown.iter().map(|r| r.failures).sum();
                        println!(
                            "seed {}: {} episodes, mean reward {:.2}, failures {}",
                            o.seed,
                            o.records.len(),
                            reward,
                            failures
                        );
                    }
                    SeedStatus::Failed(reason) => {
                        failed += 1;
                        eprintln!("seed {} failed after {} episodes: {reason}", o.seed, o.records.len());
                    }
                }
            }
            for p in &paths {
                println!("wrote {}", p.display());
            }
            if failed > 0 {
                eprintln!("{failed} of {} seeds failed", outcomes.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            metrics_a,
            metrics_b,
            phase,
            json,
        } => {
            let a = read_filtered(&metrics_a, phase)?;
            let b = read_filtered(&metrics_b, phase)?;
            let report = compare(&a, &b)?;
            print!("{}", report.to_table());
            if let Some(p) = json {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Alloc { instance } => {
            let text = std::fs::read_to_string(&instance)
                .with_context(|| format!("reading {}", instance.display()))?;
            let inst: AllocInstance = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", instance.display()))?;
            let plan = inst.solve()?;
            let violations = allocator::validate(&plan, &inst.modules, &inst.resources);
            println!("{}", serde_json::to_string_pretty(&plan)?);
            for v in &violations {
                eprintln!("violation: {v}");
            }
            Ok(if violations.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::PlotData {
            metrics,
            out,
            phase,
        } => {
            let recs = read_filtered(&metrics, phase)?;
            emit_plot_data(&recs, &out)?;
            println!("wrote {} rows to {}", recs.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
