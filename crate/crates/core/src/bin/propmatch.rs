use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use propmatch::genlab::{self, ArrivalOrder, GeneratorConfig, QuotaRule};
use propmatch::harness::{self, ExperimentConfig};
use propmatch::instance::{load_instance, save_instance};
use propmatch::online::{self, Evaluator, LearnConfig, LearnMode, TailPolicy};
use propmatch::rng::{self, stream};
use propmatch::{optimum, weights, Instance};

#[derive(Parser)]
#[command(name = "propmatch", version, about = "Proportional-weight online matching")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact fractional optimum, optionally with a vertex-cut certificate.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        cut: bool,
    },
    /// Discretized proportional weights reaching (1-epsilon) of the optimum.
    Weights {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = weights::DEFAULT_MAX_T_DOUBLINGS)]
        max_t_doublings: u32,
    },
    /// One online run, printed as a JSON line.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = OrderArg::Random)]
        order: OrderArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        /// Weight file for pw/ipw; not needed with --learn-sigma.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Learn weights from this fraction of the stream first.
        #[arg(long)]
        learn_sigma: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Replay)]
        mode: ModeArg,
    },
    /// Instance generation and ingestion.
    Gen {
        #[command(subcommand)]
        what: GenCmd,
    },
    /// Run an experiment config and write CSV and SVG reports.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Subcommand)]
enum GenCmd {
    /// One synthetic instance with quota capacities.
    Synthetic {
        /// Generator config JSON; defaults to the desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long, value_enum)]
        quota: Option<QuotaArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// A drifting day family, one instance file per day.
    Family {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        quota: Option<QuotaArg>,
        #[arg(long, default_value_t = 10)]
        days: usize,
        #[arg(long, default_value_t = 0.5)]
        drift: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-day instances from tab-separated advertising records.
    Ingest {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 20)]
        top_k: usize,
        #[arg(long, value_enum, default_value_t = QuotaArg::Maxmin)]
        quota: QuotaArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Random,
    CiDesc,
    CiAsc,
    CaDesc,
    CaAsc,
}

impl From<OrderArg> for ArrivalOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Random => ArrivalOrder::Random,
            OrderArg::CiDesc => ArrivalOrder::CiDesc,
            OrderArg::CiAsc => ArrivalOrder::CiAsc,
            OrderArg::CaDesc => ArrivalOrder::CaDesc,
            OrderArg::CaAsc => ArrivalOrder::CaAsc,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum AlgoArg {
    Pw,
    Ipw,
    Waterfill,
    Ranking,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Replay,
    Discard,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuotaArg {
    Random,
    Maxmin,
    LeastDegree,
}

impl From<QuotaArg> for QuotaRule {
    fn from(q: QuotaArg) -> Self {
        match q {
            QuotaArg::Random => QuotaRule::Random,
            QuotaArg::Maxmin => QuotaRule::Maxmin,
            QuotaArg::LeastDegree => QuotaRule::LeastDegree,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    FullScale,
    RandomOrder,
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn generator(config: Option<&Path>, quota: Option<QuotaArg>) -> anyhow::Result<GeneratorConfig> {
    let mut cfg = match config {
        Some(p) => GeneratorConfig::load(p)?,
        None => GeneratorConfig::desk(),
    };
    if let Some(q) = quota {
        cfg.quota = q.into();
    }
    Ok(cfg)
}

fn write_days<'a>(dir: &Path, days: impl Iterator<Item = (String, &'a Instance)>) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, inst) in days {
        let path = dir.join(format!("{name}.json"));
        save_instance(inst, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Solve { instance, cut } => {
            let inst = load_instance(&instance)?;
            if cut {
                let cert = optimum::min_vertex_cut(&inst);
                print_json(&serde_json::json!({ "opt": optimum::opt_value(&inst), "cut": cert }))?;
            } else {
                print_json(&serde_json::json!({ "opt": optimum::opt_value(&inst) }))?;
            }
        }
        Cmd::Weights {
            instance,
            epsilon,
            out,
            max_t_doublings,
        } => {
            let inst = load_instance(&instance)?;
            let sol = weights::solve_weights(&inst, epsilon, max_t_doublings)?;
            weights::save_weights(&sol.weights, &inst, &out)?;
            print_json(&serde_json::json!({
                "value": sol.value,
                "opt": sol.opt,
                "T": sol.t,
                "updates": sol.updates,
            }))?;
        }
        Cmd::Simulate {
            instance,
            order,
            seed,
            algo,
            weights: weight_file,
            learn_sigma,
            epsilon,
            mode,
        } => {
            let inst = load_instance(&instance)?;
            let stream = genlab::gen_arrival(&inst, order.into(), seed);
            let ev = Evaluator::new(&inst);
            let result = if let Some(sigma) = learn_sigma {
                let tail = match algo {
                    AlgoArg::Pw => TailPolicy::Pw,
                    AlgoArg::Ipw => TailPolicy::Ipw,
                    _ => bail!("--learn-sigma needs --algo pw or ipw"),
                };
                let mode = match mode {
                    ModeArg::Replay => LearnMode::ReplayWhole,
                    ModeArg::Discard => LearnMode::DiscardSample,
                };
                ev.learn_then_apply(&stream, &LearnConfig::new(sigma, epsilon, mode, tail))?
                    .result
            } else {
                match algo {
                    AlgoArg::Pw | AlgoArg::Ipw => {
                        let path = weight_file.context("--weights is required for pw/ipw")?;
                        let w = weights::load_weights(&inst, &path)?;
                        if algo == AlgoArg::Pw {
                            ev.run_pw(&stream, &w)?
                        } else {
                            ev.run_ipw(&stream, &w)?
                        }
                    }
                    AlgoArg::Waterfill => ev.run_waterfill(&stream)?,
                    AlgoArg::Ranking => {
                        let perm = online::random_priority(
                            inst.n(),
                            &mut rng::substream(seed, &[stream::RANKING]),
                        );
                        ev.run_ranking(&stream, &perm)?
                    }
                }
            };
            print_json(&result)?;
        }
        Cmd::Gen { what } => match what {
            GenCmd::Synthetic {
                config,
                preset,
                quota,
                seed,
                out,
            } => {
                let mut cfg = match preset {
                    Some(PresetArg::Desk) => GeneratorConfig::desk(),
                    Some(PresetArg::FullScale) => GeneratorConfig::full_scale(),
                    Some(PresetArg::RandomOrder) => GeneratorConfig::random_order(),
                    None => generator(config.as_deref(), None)?,
                };
                if let Some(q) = quota {
                    cfg.quota = q.into();
                }
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let inst = genlab::apply_quota(&genlab::gen_synthetic(&cfg)?, cfg.quota, cfg.seed)?;
                save_instance(&inst, &out)?;
                print_json(&serde_json::json!({
                    "advertisers": inst.n(),
                    "types": inst.num_types(),
                    "edges": inst.num_edges(),
                    "supply": inst.total_supply(),
                }))?;
            }
            GenCmd::Family {
                config,
                quota,
                days,
                drift,
                out_dir,
            } => {
                let cfg = generator(config.as_deref(), quota)?;
                let fam = genlab::gen_day_family(&cfg, days, drift)?;
                write_days(
                    &out_dir,
                    fam.days.iter().enumerate().map(|(d, i)| (format!("day_{d:03}"), i)),
                )?;
            }
            GenCmd::Ingest {
                records,
                top_k,
                quota,
                seed,
                out_dir,
            } => {
                let recs = genlab::load_records(&records)?;
                let days = genlab::ingest_records(&recs, top_k)?;
                let quota: QuotaRule = quota.into();
                let quoted = days
                    .iter()
                    .map(|(d, inst)| Ok((format!("day_{d:03}"), genlab::apply_quota(inst, quota, seed)?)))
                    .collect::<propmatch::Result<Vec<_>>>()?;
                write_days(&out_dir, quoted.iter().map(|(n, i)| (n.clone(), i)))?;
            }
        },
        Cmd::Experiment {
            config,
            out,
            svg,
            jobs,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = harness::run_experiment(&cfg, jobs)?;
            harness::report(&rows, &out, &svg)?;
            let failed = rows.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                eprintln!("{failed} of {} rows failed", rows.len());
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
