//! `biassim` command line: dataset generation, the experiment grid,
//! explanation export and re-aggregation of persisted results.

use std::path::PathBuf;
use std::process::ExitCode;

use biassim::mitigation::Mitigation;
use biassim::runner::{
    explain_cell, generate_datasets, report, run_plan, ExperimentPlan, ExplainRequest, InstanceSelector, Pipeline,
    PlanSummary, Scenario,
};
use biassim::ScenarioConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "biassim", version, about = "Bias-injecting loan simulator and fairness audit harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the datasets of the plan without training.
    Generate(PlanArgs),
    /// Run the full plan: train, evaluate, persist and tabulate.
    Run(PlanArgs),
    /// Explain one instance under the baseline and a mitigated model.
    Explain(ExplainArgs),
    /// Re-aggregate the records persisted under an output directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PipelineArg {
    Offline,
    Online,
    Both,
}

impl PipelineArg {
    fn pipelines(self) -> Vec<Pipeline> {
        match self {
            PipelineArg::Offline => vec![Pipeline::Offline],
            PipelineArg::Online => vec![Pipeline::Online],
            PipelineArg::Both => Pipeline::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Simulation config (TOML). Its lbl/rep pair becomes the only scenario
    /// unless --grid is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Full experiment plan (TOML); flags given on the command line override it.
    #[arg(long, conflicts_with = "config")]
    plan: Option<PathBuf>,
    /// Keep the default lbl × rep grid when a --config is given.
    #[arg(long)]
    grid: bool,
    /// Run a single seed instead of the plan's seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Paper-scale streams (10000 steps) instead of the desk-scale default.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pipeline: PipelineArg,
    /// Restrict to variants (repeatable). The baseline `none` is always kept.
    #[arg(long, value_parser = parse_variant)]
    variant: Vec<Mitigation>,
    /// Restrict the grid to this lbl value.
    #[arg(long)]
    lbl: Option<f64>,
    /// Restrict the grid to this rep value.
    #[arg(long)]
    rep: Option<f64>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    lbl: f64,
    #[arg(long)]
    rep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "offline")]
    pipeline: PipelineArg,
    /// Mitigated variant shown next to the baseline.
    #[arg(long, value_parser = parse_variant, default_value = "eg_dp")]
    variant: Mitigation,
    /// Explain this entity's application instead of a random one.
    #[arg(long)]
    instance_id: Option<u64>,
    /// Seed of the random instance draw (defaults to --seed).
    #[arg(long)]
    instance_seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 100)]
    background: usize,
}

fn parse_variant(s: &str) -> Result<Mitigation, String> {
    Mitigation::parse(s).ok_or_else(|| {
        let ids: Vec<&str> = Mitigation::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown variant {s:?}; expected one of {}", ids.join(", "))
    })
}

fn build_plan(a: &PlanArgs) -> biassim::Result<ExperimentPlan> {
    let mut plan = match &a.plan {
        Some(p) => ExperimentPlan::load(p)?,
        None => ExperimentPlan::desk(),
    };
    if a.full {
        plan.n_steps = biassim::runner::FULL_STEPS;
    }
    if let Some(path) = &a.config {
        let cfg = ScenarioConfig::load(path)?;
        if !a.grid {
            plan.lbl_values = vec![cfg.lbl_beta];
            plan.rep_values = vec![cfg.rep_alpha];
        }
        if !a.full {
            plan.n_steps = cfg.n_steps;
        }
        if a.seed.is_none() {
            plan.seeds = vec![cfg.rng_seed];
        }
        plan.base = cfg;
    }
    if let Some(s) = a.seed {
        plan.seeds = vec![s];
    }
    if let Some(l) = a.lbl {
        plan.lbl_values = vec![l];
    }
    if let Some(r) = a.rep {
        plan.rep_values = vec![r];
    }
    if !a.variant.is_empty() {
        let mut v = vec![Mitigation::None];
        v.extend(a.variant.iter().copied().filter(|&m| m != Mitigation::None));
        plan.variants = v;
    }
    plan.pipelines = a.pipeline.pipelines();
    plan.out_dir = Some(a.out.clone());
    Ok(plan)
}

fn print_summary(summary: &PlanSummary) {
    for ps in &summary.pipelines {
        println!("{} pipeline ({} scenarios)", ps.pipeline, ps.scenarios.len());
        println!("  {:<16} {:>10} {:>11} {:>10} {:>11}", "variant", "perf 1st", "perf 2nd", "fair 1st", "fair 2nd");
        for (i, v) in ps.variants.iter().enumerate() {
            println!(
                "  {:<16} {:>10} {:>11} {:>10} {:>11}",
                v.as_str(),
                ps.perf_ranks.first[i],
                ps.perf_ranks.second[i],
                ps.fair_ranks.first[i],
                ps.fair_ranks.second[i]
            );
        }
    }
    println!("{} cells, {} failed", summary.n_cells, summary.n_failed);
}

fn run(cli: Cli) -> biassim::Result<bool> {
    match cli.command {
        Command::Generate(a) => {
            let plan = build_plan(&a)?;
            for (s, seed, fp) in generate_datasets(&plan)? {
                println!("{} seed {seed} {fp}", s.name());
            }
            Ok(true)
        }
        Command::Run(a) => {
            let plan = build_plan(&a)?;
            let outcome = run_plan(&plan)?;
            for r in outcome.records.iter().filter(|r| !r.is_ok()) {
                eprintln!("failed: {} {:?}", r.cell_dir().display(), r.status);
            }
            print_summary(&outcome.summary);
            Ok(outcome.n_failed() == 0)
        }
        Command::Explain(a) => {
            let pipeline = match a.pipeline {
                PipelineArg::Online => Pipeline::Online,
                _ => Pipeline::Offline,
            };
            let mut req = ExplainRequest::new(Scenario { lbl: a.lbl, rep: a.rep }, a.seed, pipeline, a.variant);
            req.instance = match a.instance_id {
                Some(id) => InstanceSelector::Id(id),
                None => InstanceSelector::Random(a.instance_seed.unwrap_or(a.seed)),
            };
            req.top_k = a.top_k;
            req.background_size = a.background;
            let o = explain_cell(&a.out, &req)?;
            println!("explained entity {} (row {})", o.entity_id, o.row_index);
            for m in [&o.baseline, &o.mitigated] {
                println!(
                    "  {:<16} prediction {:.4}  hub concentration {:.4}",
                    m.variant.as_str(),
                    m.explanation.prediction,
                    m.explanation.hub_concentration()
                );
                for f in &m.files {
                    println!("    {}", f.display());
                }
            }
            Ok(true)
        }
        Command::Report { out } => {
            let (_, summary) = report(&out)?;
            print_summary(&summary);
            Ok(summary.n_failed == 0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
