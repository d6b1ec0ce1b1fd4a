use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use gdf_cli::{
    analysis_report, analyze_logs, generate_logs, load_cache, load_scenario, parse_levels, simulate, sla_report,
    write_run, ControllerKind, SLA_HEADER,
};
use gdf_core::offline::OfflineConfig;
use gdf_core::simnet::Preset;
use gdf_core::SlaKind;

#[derive(Parser)]
#[command(name = "gdf", version, about = "Energy-aware bulk transfer tuning: analysis, simulation and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a solution cache from transfer logs.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long = "sla-levels", default_value_t = 10)]
        sla_levels: usize,
        /// Transfers the analysis cost is spread over.
        #[arg(long, default_value_t = 0)]
        amortization: u64,
    },
    /// Simulate a scenario under one controller.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        controller: String,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link utilization and Jain index of a contention scenario.
    Fairness {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        controller: String,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep SLA partition levels and report violations.
    SlaReport {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        kind: String,
        /// Inclusive range such as `0..9`.
        #[arg(long)]
        levels: String,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "no-opportunistic")]
        no_opportunistic: bool,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic historical logs for a preset.
    GenLogs {
        #[arg(long, default_value = "xsede")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        ticks: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn cache_arg(path: &Option<PathBuf>) -> Result<Option<Arc<gdf_core::offline::SolutionCache>>> {
    path.as_deref().map(|p| load_cache(p).map(Arc::new)).transpose()
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { logs, out, clusters, sla_levels, amortization } => {
            let config = OfflineConfig {
                max_clusters: clusters,
                levels: sla_levels,
                amortization_count: amortization,
                ..OfflineConfig::default()
            };
            let analysis = analyze_logs(&logs, &config)?;
            fs::write(&out, analysis.cache.to_text()).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", analysis_report(&analysis));
        }
        Command::Run { scenario, controller, cache, seed, out } => {
            let kind: ControllerKind = controller.parse()?;
            let sc = load_scenario(&scenario, seed)?;
            let report = simulate(&sc, kind, cache_arg(&cache)?)?;
            write_run(&out, &report)?;
            print!("{}", report.summary_csv());
        }
        Command::Fairness { scenario, controller, cache, seed } => {
            let kind: ControllerKind = controller.parse()?;
            let sc = load_scenario(&scenario, seed)?;
            if sc.contenders < 2 {
                anyhow::bail!("fairness needs a scenario with at least 2 contenders");
            }
            let report = simulate(&sc, kind, cache_arg(&cache)?)?;
            println!("controller,utilization,jain");
            println!("{},{},{}", controller, report.utilization, report.jain);
        }
        Command::SlaReport { scenario, kind, levels, cache, seed, no_opportunistic, out } => {
            let kind: SlaKind = kind.parse().map_err(|e| anyhow::anyhow!("--kind: {e}"))?;
            let sc = load_scenario(&scenario, seed)?;
            let rows = sla_report(&sc, kind, parse_levels(&levels)?, !no_opportunistic, Arc::new(load_cache(&cache)?))?;
            let mut csv = format!("{SLA_HEADER}\n");
            for r in &rows {
                csv.push_str(&r.csv());
                csv.push('\n');
            }
            match out {
                Some(p) => fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::GenLogs { preset, seed, ticks, out } => {
            let preset: Preset = preset.parse()?;
            let batch = generate_logs(preset, seed, ticks)?;
            fs::write(&out, batch.export()).with_context(|| format!("writing {}", out.display()))?;
            println!("records {} transfers {}", batch.len(), batch.transfers().len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
