use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gscm_core::harness::run::{load_table, CONFIG_COPY};
use gscm_core::harness::{
    default_targets, empirical_stats, run_simulation, validate, ReportFormat, RunConfig, RunOptions, ValidationReport,
};
use gscm_core::lsp::{LspParam, LspTable};
use gscm_core::scenario::{LinkState, Scenario, ScenarioConfig};
use gscm_core::sns::SnsMode;

#[derive(Parser)]
#[command(name = "gscm", version, about = "Geometry-based stochastic channel simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and write an output bundle.
    Run(RunArgs),
    /// Summarize the per-link statistics of a bundle.
    Stats {
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Check a bundle against the distributions it was generated from.
    Validate {
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the active parameter tables with provenance flags.
    Tables {
        #[arg(long)]
        scenario: Option<String>,
        /// Evaluate frequency-dependent terms at this carrier (GHz).
        #[arg(long)]
        fc: Option<f64>,
        /// Replacement LSP table (CSV).
        #[arg(long)]
        lsp_table: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON). Flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scenario: Option<String>,
    /// Carrier frequency, GHz.
    #[arg(long)]
    fc: Option<f64>,
    #[arg(long)]
    drops: Option<usize>,
    /// UTs per drop.
    #[arg(long)]
    uts: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    nf: bool,
    #[arg(long, value_parser = parse_sns)]
    sns: Option<SnsMode>,
    #[arg(long)]
    pol_var: bool,
    #[arg(long)]
    grip: bool,
    #[arg(long)]
    imbalance: bool,
    #[arg(long)]
    variable_clusters: bool,
    #[arg(long)]
    variable_rays: bool,
    /// Validate the bundle after writing; exit status reflects the result.
    #[arg(long)]
    validate: bool,
}

fn parse_sns(s: &str) -> std::result::Result<SnsMode, String> {
    s.parse().map_err(|e: gscm_core::GscmError| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    Ok(s.parse()?)
}

fn build_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(Scenario::UMi, 1, 10, 0),
    };
    if let Some(s) = &a.scenario {
        let sc = parse_scenario(s)?;
        if cfg.scenario_config()?.scenario != sc {
            *cfg.scenario_config_mut()? = ScenarioConfig::defaults(sc);
        }
    }
    if let Some(fc) = a.fc {
        cfg.scenario_config_mut()?.fc_ghz = fc;
    }
    if let Some(v) = a.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.drops {
        cfg.n_drops = v;
    }
    if let Some(v) = a.uts {
        cfg.n_uts = v;
    }
    let f = &mut cfg.features;
    f.nf |= a.nf;
    f.pol_variability |= a.pol_var;
    f.grip |= a.grip;
    f.imbalance |= a.imbalance;
    f.variable_clusters |= a.variable_clusters;
    f.variable_rays |= a.variable_rays;
    if let Some(m) = a.sns {
        f.sns = m;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn bundle_report(bundle: &Path) -> Result<ValidationReport> {
    let cfg = RunConfig::load(&bundle.join(CONFIG_COPY)).with_context(|| format!("{} is not a bundle", bundle.display()))?;
    let table = load_table(&cfg)?;
    let stats = empirical_stats(bundle)?;
    let targets = default_targets(&cfg, &table, &stats)?;
    Ok(validate(&stats, &targets)?)
}

fn emit(report: &ValidationReport, formats: &[ReportFormat]) -> Result<()> {
    for f in formats {
        match f {
            ReportFormat::Table => print!("{}", report.to_table()),
            ReportFormat::Json => println!("{}", serde_json::to_string_pretty(report)?),
        }
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<ExitCode> {
    let cfg = build_config(a)?;
    let s = run_simulation(&cfg, &a.out, &RunOptions { workers: a.workers })?;
    eprintln!(
        "wrote {} links, {} files to {}",
        s.n_links,
        s.manifest.files.len(),
        s.out_dir.display()
    );
    if !a.validate {
        return Ok(ExitCode::SUCCESS);
    }
    let report = bundle_report(&a.out)?;
    emit(&report, &cfg.report_formats)?;
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_stats(bundle: &Path, format: Format) -> Result<()> {
    let st = empirical_stats(bundle)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&st.summary())?),
        Format::Table => {
            let rows = st.summary();
            let w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(4);
            println!("{:<w$}  {:>8}  {:>12}  {:>12}", "statistic", "n", "mean", "std");
            for (name, m) in rows {
                println!("{name:<w$}  {:>8}  {:>12.5}  {:>12.5}", m.n, m.mean, m.std);
            }
            println!("{} links", st.n_links);
        }
    }
    Ok(())
}

fn cmd_tables(scenario: Option<&str>, fc: Option<f64>, path: Option<&Path>) -> Result<()> {
    let table = match path {
        Some(p) => LspTable::from_csv(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
        None => LspTable::shipped(),
    };
    let only = scenario.map(parse_scenario).transpose()?;
    match fc {
        None => {
            println!("scenario,state,param,term,value,provenance");
            for (sc, st, p, term, v, prov) in table.dump() {
                if only.is_none_or(|o| o.name() == sc) {
                    println!("{sc},{st},{p},{term},{v},{prov}");
                }
            }
        }
        Some(fc) => {
            println!("scenario,state,param,mu,sigma,provenance");
            for (sc, st) in table.supported() {
                if only.is_some_and(|o| o != sc) {
                    continue;
                }
                let d = table.lookup(sc, st, fc)?;
                for p in LspParam::ALL {
                    if d.present[p.index()] {
                        let prov = d.provenance[p.index()].map(|x| x.to_string()).unwrap_or_default();
                        println!("{sc},{st},{},{:.4},{:.4},{prov}", p.name(), d.mu_of(p), d.sigma_of(p));
                    }
                }
                if let Some(t) = &d.toa {
                    if st != LinkState::LOS {
                        println!("{sc},{st},DTAU,{:.4},{:.4},", t.mu_lg, t.sigma_lg);
                    }
                }
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Stats { bundle, format } => {
            cmd_stats(&bundle, format)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { bundle, format, report } => {
            let r = bundle_report(&bundle)?;
            let f = match format {
                Format::Table => ReportFormat::Table,
                Format::Json => ReportFormat::Json,
            };
            emit(&r, &[f])?;
            if let Some(p) = report {
                std::fs::write(&p, serde_json::to_vec_pretty(&r)?).with_context(|| p.display().to_string())?;
            }
            Ok(if r.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Tables { scenario, fc, lsp_table } => {
            if fc.is_some_and(|f| !(f > 0.0)) {
                bail!("--fc must be positive");
            }
            cmd_tables(scenario.as_deref(), fc, lsp_table.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
