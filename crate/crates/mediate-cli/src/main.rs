//! Batch front end: estimate effects on a dataset, run balance diagnostics,
//! or run simulation experiments, emitting machine-readable reports.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 estimation/data error,
//! 4 I/O error.

mod config;
mod reports;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use mediate::balance::{balance_table, standard_comparisons, NamedSample};
use mediate::data::{ingest_csv, Dataset, IngestReport, SampleView};
use mediate::estimators::{run_menu, run_menu_full, SharedFits};
use mediate::inference::{bootstrap_ci, IntervalReport};
use mediate::rng::derive_seed;
use mediate::simlab::{self, presets, ExperimentConfig, ExperimentTable};
use mediate::weights;

use config::RunConfig;
use reports::Provenance;

const TAG_BOOT_SEED: u64 = 0xB0075EED;

#[derive(Parser)]
#[command(
    name = "mediate",
    version,
    about = "Natural direct/indirect effect estimation"
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the worker thread count (0 = library default). Outputs are
    /// identical regardless of this setting.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimator menu on a dataset.
    Estimate,
    /// Weight estimation and balance diagnostics only.
    Balance,
    /// Simulation experiments against the Monte-Carlo truth oracle.
    Simulate,
}

enum Failure {
    Config(Vec<String>),
    Estimation(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Estimation(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn print(&self) {
        match self {
            Failure::Config(errors) => {
                eprintln!("configuration invalid ({} problem(s)):", errors.len());
                for e in errors {
                    eprintln!("  - {e}");
                }
            }
            Failure::Estimation(e) => eprintln!("estimation error: {e}"),
            Failure::Io(e) => eprintln!("I/O error: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            failure.print();
            ExitCode::from(failure.exit_code())
        }
    }
}

fn classify(e: &mediate::Error) -> Failure {
    match e {
        mediate::Error::Io(msg) => Failure::Io(msg.clone()),
        mediate::Error::InvalidConfig(msg) => Failure::Config(vec![msg.clone()]),
        other => Failure::Estimation(other.to_string()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| Failure::Config(vec!["--config <file> is required".into()]))?;
    let raw = std::fs::read(&config_path)
        .map_err(|e| Failure::Io(format!("{}: {e}", config_path.display())))?;
    let mut run_config: RunConfig = toml::from_str(
        std::str::from_utf8(&raw)
            .map_err(|e| Failure::Config(vec![format!("config is not UTF-8: {e}")]))?,
    )
    .map_err(|e| Failure::Config(vec![e.to_string()]))?;

    if let Some(seed) = cli.seed {
        run_config.seed = seed;
    }
    if let Some(out) = cli.out {
        run_config.output_dir = out;
    }
    let workers = cli.workers.unwrap_or(run_config.workers);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Config(vec![format!("worker pool: {e}")]))?;
    }

    let config_hash = {
        let mut hasher = Sha256::new();
        hasher.update(&raw);
        format!("{:x}", hasher.finalize())
    };
    let prov = Provenance {
        config_hash,
        seed: run_config.seed,
        version: env!("CARGO_PKG_VERSION"),
    };

    // Validation is total before compute: no partial outputs on an invalid
    // configuration.
    let need_data = matches!(cli.command, Command::Estimate | Command::Balance);
    let need_sim = matches!(cli.command, Command::Simulate);
    let errors = config::validate(&run_config, need_data, need_sim);
    if !errors.is_empty() {
        return Err(Failure::Config(errors));
    }

    match cli.command {
        Command::Estimate => cmd_estimate(&run_config, &prov),
        Command::Balance => cmd_balance(&run_config, &prov),
        Command::Simulate => cmd_simulate(&run_config, &prov),
    }
}

fn load_data(run_config: &RunConfig) -> Result<(Dataset, IngestReport), Failure> {
    let data = run_config.data.as_ref().expect("validated");
    let schema = data.schema();
    ingest_csv(&data.path, &schema).map_err(|e| classify(&e))
}

fn cmd_estimate(run_config: &RunConfig, prov: &Provenance) -> Result<(), Failure> {
    let (ds, ingest) = load_data(run_config)?;
    let menu = config::menu_config(run_config).map_err(|e| Failure::Config(vec![e]))?;

    let (outcomes, fits) = run_menu_full(&menu, &ds, None).map_err(|e| classify(&e))?;

    let intervals: Option<IntervalReport> = if run_config.bootstrap.enabled {
        let bcfg = run_config
            .bootstrap
            .to_config(derive_seed(run_config.seed, &[TAG_BOOT_SEED]));
        let labels: Vec<String> = outcomes
            .iter()
            .flat_map(|o| {
                ["nde0", "nie1", "te"]
                    .iter()
                    .map(move |e| format!("{}|{e}", o.id))
            })
            .collect();
        let point: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| match &o.result {
                Ok(r) => vec![r.nde0, r.nie1, r.te],
                Err(_) => vec![f64::NAN; 3],
            })
            .collect();
        let report = bootstrap_ci(ds.n(), &bcfg, &labels, &point, |w, tag| {
            let mut m = menu.clone();
            m.seed = derive_seed(run_config.seed, &[TAG_BOOT_SEED, tag]);
            let outs = run_menu(&m, &ds, Some(w))?;
            Ok(outs
                .iter()
                .flat_map(|o| match &o.result {
                    Ok(r) => vec![Some(r.nde0), Some(r.nie1), Some(r.te)],
                    Err(_) => vec![None, None, None],
                })
                .collect())
        })
        .map_err(|e| classify(&e))?;
        Some(report)
    } else {
        None
    };

    let weight_diagnostics = fits.weight_diagnostics();
    let model_summaries = fits.model_summaries();
    let report = reports::RunReport {
        config_hash: &prov.config_hash,
        seed: prov.seed,
        version: prov.version,
        ingest: &ingest,
        estimates: reports::estimate_json(&outcomes),
        intervals: intervals.as_ref(),
        weight_diagnostics: &weight_diagnostics,
        model_summaries: &model_summaries,
        notes: &fits.notes,
    };

    let out = &run_config.output_dir;
    reports::write_file(
        &out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("serializable"),
    )
    .map_err(Failure::Io)?;
    reports::write_file(
        &out.join("estimates.csv"),
        &reports::estimates_csv(&outcomes, intervals.as_ref(), prov),
    )
    .map_err(Failure::Io)?;
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    println!(
        "estimate: wrote {} and {} ({} estimators, {failed} failed)",
        out.join("report.json").display(),
        out.join("estimates.csv").display(),
        outcomes.len()
    );
    Ok(())
}

fn cmd_balance(run_config: &RunConfig, prov: &Provenance) -> Result<(), Failure> {
    let (ds, _ingest) = load_data(run_config)?;
    let menu = config::menu_config(run_config).map_err(|e| Failure::Config(vec![e]))?;

    // Weight estimation via the shared-fit machinery (propensity, omega_x,
    // omega_sx as configured).
    let fits = SharedFits::compute(&menu, &ds, None).map_err(|e| classify(&e))?;
    let w1 = shared_weight(&fits.w1, "w1")?;
    let w0 = shared_weight(&fits.w0, "w0")?;
    let wx = shared_weight(&fits.wx, "wx")?;

    let samples = vec![
        NamedSample::new("full", SampleView::full(&ds)),
        NamedSample::new("p1", w1.stabilized().pseudo_sample(&ds)),
        NamedSample::new("p0", w0.stabilized().pseudo_sample(&ds)),
        NamedSample::new("px", wx.stabilized().pseudo_sample(&ds)),
    ];
    let comparisons = standard_comparisons(
        &ds.roles().covariates,
        &ds.roles().mediators,
        &["p1", "p0", "px"],
    );
    let report = balance_table(&ds, &samples, &comparisons).map_err(|e| classify(&e))?;

    let out = &run_config.output_dir;
    reports::write_file(
        &out.join("balance.csv"),
        &reports::balance_csv(&report, prov),
    )
    .map_err(Failure::Io)?;

    #[derive(serde::Serialize)]
    struct WeightsReport<'a> {
        config_hash: &'a str,
        seed: u64,
        version: &'a str,
        weight_diagnostics: Vec<weights::WeightDiagnostics>,
        quantiles: &'a [mediate::balance::QuantileRow],
    }
    let wr = WeightsReport {
        config_hash: &prov.config_hash,
        seed: prov.seed,
        version: prov.version,
        weight_diagnostics: fits.weight_diagnostics(),
        quantiles: &report.quantiles,
    };
    reports::write_file(
        &out.join("weights.json"),
        &serde_json::to_string_pretty(&wr).expect("serializable"),
    )
    .map_err(Failure::Io)?;
    println!(
        "balance: wrote {} and {} (max |std diff| = {:.4})",
        out.join("balance.csv").display(),
        out.join("weights.json").display(),
        report.max_abs_std_diff()
    );
    Ok(())
}

fn shared_weight<'f>(
    slot: &'f Option<mediate::Result<weights::WeightSet>>,
    what: &str,
) -> Result<&'f weights::WeightSet, Failure> {
    match slot {
        Some(Ok(w)) => Ok(w),
        Some(Err(e)) => Err(classify(e)),
        None => Err(Failure::Config(vec![format!(
            "balance needs the {what} weights"
        )])),
    }
}

fn cmd_simulate(run_config: &RunConfig, prov: &Provenance) -> Result<(), Failure> {
    let sim = run_config.simulate.as_ref().expect("validated");
    let scenarios = match (&sim.preset, &sim.scenario) {
        (Some(p), None) => match p.as_str() {
            "robustness" => presets::robustness_scenarios(),
            "discrete" => presets::discrete_scenarios(),
            "desk-all-correct" => vec![simlab::ScenarioSpec {
                name: "desk-all-correct".into(),
                dgp: presets::dgp_desk_binary(),
                correct: presets::formulas_desk_binary(),
                misspecified: presets::formulas_desk_binary(),
                flags: simlab::ComponentFlags::all_correct(),
            }],
            other => return Err(Failure::Config(vec![format!("unknown preset `{other}`")])),
        },
        (None, Some(sc)) => vec![sc.clone()],
        _ => unreachable!("validated"),
    };

    let selection = config::selection_of(run_config).map_err(|e| Failure::Config(vec![e]))?;
    let cfg = ExperimentConfig {
        n: sim.n,
        reps: sim.reps,
        seed: run_config.seed,
        truth_draws: sim.truth_draws,
        selection,
        weights_method: run_config.weights.method,
        nsim: run_config.options.nsim,
        msim_exact: false,
        cadj_joint: run_config.options.cadj_joint,
        bootstrap: if sim.coverage {
            Some(
                run_config
                    .bootstrap
                    .to_config(derive_seed(run_config.seed, &[TAG_BOOT_SEED])),
            )
        } else {
            None
        },
    };

    let mut tables: Vec<ExperimentTable> = Vec::with_capacity(scenarios.len());
    for scenario in &scenarios {
        let table = simlab::run_experiment(scenario, &cfg).map_err(|e| classify(&e))?;
        println!(
            "simulate: scenario `{}` done ({} rows)",
            scenario.name,
            table.rows.len()
        );
        tables.push(table);
    }

    let out = &run_config.output_dir;
    reports::write_file(
        &out.join("experiment.csv"),
        &reports::experiment_csv(&tables, sim.coverage, prov),
    )
    .map_err(Failure::Io)?;
    println!("simulate: wrote {}", out.join("experiment.csv").display());
    Ok(())
}
