use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wgbsl_core::rng;
use wgbsl_core::sim::Dataset;
use wgbsl_harness::config::{ExperimentConfig, SCHEMA};
use wgbsl_harness::methods::{Engine, Method};
use wgbsl_harness::output::{fmt_f64, RunDir};
use wgbsl_harness::{experiment, report, run_experiment};

/// Bayesian synthetic likelihood with Wasserstein Gaussianization.
#[derive(Parser)]
#[command(name = "wgbsl", version)]
struct Cli {
    /// Print an annotated configuration template and exit
    #[arg(long)]
    print_schema: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and replicate
    Experiment(Common),
    /// Train (or load) the WG transform and write its diagnostics
    WgTrain(Common),
    /// Run one VB method
    VbRun {
        #[command(flatten)]
        common: Common,
        /// e.g. vb-rbsl-wg
        #[arg(long)]
        method: String,
    },
    /// Run one MCMC method
    McmcRun {
        #[command(flatten)]
        common: Common,
        /// e.g. mcmc-bsl-wg
        #[arg(long)]
        method: String,
    },
    /// Simulate datasets and summaries at a parameter value
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Natural parameters, comma separated; defaults to theta_true
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Rebuild summary.csv from replicates.csv and print the table
    Report {
        /// Run directory
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long, short)]
    config: PathBuf,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated method filter
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Override the replicate count
    #[arg(long)]
    replicates: Option<usize>,
    /// Use a saved WG transform instead of training one
    #[arg(long)]
    transform: Option<PathBuf>,
    /// Worker threads
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.experiment.seed = seed;
        }
        if let Some(out) = &self.out {
            config.experiment.output_dir = out.clone();
        }
        if let Some(methods) = &self.methods {
            config.experiment.methods = methods.clone();
        }
        if let Some(r) = self.replicates {
            config.experiment.replicates = r;
        }
        if let Some(t) = &self.transform {
            config.wg.transform_path = Some(t.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

fn experiment(config: &ExperimentConfig, workers: usize) -> Result<ExitCode> {
    let out = config.experiment.output_dir.clone();
    let outcome = run_experiment(config, &out, workers)?;
    print!("{}", report::format_table(&outcome.summary));
    println!("wrote {} files to {}", outcome.files.len(), out.display());
    for r in outcome.results.iter().filter(|r| r.outcome.is_err()) {
        eprintln!("{} replicate {} failed: {}", r.method, r.replicate, r.outcome.as_ref().unwrap_err());
    }
    Ok(if outcome.failures() > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn single(common: &Common, method: &str, engine: Engine) -> Result<ExitCode> {
    let m: Method = method.parse()?;
    if m.engine != engine {
        bail!("{m} is not a {} method", if engine == Engine::Vb { "VB" } else { "MCMC" });
    }
    let mut config = common.load()?;
    config.experiment.methods = vec![m.label()];
    experiment(&config, common.workers)
}

fn wg_train(common: &Common) -> Result<ExitCode> {
    let mut config = common.load()?;
    let wg_method = config.methods().into_iter().find(|m| m.wg).unwrap_or("vb-bsl-wg".parse()?);
    config.experiment.methods = vec![wg_method.label()];
    let out = config.experiment.output_dir.clone();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(common.workers).build()?;
    let files = pool.install(|| -> Result<_> {
        let setup = experiment::prepare(&config, &[wg_method])?;
        if let Some(wg) = &setup.wg {
            if let (Some(b), Some(a)) = (wg.mardia_before, wg.mardia_after) {
                println!("Mardia skewness {:.4} -> {:.4}", b.skewness, a.skewness);
            }
            if let Some(t) = &wg.training {
                println!("{} flow steps kept of {} iterations", wg.transform.steps.len(), t.iterations);
            }
        }
        report::write_run(&out, &config, &setup, &[], common.workers)
    })?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn simulate(common: &Common, theta: Option<Vec<f64>>, count: usize) -> Result<ExitCode> {
    let config = common.load()?;
    let sim = config.build_observed_simulator()?;
    let theta = theta.unwrap_or_else(|| config.simulator.theta_true.clone());
    sim.unconstrain(&theta).context("parameter outside the model's region")?;
    let mut data_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for i in 0..count {
        let mut rng = rng::stream(config.experiment.seed, &[rng::label_id("simulate"), i as u64]);
        let data = sim.simulate(&theta, &mut rng)?;
        match &data {
            Dataset::Univariate(values) => {
                data_rows.extend(values.iter().enumerate().map(|(j, v)| vec![i.to_string(), j.to_string(), fmt_f64(*v)]))
            }
            Dataset::Toads(obs) => {
                for day in 0..obs.days() {
                    for toad in 0..obs.toads() {
                        data_rows.push(vec![i.to_string(), format!("{day}:{toad}"), fmt_f64(obs.get(day, toad))]);
                    }
                }
            }
        }
        let mut row = vec![i.to_string()];
        match sim.summarize(&data) {
            Ok(s) => row.extend(s.iter().map(|v| fmt_f64(*v))),
            Err(e) => row.push(e.to_string()),
        }
        summary_rows.push(row);
    }
    let mut run = RunDir::create(&config.experiment.output_dir)?;
    run.write_csv("simulated_data.csv", &["dataset", "index", "value"], data_rows)?;
    let mut header = vec!["dataset".to_string()];
    header.extend((1..=sim.summary_dim()).map(|i| format!("s{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write_csv("simulated_summaries.csv", &header, summary_rows)?;
    println!("wrote {count} datasets to {}", config.experiment.output_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no subcommand given; see --help");
        return ExitCode::from(2);
    };
    let result = match &command {
        Command::Experiment(common) => common.load().and_then(|c| experiment(&c, common.workers)),
        Command::WgTrain(common) => wg_train(common),
        Command::VbRun { common, method } => single(common, method, Engine::Vb),
        Command::McmcRun { common, method } => single(common, method, Engine::Mcmc),
        Command::Simulate { common, theta, count } => simulate(common, theta.clone(), *count),
        Command::Report { dir } => report::rebuild_summary(dir).map(|rows| {
            print!("{}", report::format_table(&rows));
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
