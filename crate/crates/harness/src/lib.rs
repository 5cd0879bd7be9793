//! Experiment orchestration for the WG-BSL comparisons: configuration,
//! seeding, WG training corpora, replicated method runs and reports.

pub mod config;
pub mod corpus;
pub mod experiment;
pub mod methods;
pub mod metrics;
pub mod output;
pub mod report;

use std::path::Path;

use anyhow::Result;

pub use config::ExperimentConfig;
pub use methods::Method;

/// Outcome of [`run_experiment`].
pub struct ExperimentOutcome {
    pub results: Vec<experiment::RunResult>,
    pub summary: Vec<experiment::SummaryRow>,
    pub files: Vec<output::FileEntry>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Runs every configured method and replicate on a pool of `workers`
/// threads and writes the run directory.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, workers: usize) -> Result<ExperimentOutcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    pool.install(|| {
        let methods = config.methods();
        let setup = experiment::prepare(config, &methods)?;
        let results = experiment::run_all(config, &setup, &methods);
        let files = report::write_run(out, config, &setup, &results, workers)?;
        let labelled: Vec<_> = results.iter().map(|r| (r.method.label(), r.metrics())).collect();
        let summary = experiment::summarize(&labelled);
        Ok(ExperimentOutcome { results, summary, files })
    })
}
