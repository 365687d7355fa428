//! All four methods on dataset A over a few seeds, as a Markdown table.

use dglasso::datagen::Preset;
use dglasso::experiment::commands::{benchmark_markdown, run_benchmark};
use dglasso::experiment::config::{BenchmarkConfig, ExperimentConfig};

fn main() -> dglasso::error::Result<()> {
    let cfg = ExperimentConfig {
        benchmark: BenchmarkConfig {
            datasets: vec![Preset::A],
            seeds: 3,
            tune: false,
        },
        ..ExperimentConfig::default()
    };
    print!("{}", benchmark_markdown(&run_benchmark(&cfg)?));
    Ok(())
}
