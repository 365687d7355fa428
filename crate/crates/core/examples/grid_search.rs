//! Penalty grid on a shortened dataset A, selected by filtered-state cNMSE.

use dglasso::datagen::{DatasetSpec, Preset};
use dglasso::experiment::commands::{datasets_for_runs, run_grid};
use dglasso::experiment::config::{DatasetChoice, GridConfig, SolverSettings};

fn main() -> dglasso::error::Result<()> {
    let choice = DatasetChoice::Custom(DatasetSpec {
        k: 300,
        ..DatasetSpec::preset(Preset::A, 0)
    });
    let grid = GridConfig {
        lambda_a_values: vec![1.0, 10.0, 100.0],
        lambda_p_values: vec![1.0, 10.0],
        runs: 2,
        ..GridConfig::default()
    };
    let data = datasets_for_runs(&choice, 0, grid.runs)?;
    let res = run_grid(&data, &SolverSettings::default(), &grid);
    for cell in &res.cells {
        println!(
            "lambda_a {:>5} lambda_p {:>4}: rmse_a {:.4} rmse_p {:.4} cnmse_filter {:.4e}",
            cell.lambda_a,
            cell.lambda_p,
            cell.column_mean("rmse_a"),
            cell.column_mean("rmse_p"),
            cell.column_mean("cnmse_filter")
        );
    }
    if let Some(best) = res.best_cell() {
        println!("selected ({}, {})", best.lambda_a, best.lambda_p);
    }
    Ok(())
}
