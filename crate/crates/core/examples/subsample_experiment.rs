//! A small run of the repeated-subsampling benchmark.
//!
//! Draws training sets of several sizes from one simulated population, fits
//! each arm with a flat prior, the Cauchy baseline and a catalytic prior, and
//! scores the estimated average effects against the full-population fit.
//! The full-size grid is `catalytic experiment` on the command line.

use catalytic::experiment::{run_experiment, write_table_csv, ExperimentConfig};

fn main() -> catalytic::Result<()> {
    let config = ExperimentConfig { n_grid: vec![100, 400], replications: 20, ..ExperimentConfig::default() };
    let out = run_experiment(&config, None)?;
    let report = &out.report;

    println!("population of {}, test sets of {}", report.population_n, report.n_prime);
    println!("mean squared deviation of the predicted effect:");
    for cell in &report.msdpte {
        println!(
            "  n={:<5} {:<10} {:.4} (se {:.4}, {} diverged)",
            cell.n,
            cell.method.to_string(),
            cell.mean,
            cell.se,
            cell.divergences
        );
    }

    println!("\nsubgroup table (mse, se):");
    let mut table = Vec::new();
    write_table_csv(report, &mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}
