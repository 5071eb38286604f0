//! Sweeps the ratio-test threshold ε over the planted-loop dataset and prints
//! the precision/recall and timing tables as CSV.

use loopclose::evaluation::{
    generate, sweep, write_pr_table, write_timing_table, SweepAxis, SyntheticConfig,
    DEFAULT_TOLERANCE,
};
use loopclose::pipeline::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synthetic = SyntheticConfig::default();
    let base = PipelineConfig {
        fps: synthetic.fps,
        ..Default::default()
    };
    let values: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let values = if values.is_empty() {
        vec![0.4, 0.5, 0.6, 0.7, 0.8]
    } else {
        values
    };
    let rows = sweep(
        SweepAxis::Ratio,
        &values,
        &base,
        (synthetic.global_dim, synthetic.local_dim),
        &synthetic.ground_truth(),
        DEFAULT_TOLERANCE,
        || Ok(generate(&synthetic)?),
    )?;
    let stdout = std::io::stdout();
    write_pr_table(stdout.lock(), &rows)?;
    println!();
    write_timing_table(stdout.lock(), &rows)?;
    Ok(())
}
