//! Runs the detector on the default planted-loop dataset and scores it.

use loopclose::evaluation::{run_synthetic, SyntheticConfig};
use loopclose::pipeline::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synthetic = SyntheticConfig::default();
    let config = PipelineConfig {
        fps: synthetic.fps,
        ..Default::default()
    };
    let run = run_synthetic(&synthetic, &config)?;
    let r = run.report;
    println!(
        "{} frames, {} detections: TP {} FP {} FN {}, precision {:.3}, recall {:.3} in {:.1?}",
        synthetic.n_frames,
        run.output.detections.len(),
        r.true_positives,
        r.false_positives,
        r.false_negatives,
        r.precision,
        r.recall,
        run.elapsed
    );
    for (stage, ms) in run.output.detector.timings().mean_ms() {
        println!("  {stage:<14} {ms:8.3} ms/frame");
    }
    Ok(())
}
