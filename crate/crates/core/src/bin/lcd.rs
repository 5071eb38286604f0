use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use loopclose::evaluation::{
    generate_to_files, read_ground_truth, score, sweep, write_pr_table, write_timing_table,
    RevisitSegment, SweepAxis, SyntheticConfig, DEFAULT_TOLERANCE,
};
use loopclose::frame_store::DescriptorSource;
use loopclose::hnsw::HnswParams;
use loopclose::pipeline::{
    fit_center, read_detections_csv, run_stream, write_detections_csv, PipelineConfig,
};

#[derive(Parser)]
#[command(name = "lcd", about = "Streaming loop-closure detection", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect loop closures in a descriptor file and write them as CSV.
    Run {
        /// Binary container or text descriptor file.
        input: PathBuf,
        /// Output CSV (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        params: PipelineArgs,
    },
    /// Write a planted-loop synthetic dataset and its ground truth.
    Generate {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = 2000)]
        frames: u64,
        /// First revisiting frame.
        #[arg(long, default_value_t = 1000)]
        revisit_start: u64,
        #[arg(long, default_value_t = 1000)]
        revisit_length: u64,
        /// How many frames back the revisit looks.
        #[arg(long, default_value_t = 1000)]
        revisit_offset: u64,
        #[arg(long, default_value_t = 1280)]
        global_dim: usize,
        #[arg(long, default_value_t = 128)]
        local_dim: usize,
        #[arg(long, default_value_t = 0.02)]
        global_noise: f64,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        #[arg(long, default_value_t = 40.0)]
        psi: f64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Score a detections CSV against ground truth.
    Score {
        detections: PathBuf,
        ground_truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: u64,
    },
    /// Run the pipeline once per value of one parameter.
    Sweep {
        input: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// One of M, ef_search, m, ratio, n.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: u64,
        /// Precision/recall table (stdout when omitted).
        #[arg(long)]
        pr_out: Option<PathBuf>,
        /// Per-stage timing table (stdout when omitted).
        #[arg(long)]
        timing_out: Option<PathBuf>,
        #[command(flatten)]
        params: PipelineArgs,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// ψ: exclusion time constant in seconds.
    #[arg(long, default_value_t = 40.0)]
    psi: f64,
    /// φ: frame rate of the stream.
    #[arg(long, default_value_t = 10.0)]
    fps: f64,
    /// M: HNSW links per node above layer 0.
    #[arg(short = 'M', long = "max-connections", default_value_t = 48)]
    max_connections: usize,
    #[arg(long, default_value_t = 200)]
    ef_construction: usize,
    /// ef used at query time.
    #[arg(long = "ef", default_value_t = 40)]
    ef_search: usize,
    /// m: fine hash code length in bits.
    #[arg(long, default_value_t = 256)]
    hash_bits: usize,
    /// ε: binary ratio-test threshold.
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    /// τ: minimum RANSAC inliers.
    #[arg(long, default_value_t = 20)]
    inliers: usize,
    /// β: consecutive consistent frames before emitting.
    #[arg(long, default_value_t = 2)]
    beta: usize,
    /// n: graph neighbors verified per frame.
    #[arg(long, default_value_t = 1)]
    neighbors: usize,
    /// W: frame distance allowed between consecutive candidates.
    #[arg(long, default_value_t = 10)]
    consistency_window: u64,
    #[arg(long, default_value_t = 500)]
    ransac_iterations: usize,
    /// Sampson inlier threshold in pixels.
    #[arg(long, default_value_t = 1.0)]
    epipolar_threshold: f64,
    /// Skip graph candidates below this similarity.
    #[arg(long)]
    min_similarity: Option<f64>,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        let d = PipelineConfig::default();
        PipelineConfig {
            psi: self.psi,
            fps: self.fps,
            neighbors: self.neighbors,
            beta: self.beta,
            consistency_window: self.consistency_window,
            ratio: self.ratio,
            ransac: loopclose::geometry::RansacParams {
                max_iterations: self.ransac_iterations,
                epipolar_threshold: self.epipolar_threshold,
                min_inliers: self.inliers,
                ..d.ransac
            },
            hnsw: HnswParams {
                ef_construction: self.ef_construction,
                ef_search: self.ef_search,
                ..HnswParams::with_max_connections(self.max_connections)
            },
            hash: loopclose::hashing::HashConfig {
                bits: self.hash_bits,
                ..d.hash
            },
            min_similarity: self.min_similarity,
            ..d
        }
    }
}

type BoxError = Box<dyn std::error::Error>;

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, BoxError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_gt(path: &Path) -> Result<Vec<loopclose::evaluation::GroundTruthEntry>, BoxError> {
    Ok(read_ground_truth(BufReader::new(File::open(path)?))?)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), BoxError> {
    match cli.command {
        Command::Run {
            input,
            output,
            params,
        } => {
            let config = params.config();
            let (header, source) = DescriptorSource::open(&input)?;
            let center = fit_center(source, header.local_dim)?;
            let (_, source) = DescriptorSource::open(&input)?;
            let out = run_stream(source, header.global_dim, header.local_dim, &config, center)?;
            let mut w = sink(&output)?;
            write_detections_csv(&mut w, &out.detections)?;
            w.flush()?;
            let t = out.detector.timings();
            eprintln!("{} frames, {} detections", t.frames, out.detections.len());
        }
        Command::Generate {
            output,
            ground_truth,
            frames,
            revisit_start,
            revisit_length,
            revisit_offset,
            global_dim,
            local_dim,
            global_noise,
            fps,
            psi,
            seed,
        } => {
            let revisits = if revisit_length == 0 {
                Vec::new()
            } else {
                vec![RevisitSegment {
                    start: revisit_start,
                    length: revisit_length.min(frames.saturating_sub(revisit_start)),
                    offset: revisit_offset,
                }]
            };
            let config = SyntheticConfig {
                n_frames: frames,
                revisits,
                global_dim,
                local_dim,
                global_noise,
                fps,
                psi,
                seed,
                ..Default::default()
            };
            generate_to_files(&config, &output, &ground_truth)?;
        }
        Command::Score {
            detections,
            ground_truth,
            tolerance,
        } => {
            let dets = read_detections_csv(&std::fs::read_to_string(&detections)?)?;
            let r = score(&dets, &read_gt(&ground_truth)?, tolerance)?;
            println!("tp,fp,fn,precision,recall");
            println!(
                "{},{},{},{:.4},{:.4}",
                r.true_positives, r.false_positives, r.false_negatives, r.precision, r.recall
            );
        }
        Command::Sweep {
            input,
            ground_truth,
            axis,
            values,
            tolerance,
            pr_out,
            timing_out,
            params,
        } => {
            let axis = SweepAxis::parse(&axis)
                .ok_or_else(|| format!("unknown axis `{axis}`; use M, ef_search, m, ratio or n"))?;
            let (header, _) = DescriptorSource::open(&input)?;
            let rows = sweep(
                axis,
                &values,
                &params.config(),
                (header.global_dim, header.local_dim),
                &read_gt(&ground_truth)?,
                tolerance,
                || Ok(DescriptorSource::open(&input)?.1),
            )?;
            let mut w = sink(&pr_out)?;
            write_pr_table(&mut w, &rows)?;
            w.flush()?;
            drop(w);
            let mut w = sink(&timing_out)?;
            write_timing_table(&mut w, &rows)?;
            w.flush()?;
        }
    }
    Ok(())
}
