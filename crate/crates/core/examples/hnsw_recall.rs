//! Builds an HNSW graph over random unit vectors and measures recall@k
//! against an exact linear scan, plus mean build and query time.
//!
//! Usage: `hnsw_recall [n] [queries] [dim] [M] [ef_search]`

use std::time::Instant;

use loopclose::frame_store::{cosine_similarity, GlobalDescriptor};
use loopclose::hnsw::{HnswIndex, HnswParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> GlobalDescriptor {
    let v: Vec<f32> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    GlobalDescriptor::new(v.into_iter().map(|x| x / norm).collect()).expect("nonzero")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let arg = |i: usize, d: usize| args.get(i).copied().unwrap_or(d);
    let (n, queries, dim, m, ef) = (
        arg(0, 10_000),
        arg(1, 1_000),
        arg(2, 1280),
        arg(3, 48),
        arg(4, 40),
    );
    let k = 10;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<GlobalDescriptor> = (0..n).map(|_| unit_vector(&mut rng, dim)).collect();
    let held_out: Vec<GlobalDescriptor> =
        (0..queries).map(|_| unit_vector(&mut rng, dim)).collect();

    let params = HnswParams {
        ef_search: ef,
        ..HnswParams::with_max_connections(m)
    };
    let mut index = HnswIndex::new(dim, params)?;
    let t = Instant::now();
    for (i, d) in data.iter().enumerate() {
        index.insert(i as u64, d)?;
    }
    let build = t.elapsed();

    let mut hits = 0usize;
    let mut search_time = std::time::Duration::ZERO;
    for q in &held_out {
        let t = Instant::now();
        let found = index.knn_search(q, k, ef)?;
        search_time += t.elapsed();

        let mut exact: Vec<(f64, u64)> = data
            .iter()
            .enumerate()
            .map(|(i, d)| (cosine_similarity(q, d).expect("same dim"), i as u64))
            .collect();
        exact.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        hits += found
            .iter()
            .filter(|r| exact[..k].iter().any(|e| e.1 == r.frame_id))
            .count();
    }
    println!(
        "n={n} dim={dim} M={m} ef_search={ef}: recall@{k} = {:.4}, mean query {:.3} ms, build {:.1?} ({:.3} ms/insert), top level {}",
        hits as f64 / (queries * k) as f64,
        search_time.as_secs_f64() * 1e3 / queries as f64,
        build,
        build.as_secs_f64() * 1e3 / n as f64,
        index.top_level()
    );
    Ok(())
}
