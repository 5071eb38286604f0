//! Hashes the local descriptors of a revisit pair and of an unrelated pair,
//! then counts ratio-test matches at several thresholds.

use std::sync::Arc;

use loopclose::evaluation::{generate, SyntheticConfig};
use loopclose::frame_store::FrameStore;
use loopclose::hashing::{HashConfig, HashFamily};
use loopclose::matcher::match_frames;
use loopclose::pipeline::fit_center;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synthetic = SyntheticConfig {
        n_frames: 1100,
        ..Default::default()
    };
    let center = fit_center(generate(&synthetic)?, synthetic.local_dim)?;
    let family = Arc::new(
        HashFamily::new(synthetic.local_dim, HashConfig::default(), 0x6a5e_5eed)?
            .with_center(center)?,
    );
    let mut store = FrameStore::with_hashing(
        synthetic.global_dim,
        synthetic.local_dim,
        Arc::clone(&family),
    )?;
    for rec in generate(&synthetic)? {
        store.ingest(rec?)?;
    }

    let frame = |id: u64| store.get(id).unwrap();
    let (query, revisited, unrelated) = (frame(1050), frame(50), frame(500));
    println!(
        "query {} locals, {} code bytes each",
        query.locals.len(),
        family.code_bytes()
    );
    println!("ratio  revisit  unrelated");
    for ratio in [0.5, 0.6, 0.7, 0.8] {
        let a = match_frames(query, revisited, ratio, &family)?;
        let b = match_frames(query, unrelated, ratio, &family)?;
        println!("{ratio:5.1}  {:7}  {:9}", a.len(), b.len());
    }
    Ok(())
}
