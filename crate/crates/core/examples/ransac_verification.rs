//! Geometric verification of hashed matches: a revisit pair should yield a
//! fundamental matrix with many inliers, an unrelated pair should be rejected.

use std::sync::Arc;

use loopclose::evaluation::{generate, SyntheticConfig};
use loopclose::frame_store::FrameStore;
use loopclose::geometry::{sampson_error, verify_matches, Correspondence, RansacParams};
use loopclose::hashing::{HashConfig, HashFamily};
use loopclose::matcher::match_frames;
use loopclose::pipeline::fit_center;
use nalgebra::Point2;

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
    let params = RansacParams::default();

    for (q, c) in [(1050, 50), (1050, 500)] {
        let (query, cand) = (store.get(q).unwrap(), store.get(c).unwrap());
        let set = match_frames(query, cand, 0.7, &family)?;
        match verify_matches(&set.matches, &query.keypoints(), &cand.keypoints(), &params) {
            Ok(v) => {
                let mean: f64 = v
                    .inliers
                    .iter()
                    .map(|&i| {
                        let m = set.matches[i];
                        let (a, b) = (
                            cand.locals[m.cand_idx as usize].keypoint,
                            query.locals[m.query_idx as usize].keypoint,
                        );
                        let corr = Correspondence::new(
                            Point2::new(a.x as f64, a.y as f64),
                            Point2::new(b.x as f64, b.y as f64),
                        );
                        sampson_error(&v.model.matrix, &corr).sqrt()
                    })
                    .sum::<f64>()
                    / v.inliers.len() as f64;
                println!(
                    "{q} vs {c}: {} matches, {} inliers, mean Sampson distance {mean:.3} px\nF = {:.3e}",
                    set.len(),
                    v.inliers.len(),
                    v.model.matrix
                );
            }
            Err(why) => println!("{q} vs {c}: {} matches, rejected: {why}", set.len()),
        }
    }
    Ok(())
}
