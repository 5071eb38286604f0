//! Writes a few synthetic frames to the binary container and the text format,
//! reads both back and prints global-descriptor similarities between frames.

use loopclose::evaluation::{generate, RevisitSegment, SyntheticConfig};
use loopclose::frame_store::{
    cosine_similarity, write_binary_file, write_text, ContainerHeader, DescriptorSource,
    FrameRecord, FrameStore,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synthetic = SyntheticConfig {
        n_frames: 40,
        revisits: vec![RevisitSegment {
            start: 30,
            length: 10,
            offset: 25,
        }],
        global_dim: 256,
        local_dim: 64,
        psi: 2.0,
        ..Default::default()
    };
    let records: Vec<FrameRecord> = generate(&synthetic)?.collect::<Result<_, _>>()?;
    let header = ContainerHeader {
        global_dim: synthetic.global_dim,
        local_dim: synthetic.local_dim,
    };

    let dir = std::env::temp_dir().join("loopclose-descriptor-files");
    std::fs::create_dir_all(&dir)?;
    let bin = dir.join("frames.fild");
    let txt = dir.join("frames.txt");
    write_binary_file(&bin, header, &records)?;
    let mut text = Vec::new();
    write_text(&mut text, header, &records)?;
    std::fs::write(&txt, &text)?;
    println!(
        "binary {} bytes, text {} bytes",
        std::fs::metadata(&bin)?.len(),
        text.len()
    );

    for path in [&bin, &txt] {
        let (h, source) = DescriptorSource::open(path)?;
        let mut store = FrameStore::new(h.global_dim, h.local_dim);
        for rec in source {
            store.ingest(rec?)?;
        }
        let f = |id| &store.get(id).unwrap().global;
        println!(
            "{}: {} frames, sim(0,1) {:.4}, sim(0,20) {:.4}, sim(5,30) {:.4} (revisit)",
            path.display(),
            store.len(),
            cosine_similarity(f(0), f(1))?,
            cosine_similarity(f(0), f(20))?,
            cosine_similarity(f(5), f(30))?,
        );
    }
    Ok(())
}
