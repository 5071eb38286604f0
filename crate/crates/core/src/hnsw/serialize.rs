use super::HnswIndex;

const GRAPH_MAGIC: &[u8; 4] = b"HNSW";
const GRAPH_VERSION: u16 = 1;

impl HnswIndex {
    /// Canonical little-endian dump of the graph topology.
    ///
    /// ```text
    /// "HNSW" | version u16 | M u32 | ef_construction u32 | ef_search u32
    /// | level_scale f64 | seed u64 | dim u32 | node count u64
    /// | entry frame id u64 (u64::MAX if empty) | top level u32
    /// per node in frame-id order: frame id u64 | level u32
    ///     | per layer 0..=level: count u32 | neighbor frame ids u64, ascending
    /// ```
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::new();
        out.extend_from_slice(GRAPH_MAGIC);
        out.extend_from_slice(&GRAPH_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.max_connections as u32).to_le_bytes());
        out.extend_from_slice(&(p.ef_construction as u32).to_le_bytes());
        out.extend_from_slice(&(p.ef_search as u32).to_le_bytes());
        out.extend_from_slice(&p.level_scale.to_le_bytes());
        out.extend_from_slice(&p.rng_seed.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.entry_point().unwrap_or(u64::MAX).to_le_bytes());
        out.extend_from_slice(&(self.top_level as u32).to_le_bytes());

        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&n| self.frame_ids[n]);
        for node in order {
            let layers = &self.links[node];
            out.extend_from_slice(&self.frame_ids[node].to_le_bytes());
            out.extend_from_slice(&((layers.len() - 1) as u32).to_le_bytes());
            for list in layers {
                let mut ids: Vec<u64> = list.iter().map(|&n| self.frame_ids[n as usize]).collect();
                ids.sort_unstable();
                out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
                for id in ids {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        out
    }
}
