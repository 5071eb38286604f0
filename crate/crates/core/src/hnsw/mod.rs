//! Incremental hierarchical navigable small world graph over global
//! descriptors, ordered by cosine distance `1 − s`.
//!
//! Construction follows the usual scheme: each element draws a top layer from
//! an exponentially decaying distribution, the insertion greedily descends
//! from the entry point down to that layer, then runs a best-first search with
//! `ef_construction` candidates on every remaining layer and links to a
//! diversified subset of them. Layers above zero hold at most `M` links per
//! node, layer zero `2·M`.
//!
//! Traversal uses `f32` dot products against cached inverse norms. Similarities
//! returned to callers are recomputed in `f64` so they agree with
//! [`cosine_similarity`].

mod serialize;
mod visited;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::frame_store::{cosine_similarity, FrameId, GlobalDescriptor};
use visited::VisitedSet;

#[derive(Debug, Error, PartialEq)]
pub enum HnswError {
    #[error("frame {0} is already indexed")]
    DuplicateId(FrameId),
    #[error("frame {0} is not in the index")]
    UnknownId(FrameId),
    #[error("the index is empty")]
    EmptyIndex,
    #[error("descriptor dimension mismatch: index holds {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("enter point {frame} does not reach layer {layer}")]
    EnterPointBelowLayer { frame: FrameId, layer: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    /// M: link budget per node on layers above zero.
    pub max_connections: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// m_L in `⌊−ln(U)·m_L⌋`.
    pub level_scale: f64,
    pub rng_seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self::with_max_connections(48)
    }
}

impl HnswParams {
    /// Defaults with the given M and `m_L = 1/ln(M)`.
    pub fn with_max_connections(m: usize) -> Self {
        Self {
            max_connections: m,
            ef_construction: 200,
            ef_search: 40,
            level_scale: 1.0 / (m.max(2) as f64).ln(),
            rng_seed: 0x5eed_1e7e15,
        }
    }

    pub fn validate(&self) -> Result<(), HnswError> {
        let bad = |msg: &str| Err(HnswError::InvalidParams(msg.into()));
        if self.max_connections < 2 {
            return bad("M must be at least 2");
        }
        if self.ef_construction < self.max_connections {
            return bad("ef_construction must be at least M");
        }
        if self.ef_search < 1 {
            return bad("ef_search must be at least 1");
        }
        if !(self.level_scale.is_finite() && self.level_scale > 0.0) {
            return bad("level scale must be positive and finite");
        }
        Ok(())
    }

    /// Layer-0 link budget, `2·M`.
    pub fn max_connections_layer0(&self) -> usize {
        2 * self.max_connections
    }

    fn capacity(&self, layer: usize) -> usize {
        if layer == 0 {
            self.max_connections_layer0()
        } else {
            self.max_connections
        }
    }
}

/// `⌊−ln(u)·scale⌋` for `u ∈ (0, 1]`.
pub fn level_from_uniform(u: f64, scale: f64) -> usize {
    debug_assert!(u > 0.0 && u <= 1.0);
    (-u.ln() * scale).floor().max(0.0) as usize
}

/// Seeded source of node levels.
#[derive(Debug, Clone)]
pub struct LevelGenerator {
    rng: ChaCha8Rng,
    scale: f64,
}

impl LevelGenerator {
    pub fn new(seed: u64, scale: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale,
        }
    }

    pub fn assign_level(&mut self) -> usize {
        // random() is in [0, 1); flip it into (0, 1].
        let u = 1.0 - self.rng.random::<f64>();
        level_from_uniform(u, self.scale)
    }
}

/// A retrieved frame and its cosine similarity to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub frame_id: FrameId,
    pub similarity: f64,
}

/// Descending similarity, then ascending frame id.
pub fn sort_results(results: &mut [SearchResult]) {
    results.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.frame_id.cmp(&b.frame_id))
    });
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    dist: f32,
    node: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

struct Query<'a> {
    values: &'a [f32],
    inv_norm: f32,
}

#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for lane in 0..8 {
            acc[lane] += x[lane] * y[lane];
        }
    }
    for (lane, (x, y)) in ta.iter().zip(tb).enumerate() {
        acc[lane] += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// The graph. Between insertions it is immutable and `Sync`, so searches
/// may run from several threads at once.
#[derive(Debug, Clone)]
pub struct HnswIndex {
    params: HnswParams,
    dim: usize,
    vectors: Vec<f32>,
    inv_norms: Vec<f32>,
    descriptors: Vec<GlobalDescriptor>,
    frame_ids: Vec<FrameId>,
    lookup: HashMap<FrameId, u32>,
    /// links[node][layer]
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    top_level: usize,
    levels: LevelGenerator,
    visited: VisitedSet,
}

impl HnswIndex {
    pub fn new(dim: usize, params: HnswParams) -> Result<Self, HnswError> {
        params.validate()?;
        if dim == 0 {
            return Err(HnswError::InvalidParams(
                "dimension must be positive".into(),
            ));
        }
        Ok(Self {
            params,
            dim,
            vectors: Vec::new(),
            inv_norms: Vec::new(),
            descriptors: Vec::new(),
            frame_ids: Vec::new(),
            lookup: HashMap::new(),
            links: Vec::new(),
            entry: None,
            top_level: 0,
            levels: LevelGenerator::new(params.rng_seed, params.level_scale),
            visited: VisitedSet::default(),
        })
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    pub fn contains(&self, frame_id: FrameId) -> bool {
        self.lookup.contains_key(&frame_id)
    }

    pub fn entry_point(&self) -> Option<FrameId> {
        self.entry.map(|e| self.frame_ids[e as usize])
    }

    pub fn top_level(&self) -> usize {
        self.top_level
    }

    pub fn frame_ids(&self) -> &[FrameId] {
        &self.frame_ids
    }

    pub fn descriptor(&self, frame_id: FrameId) -> Option<&GlobalDescriptor> {
        self.lookup
            .get(&frame_id)
            .map(|&n| &self.descriptors[n as usize])
    }

    /// Top layer of `frame_id`.
    pub fn level_of(&self, frame_id: FrameId) -> Option<usize> {
        self.lookup
            .get(&frame_id)
            .map(|&n| self.links[n as usize].len() - 1)
    }

    /// Neighbors of `frame_id` on `layer`, as frame ids.
    pub fn neighbors(&self, frame_id: FrameId, layer: usize) -> Option<Vec<FrameId>> {
        let node = *self.lookup.get(&frame_id)?;
        let list = self.links[node as usize].get(layer)?;
        Some(list.iter().map(|&n| self.frame_ids[n as usize]).collect())
    }

    fn vector(&self, node: u32) -> &[f32] {
        let start = node as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    fn query_dist(&self, q: &Query<'_>, node: u32) -> f32 {
        1.0 - dot_f32(q.values, self.vector(node)) * q.inv_norm * self.inv_norms[node as usize]
    }

    fn node_dist(&self, a: u32, b: u32) -> f32 {
        1.0 - dot_f32(self.vector(a), self.vector(b))
            * self.inv_norms[a as usize]
            * self.inv_norms[b as usize]
    }

    fn check_dim(&self, d: &GlobalDescriptor) -> Result<(), HnswError> {
        if d.dim() != self.dim {
            return Err(HnswError::DimensionMismatch {
                expected: self.dim,
                found: d.dim(),
            });
        }
        Ok(())
    }

    /// Best-first search on one layer. Returns at most `ef` nodes, closest
    /// first.
    fn search_layer_nodes(
        &self,
        q: &Query<'_>,
        enter: &[Scored],
        ef: usize,
        layer: usize,
        visited: &mut VisitedSet,
    ) -> Vec<Scored> {
        visited.reset(self.len());
        let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut found: BinaryHeap<Scored> = BinaryHeap::new();
        for &ep in enter {
            if visited.insert(ep.node) {
                candidates.push(Reverse(ep));
                found.push(ep);
                if found.len() > ef {
                    found.pop();
                }
            }
        }
        while let Some(Reverse(current)) = candidates.pop() {
            let worst = *found.peek().expect("found is never empty here");
            if current > worst && found.len() >= ef {
                break;
            }
            for &next in &self.links[current.node as usize][layer] {
                if !visited.insert(next) {
                    continue;
                }
                let scored = Scored {
                    dist: self.query_dist(q, next),
                    node: next,
                };
                let worst = *found.peek().expect("found is never empty here");
                if found.len() < ef || scored < worst {
                    candidates.push(Reverse(scored));
                    found.push(scored);
                    if found.len() > ef {
                        found.pop();
                    }
                }
            }
        }
        found.into_sorted_vec()
    }

    /// Keeps a candidate only if it is closer to the base than to every
    /// neighbor already kept. `candidates` must be sorted closest first.
    fn select_neighbors(&self, candidates: &[Scored], limit: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(limit);
        for &c in candidates {
            if kept.len() >= limit {
                break;
            }
            if kept.iter().all(|k| self.node_dist(c.node, k.node) > c.dist) {
                kept.push(c);
            }
        }
        kept
    }

    fn link(&mut self, target: u32, new: u32, layer: usize) {
        let cap = self.params.capacity(layer);
        if self.links[target as usize][layer].len() < cap {
            self.links[target as usize][layer].push(new);
            return;
        }
        let mut pool: Vec<Scored> = self.links[target as usize][layer]
            .iter()
            .chain(std::iter::once(&new))
            .map(|&n| Scored {
                dist: self.node_dist(target, n),
                node: n,
            })
            .collect();
        pool.sort();
        let kept = self.select_neighbors(&pool, cap);
        self.links[target as usize][layer] = kept.into_iter().map(|s| s.node).collect();
    }

    /// Adds one descriptor to the graph.
    pub fn insert(
        &mut self,
        frame_id: FrameId,
        descriptor: &GlobalDescriptor,
    ) -> Result<(), HnswError> {
        self.check_dim(descriptor)?;
        if self.lookup.contains_key(&frame_id) {
            return Err(HnswError::DuplicateId(frame_id));
        }
        let level = self.levels.assign_level();
        let node = u32::try_from(self.len()).expect("index holds fewer than 2^32 nodes");
        self.vectors.extend_from_slice(descriptor.values());
        self.inv_norms.push((1.0 / descriptor.norm()) as f32);
        self.descriptors.push(descriptor.clone());
        self.frame_ids.push(frame_id);
        self.lookup.insert(frame_id, node);
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = self.entry else {
            self.entry = Some(node);
            self.top_level = level;
            return Ok(());
        };

        let values = descriptor.values().to_vec();
        let q = Query {
            values: &values,
            inv_norm: self.inv_norms[node as usize],
        };
        let mut visited = std::mem::take(&mut self.visited);
        let mut enter = vec![Scored {
            dist: self.query_dist(&q, entry),
            node: entry,
        }];
        for layer in (level + 1..=self.top_level).rev() {
            enter = self.search_layer_nodes(&q, &enter, 1, layer, &mut visited);
        }
        for layer in (0..=level.min(self.top_level)).rev() {
            let found = self.search_layer_nodes(
                &q,
                &enter,
                self.params.ef_construction,
                layer,
                &mut visited,
            );
            let chosen = self.select_neighbors(&found, self.params.max_connections);
            self.links[node as usize][layer] = chosen.iter().map(|s| s.node).collect();
            for s in &chosen {
                self.link(s.node, node, layer);
            }
            enter = found;
        }
        self.visited = visited;

        if level > self.top_level {
            self.top_level = level;
            self.entry = Some(node);
        }
        Ok(())
    }

    fn results_from(&self, query: &GlobalDescriptor, nodes: &[Scored]) -> Vec<SearchResult> {
        let mut out: Vec<SearchResult> = nodes
            .iter()
            .map(|s| SearchResult {
                frame_id: self.frame_ids[s.node as usize],
                similarity: cosine_similarity(query, &self.descriptors[s.node as usize])
                    .expect("dimensions checked"),
            })
            .collect();
        sort_results(&mut out);
        out
    }

    /// Best-first search restricted to `layer`, starting from `enter_points`.
    pub fn search_layer(
        &self,
        query: &GlobalDescriptor,
        enter_points: &[FrameId],
        ef: usize,
        layer: usize,
    ) -> Result<Vec<SearchResult>, HnswError> {
        self.check_dim(query)?;
        if enter_points.is_empty() {
            return Err(HnswError::EmptyIndex);
        }
        let q = Query {
            values: query.values(),
            inv_norm: (1.0 / query.norm()) as f32,
        };
        let mut enter = Vec::with_capacity(enter_points.len());
        for &id in enter_points {
            let node = *self.lookup.get(&id).ok_or(HnswError::UnknownId(id))?;
            if self.links[node as usize].len() <= layer {
                return Err(HnswError::EnterPointBelowLayer { frame: id, layer });
            }
            enter.push(Scored {
                dist: self.query_dist(&q, node),
                node,
            });
        }
        let mut visited = VisitedSet::default();
        let found = self.search_layer_nodes(&q, &enter, ef.max(1), layer, &mut visited);
        Ok(self.results_from(query, &found))
    }

    /// Approximate k nearest neighbors, most similar first.
    pub fn knn_search(
        &self,
        query: &GlobalDescriptor,
        k: usize,
        ef_search: usize,
    ) -> Result<Vec<SearchResult>, HnswError> {
        self.check_dim(query)?;
        if k == 0 {
            return Err(HnswError::ZeroK);
        }
        let entry = self.entry.ok_or(HnswError::EmptyIndex)?;
        let q = Query {
            values: query.values(),
            inv_norm: (1.0 / query.norm()) as f32,
        };
        let mut visited = VisitedSet::default();
        let mut enter = vec![Scored {
            dist: self.query_dist(&q, entry),
            node: entry,
        }];
        for layer in (1..=self.top_level).rev() {
            enter = self.search_layer_nodes(&q, &enter, 1, layer, &mut visited);
        }
        let found = self.search_layer_nodes(&q, &enter, ef_search.max(k), 0, &mut visited);
        let mut out = self.results_from(query, &found);
        out.truncate(k);
        Ok(out)
    }

    /// Structural invariants: degree bounds, no self or dangling links, link
    /// targets present on the layer, and every node reachable on layer 0 from
    /// the entry point.
    pub fn audit(&self) -> Result<(), String> {
        let n = self.len();
        for (node, layers) in self.links.iter().enumerate() {
            let id = self.frame_ids[node];
            for (layer, list) in layers.iter().enumerate() {
                if list.len() > self.params.capacity(layer) {
                    return Err(format!(
                        "frame {id} has {} links on layer {layer}, budget {}",
                        list.len(),
                        self.params.capacity(layer)
                    ));
                }
                let mut seen = std::collections::HashSet::new();
                for &t in list {
                    if t as usize == node {
                        return Err(format!("frame {id} links to itself on layer {layer}"));
                    }
                    if t as usize >= n {
                        return Err(format!("frame {id} has a dangling link on layer {layer}"));
                    }
                    if self.links[t as usize].len() <= layer {
                        return Err(format!(
                            "frame {id} links on layer {layer} to frame {} which stops below it",
                            self.frame_ids[t as usize]
                        ));
                    }
                    if !seen.insert(t) {
                        return Err(format!("frame {id} repeats a link on layer {layer}"));
                    }
                }
            }
        }
        if let Some(entry) = self.entry {
            if self.links[entry as usize].len() != self.top_level + 1 {
                return Err("entry point is not on the top layer".into());
            }
            let mut reached = vec![false; n];
            let mut stack = vec![entry];
            reached[entry as usize] = true;
            while let Some(x) = stack.pop() {
                for &t in &self.links[x as usize][0] {
                    if !reached[t as usize] {
                        reached[t as usize] = true;
                        stack.push(t);
                    }
                }
            }
            if let Some(lost) = reached.iter().position(|r| !r) {
                return Err(format!(
                    "frame {} is unreachable on layer 0",
                    self.frame_ids[lost]
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn random_descriptors(n: usize, dim: usize, seed: u64) -> Vec<GlobalDescriptor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                GlobalDescriptor::new((0..dim).map(|_| rng.sample(StandardNormal)).collect())
                    .unwrap()
            })
            .collect()
    }

    fn small_params() -> HnswParams {
        HnswParams {
            ef_construction: 64,
            ..HnswParams::with_max_connections(8)
        }
    }

    #[test]
    fn unit_uniform_gives_level_zero() {
        assert_eq!(level_from_uniform(1.0, 1.0 / 48f64.ln()), 0);
        assert_eq!(level_from_uniform((-2.0f64).exp(), 1.0), 2);
    }

    #[test]
    fn first_insert_becomes_entry() {
        let mut idx = HnswIndex::new(4, small_params()).unwrap();
        let d = GlobalDescriptor::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        idx.insert(7, &d).unwrap();
        assert_eq!(idx.entry_point(), Some(7));
        let level = idx.level_of(7).unwrap();
        for layer in 0..=level {
            assert!(idx.neighbors(7, layer).unwrap().is_empty());
        }
    }

    #[test]
    fn second_insert_links_both_ways() {
        let mut idx = HnswIndex::new(4, small_params()).unwrap();
        let ds = random_descriptors(2, 4, 1);
        idx.insert(0, &ds[0]).unwrap();
        idx.insert(1, &ds[1]).unwrap();
        let shared = idx.level_of(0).unwrap().min(idx.level_of(1).unwrap());
        for layer in 0..=shared {
            assert_eq!(idx.neighbors(0, layer).unwrap(), vec![1]);
            assert_eq!(idx.neighbors(1, layer).unwrap(), vec![0]);
        }
    }

    #[test]
    fn duplicate_and_dimension_errors() {
        let mut idx = HnswIndex::new(4, small_params()).unwrap();
        let ds = random_descriptors(1, 4, 2);
        idx.insert(3, &ds[0]).unwrap();
        assert_eq!(idx.insert(3, &ds[0]), Err(HnswError::DuplicateId(3)));
        let wrong = GlobalDescriptor::new(vec![1.0; 5]).unwrap();
        assert!(matches!(
            idx.insert(4, &wrong),
            Err(HnswError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_index_search_fails() {
        let idx = HnswIndex::new(4, small_params()).unwrap();
        let q = GlobalDescriptor::new(vec![1.0; 4]).unwrap();
        assert_eq!(idx.knn_search(&q, 1, 10), Err(HnswError::EmptyIndex));
    }

    #[test]
    fn single_node_knn() {
        let mut idx = HnswIndex::new(4, small_params()).unwrap();
        let ds = random_descriptors(2, 4, 3);
        idx.insert(11, &ds[0]).unwrap();
        let r = idx.knn_search(&ds[1], 1, 1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].frame_id, 11);
    }

    #[test]
    fn ef_one_on_two_nodes_returns_closer() {
        let mut idx = HnswIndex::new(2, small_params()).unwrap();
        let a = GlobalDescriptor::new(vec![1.0, 0.0]).unwrap();
        let b = GlobalDescriptor::new(vec![0.0, 1.0]).unwrap();
        idx.insert(0, &a).unwrap();
        idx.insert(1, &b).unwrap();
        let q = GlobalDescriptor::new(vec![0.2, 1.0]).unwrap();
        for start in [0, 1] {
            let r = idx.search_layer(&q, &[start], 1, 0).unwrap();
            assert_eq!(r.len(), 1);
            assert_eq!(r[0].frame_id, 1);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = HnswParams::with_max_connections(16);
        p.ef_construction = 8;
        assert!(HnswIndex::new(4, p).is_err());
        p = HnswParams::with_max_connections(1);
        assert!(p.validate().is_err());
    }

    #[test]
    fn enter_point_must_reach_layer() {
        let mut idx = HnswIndex::new(4, small_params()).unwrap();
        let ds = random_descriptors(30, 4, 9);
        for (i, d) in ds.iter().enumerate() {
            idx.insert(i as u64, d).unwrap();
        }
        let low = (0..30u64).find(|&i| idx.level_of(i) == Some(0)).unwrap();
        assert_eq!(
            idx.search_layer(&ds[0], &[low], 4, 1),
            Err(HnswError::EnterPointBelowLayer {
                frame: low,
                layer: 1
            })
        );
        assert_eq!(
            idx.search_layer(&ds[0], &[99], 4, 0),
            Err(HnswError::UnknownId(99))
        );
    }
}
