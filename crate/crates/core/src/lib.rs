pub mod evaluation;
pub mod frame_store;
pub mod geometry;
pub mod hashing;
pub mod hnsw;
pub mod matcher;
pub mod pipeline;
