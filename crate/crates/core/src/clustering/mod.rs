//! Spectral embedding of coherence histories, k-means, group naming and sector reports.

mod embedding;
mod groups;
mod kmeans;

pub use embedding::{embed_points, laplacian_eigenmaps, Embedding, DEFAULT_NEIGHBOR_K};
pub use groups::{
    involvement_histogram, label_groups, sector_breakdown, ClusterAssignment, GroupLabel,
    Histogram, SectorEntry, SectorMap, SectorRow, SectorTable, SECTOR_HEADERS,
};
pub use kmeans::{
    kmeans, kmeans_plus_plus, lloyd, KMeansResult, LloydRun, DEFAULT_RESTARTS, MAX_ITERATIONS,
    SHIFT_TOLERANCE,
};
