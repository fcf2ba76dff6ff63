//! Self-supervision from feature-space geometry: a fixed neighbor graph
//! built by cosine K1-NN plus shared-neighbor expansion, and the pairwise
//! loss that makes codes respect it.

pub mod graph;
pub mod loss;

pub use graph::{
    build_graph_sharded, build_knn, cosine_sim, expand_neighbors, mean_pool, mean_pool_all,
    KnnTable, NeighborGraph,
};
pub use loss::{batch_neighbor_loss, neighbor_loss, NeighborLoss};
