//! Self-supervised neighbor graph.
//!
//! Videos are summarized by mean-pooling their frames; each video's K1
//! nearest neighbors under cosine similarity form its candidate list P.
//! Lists are then expanded by shared-neighbor evidence: the K2 videos whose
//! lists overlap P_i the most are adopted, together with everything on
//! their lists. The result is symmetrized into a fixed ±1 similarity
//! structure — built once from the input features and never updated while
//! training.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::numerics::{dot_slices, Matrix, Vector};
use crate::scalar::Scalar;

const GRAPH_MAGIC: &[u8; 9] = b"SSVH-NBRG";

/// Per-video K1-NN lists, each ordered by descending cosine similarity
/// (ties by ascending index), self excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnTable {
    pub k1: usize,
    pub lists: Vec<Vec<usize>>,
}

/// Fixed neighbor structure: `j ∈ neighbors(i)` means s_ij = +1, every
/// other pair (and every self-pair) is s_ij = −1. Symmetric, irreflexive,
/// adjacency sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    neighbors: Vec<Vec<usize>>,
}

/// Collapse a sequence of frames to its arithmetic mean frame.
pub fn mean_pool<T: Scalar>(frames: &Matrix<T>) -> Result<Vector<T>> {
    if frames.rows() == 0 {
        return Err(Error::invalid("mean_pool", "empty frame sequence"));
    }
    Ok(frames.col_mean())
}

/// Mean-pool every video into one row of an n×D matrix.
pub fn mean_pool_all<T: Scalar>(videos: &[Matrix<T>]) -> Result<Matrix<T>> {
    if videos.is_empty() {
        return Err(Error::invalid("mean_pool_all", "empty dataset"));
    }
    let d = videos[0].cols();
    let mut pooled = Matrix::zeros(videos.len(), d);
    for (i, v) in videos.iter().enumerate() {
        if v.cols() != d {
            return Err(Error::shape(
                "mean_pool_all",
                format!("video {i} has width {}, expected {d}", v.cols()),
            ));
        }
        pooled.set_row(i, mean_pool(v)?.as_slice());
    }
    Ok(pooled)
}

/// Cosine similarity a·b / (‖a‖·‖b‖), undefined (an error) on zero vectors.
pub fn cosine_sim<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine_sim", format!("lengths {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == T::zero() || nb == T::zero() {
        return Err(Error::invalid("cosine_sim", "zero-norm vector has no direction"));
    }
    Ok(a.dot(b) / (na * nb))
}

/// Exact K1 nearest neighbors of every row by cosine similarity.
/// Deterministic regardless of `threads`: rows are independent and results
/// are stitched back in index order.
pub fn build_knn<T: Scalar>(pooled: &Matrix<T>, k1: usize, threads: usize) -> Result<KnnTable> {
    let n = pooled.rows();
    if k1 == 0 {
        return Err(Error::invalid("build_knn", "K1 must be positive"));
    }
    if k1 >= n {
        return Err(Error::invalid(
            "build_knn",
            format!("K1 = {k1} requires more than {n} videos"),
        ));
    }
    if !pooled.all_finite() {
        return Err(Error::non_finite("build_knn: pooled features"));
    }
    let mut norms = vec![T::zero(); n];
    for (i, slot) in norms.iter_mut().enumerate() {
        let norm = dot_slices(pooled.row(i), pooled.row(i)).sqrt();
        if norm == T::zero() {
            return Err(Error::invalid("build_knn", format!("video {i} pools to the zero vector")));
        }
        *slot = norm;
    }

    let knn_row = |i: usize| -> Vec<usize> {
        let mut scored: Vec<(T, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dot_slices(pooled.row(i), pooled.row(j)) / (norms[i] * norms[j]), j))
            .collect();
        // Descending similarity, ascending index on ties. Finiteness was
        // checked above, so the comparison is total.
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        scored.truncate(k1);
        scored.into_iter().map(|(_, j)| j).collect()
    };

    let lists = if threads <= 1 || n < 2 * threads {
        (0..n).map(knn_row).collect()
    } else {
        let chunk = n.div_ceil(threads);
        let mut parts: Vec<Vec<Vec<usize>>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| {
                    let end = (start + chunk).min(n);
                    let knn_row = &knn_row;
                    scope.spawn(move || (start..end).map(knn_row).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                parts.push(h.join().expect("knn worker panicked"));
            }
        });
        parts.into_iter().flatten().collect()
    };
    Ok(KnnTable { k1, lists })
}

/// Expand K1-NN lists by shared-neighbor evidence and symmetrize.
///
/// For each video i, candidates are the videos j ≠ i whose list overlaps
/// P_i at all, ranked by overlap size (descending, ties by ascending j).
/// Every member of P_i is a neighbor; each of the top-K2 candidates
/// contributes its whole list and itself.
pub fn expand_neighbors(table: &KnnTable, k2: usize) -> Result<NeighborGraph> {
    let n = table.lists.len();
    if k2 + 1 > n {
        return Err(Error::invalid(
            "expand_neighbors",
            format!("K2 = {k2} needs at least {} videos, table has {n}", k2 + 1),
        ));
    }
    let mut sets: Vec<BTreeSet<usize>> = Vec::with_capacity(n);
    let mut marked = vec![false; n];
    for i in 0..n {
        for &p in &table.lists[i] {
            marked[p] = true;
        }
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .filter(|&j| j != i)
            .filter_map(|j| {
                let overlap = table.lists[j].iter().filter(|&&p| marked[p]).count();
                (overlap > 0).then_some((overlap, j))
            })
            .collect();
        candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        candidates.truncate(k2);

        let mut set: BTreeSet<usize> = table.lists[i].iter().copied().collect();
        for &(_, j) in &candidates {
            set.extend(table.lists[j].iter().copied());
            set.insert(j);
        }
        set.remove(&i);
        sets.push(set);
        for &p in &table.lists[i] {
            marked[p] = false;
        }
    }

    // Symmetric closure.
    for i in 0..n {
        let snapshot: Vec<usize> = sets[i].iter().copied().collect();
        for j in snapshot {
            sets[j].insert(i);
        }
    }
    for (i, set) in sets.iter_mut().enumerate() {
        set.remove(&i);
    }
    Ok(NeighborGraph { neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect() })
}

/// Build the graph over a dataset split into `shards` contiguous parts,
/// each part's graph constructed independently (no cross-shard edges).
pub fn build_graph_sharded<T: Scalar>(
    pooled: &Matrix<T>,
    k1: usize,
    k2: usize,
    shards: usize,
    threads: usize,
) -> Result<NeighborGraph> {
    let n = pooled.rows();
    if shards == 0 || shards > n {
        return Err(Error::invalid(
            "build_graph_sharded",
            format!("cannot split {n} videos into {shards} shards"),
        ));
    }
    let base = n / shards;
    let extra = n % shards;
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut start = 0;
    for s in 0..shards {
        let len = base + usize::from(s < extra);
        let part = Matrix::from_fn(len, pooled.cols(), |r, c| pooled[(start + r, c)]);
        let table = build_knn(&part, k1, threads)?;
        let graph = expand_neighbors(&table, k2)?;
        for local in graph.neighbors {
            neighbors.push(local.into_iter().map(|j| j + start).collect());
        }
        start += len;
    }
    Ok(NeighborGraph { neighbors })
}

impl NeighborGraph {
    /// Construct from per-video neighbor lists, enforcing the structural
    /// invariants (sorted, in-range, irreflexive, symmetric).
    pub fn from_lists(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let g = NeighborGraph { neighbors };
        g.validate().map_err(|detail| Error::invalid("NeighborGraph::from_lists", detail))?;
        Ok(g)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let n = self.neighbors.len();
        for (i, list) in self.neighbors.iter().enumerate() {
            for (pos, &j) in list.iter().enumerate() {
                if j >= n {
                    return Err(format!("video {i} lists out-of-range neighbor {j}"));
                }
                if j == i {
                    return Err(format!("video {i} lists itself"));
                }
                if pos > 0 && list[pos - 1] >= j {
                    return Err(format!("video {i}'s neighbors are not strictly ascending"));
                }
                if self.neighbors[j].binary_search(&i).is_err() {
                    return Err(format!("edge {i}→{j} has no reverse edge"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn are_neighbors(&self, i: usize, j: usize) -> bool {
        i != j && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// The supervision target: +1 for neighbors, −1 for everything else
    /// (including self-pairs).
    pub fn sign(&self, i: usize, j: usize) -> i8 {
        if self.are_neighbors(i, j) {
            1
        } else {
            -1
        }
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Write as the adjacency format: magic, video count, then one record
    /// per video (neighbor count, ascending neighbor indices), all u64
    /// little-endian.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = io::create_writer(path)?;
        io::write_magic(&mut w, path, GRAPH_MAGIC)?;
        io::write_u64(&mut w, path, self.neighbors.len() as u64)?;
        for list in &self.neighbors {
            io::write_u64(&mut w, path, list.len() as u64)?;
            for &j in list {
                io::write_u64(&mut w, path, j as u64)?;
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = io::open_reader(path)?;
        io::check_magic(&mut r, path, GRAPH_MAGIC)?;
        let n = io::checked_len(io::read_u64(&mut r, path)?, "video count", path)?;
        let mut neighbors = Vec::with_capacity(n);
        for _ in 0..n {
            let len = io::checked_len(io::read_u64(&mut r, path)?, "neighbor count", path)?;
            if len >= n {
                return Err(Error::format(
                    path,
                    format!("neighbor count {len} exceeds {n} videos"),
                ));
            }
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                list.push(io::checked_len(io::read_u64(&mut r, path)?, "neighbor index", path)?);
            }
            neighbors.push(list);
        }
        let g = NeighborGraph { neighbors };
        g.validate().map_err(|detail| Error::format(path, detail))?;
        Ok(g)
    }
}
