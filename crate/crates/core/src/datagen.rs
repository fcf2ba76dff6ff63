//! Desk-scale synthetic sequence datasets with known cluster structure,
//! plus the on-disk feature format for ingesting externally extracted
//! per-frame features.
//!
//! Generation model: each cluster gets a center on a sphere of radius
//! equal to the requested separation (re-drawn until all pairwise center
//! distances reach it) and its own unit drift direction; frame j
//! (1-indexed) of a video is center + j·drift·direction + gaussian noise.
//! Nonzero drift makes frame order informative — a time-reversed copy of
//! a video pools to the same mean but walks the opposite way.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io;
use crate::numerics::{Matrix, Vector};
use crate::scalar::Scalar;

const FEAT_MAGIC: &[u8; 9] = b"SSVH-FEAT";
const FEAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_videos: usize,
    pub n_clusters: usize,
    pub frames: usize,
    pub dim: usize,
    /// Minimum distance between cluster centers.
    pub cluster_separation: f64,
    /// Standard deviation of per-entry gaussian noise.
    pub within_noise: f64,
    /// Per-step mean shift along the cluster's drift direction.
    pub temporal_drift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_videos < self.n_clusters {
            return Err(Error::invalid(
                "SyntheticSpec",
                format!("{} videos cannot cover {} clusters", self.n_videos, self.n_clusters),
            ));
        }
        if self.frames == 0 || self.dim == 0 {
            return Err(Error::invalid("SyntheticSpec", "frames and dim must be positive"));
        }
        if self.cluster_separation < 0.0 || self.within_noise < 0.0 {
            return Err(Error::invalid("SyntheticSpec", "scales must be non-negative"));
        }
        Ok(())
    }
}

/// A uniform collection of M×D frame sequences with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<Matrix<T>>,
    labels: Option<Vec<u32>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Vec<Matrix<T>>, labels: Option<Vec<u32>>) -> Result<Self> {
        let first = features.first().ok_or_else(|| Error::invalid("Dataset", "no videos"))?;
        let (m, d) = (first.rows(), first.cols());
        if m == 0 || d == 0 {
            return Err(Error::invalid("Dataset", "videos must be non-empty"));
        }
        for (i, v) in features.iter().enumerate() {
            if v.rows() != m || v.cols() != d {
                return Err(Error::shape(
                    "Dataset",
                    format!("video {i} is {}x{}, expected {m}x{d}", v.rows(), v.cols()),
                ));
            }
            if !v.all_finite() {
                return Err(Error::non_finite(format!("Dataset: video {i}")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != features.len() {
                return Err(Error::invalid(
                    "Dataset",
                    format!("{} labels for {} videos", l.len(), features.len()),
                ));
            }
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.features[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.features[0].cols()
    }

    pub fn video(&self, i: usize) -> &Matrix<T> {
        &self.features[i]
    }

    pub fn videos(&self) -> &[Matrix<T>] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }
}

fn unit_vector(dim: usize, rng: &mut ChaCha20Rng) -> Vector<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return Vector::from_vec(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

fn place_centers(spec: &SyntheticSpec, rng: &mut ChaCha20Rng) -> Result<Vec<Vector<f64>>> {
    let radius = spec.cluster_separation;
    let mut centers: Vec<Vector<f64>> = Vec::with_capacity(spec.n_clusters);
    let mut attempts = 0usize;
    while centers.len() < spec.n_clusters {
        attempts += 1;
        if attempts > 1000 * spec.n_clusters {
            return Err(Error::invalid(
                "generate",
                format!(
                    "could not place {} centers at separation {} in {} dimensions",
                    spec.n_clusters, spec.cluster_separation, spec.dim
                ),
            ));
        }
        let mut candidate = unit_vector(spec.dim, rng);
        candidate.scale(radius);
        let ok = centers.iter().all(|c| {
            let mut dist_sq = 0.0;
            for k in 0..spec.dim {
                let diff = candidate[k] - c[k];
                dist_sq += diff * diff;
            }
            dist_sq.sqrt() >= spec.cluster_separation
        });
        if ok {
            centers.push(candidate);
        }
    }
    Ok(centers)
}

/// Generate a labeled synthetic dataset; identical spec (including seed)
/// gives identical data.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset<f64>> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let centers = place_centers(spec, &mut rng)?;
    let drift_dirs: Vec<Vector<f64>> =
        (0..spec.n_clusters).map(|_| unit_vector(spec.dim, &mut rng)).collect();

    let mut features = Vec::with_capacity(spec.n_videos);
    let mut labels = Vec::with_capacity(spec.n_videos);
    for i in 0..spec.n_videos {
        let cluster = i % spec.n_clusters;
        let center = &centers[cluster];
        let dir = &drift_dirs[cluster];
        let video = Matrix::from_fn(spec.frames, spec.dim, |t, c| {
            let drift = (t + 1) as f64 * spec.temporal_drift * dir[c];
            let noise: f64 = if spec.within_noise > 0.0 {
                rng.sample::<f64, _>(StandardNormal) * spec.within_noise
            } else {
                0.0
            };
            center[c] + drift + noise
        });
        features.push(video);
        labels.push(cluster as u32);
    }
    Dataset::new(features, Some(labels))
}

/// Write features: magic, version, n/M/D, dtype tag, then row-major
/// little-endian 32-bit floats. Labels travel in their own file.
pub fn write_features<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let mut w = io::create_writer(path)?;
    io::write_magic(&mut w, path, FEAT_MAGIC)?;
    io::write_u32(&mut w, path, FEAT_VERSION)?;
    io::write_u64(&mut w, path, ds.len() as u64)?;
    io::write_u64(&mut w, path, ds.frames() as u64)?;
    io::write_u64(&mut w, path, ds.dim() as u64)?;
    io::write_u8(&mut w, path, DTYPE_F32)?;
    for video in ds.videos() {
        for &v in video.data() {
            let narrow = v.to_f32().ok_or_else(|| {
                Error::numeric(format!("feature {v} is not representable in 32 bits"))
            })?;
            if !narrow.is_finite() {
                return Err(Error::non_finite("write_features"));
            }
            io::write_f32(&mut w, path, narrow)?;
        }
    }
    Ok(())
}

/// Read features, widening storage precision to the requested scalar.
pub fn read_features<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let mut r = io::open_reader(path)?;
    io::check_magic(&mut r, path, FEAT_MAGIC)?;
    let version = io::read_u32(&mut r, path)?;
    if version != FEAT_VERSION {
        return Err(Error::format(path, format!("unsupported feature version {version}")));
    }
    let n = io::checked_len(io::read_u64(&mut r, path)?, "video count", path)?;
    let m = io::checked_len(io::read_u64(&mut r, path)?, "frame count", path)?;
    let d = io::checked_len(io::read_u64(&mut r, path)?, "feature dim", path)?;
    let dtype = io::read_u8(&mut r, path)?;
    if dtype != DTYPE_F32 {
        return Err(Error::format(path, format!("unknown dtype tag {dtype}")));
    }
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::format(path, "empty dataset".to_string()));
    }
    m.checked_mul(d)
        .and_then(|md| md.checked_mul(n))
        .ok_or_else(|| Error::format(path, "header sizes overflow".to_string()))?;

    let mut features = Vec::with_capacity(n);
    for i in 0..n {
        let mut data = Vec::with_capacity(m * d);
        for _ in 0..m * d {
            let v = io::read_f32(&mut r, path)
                .map_err(|e| io::truncation_as_format(e, path, "feature payload"))?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("non-finite value in video {i}")));
            }
            data.push(T::of(f64::from(v)));
        }
        features.push(Matrix::from_vec(m, d, data)?);
    }
    let mut probe = [0u8; 1];
    if std::io::Read::read(&mut r, &mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after payload".to_string()));
    }
    Dataset::new(features, None)
}
