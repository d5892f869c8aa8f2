//! Lloyd's k-means with k-means++ seeding, and the cluster-density
//! difficulty score built on it.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_file, BinReader, BinWriter, Meta};
use crate::model::EmbeddingStore;
use crate::par;

/// Default cluster count.
pub const DEFAULT_CLUSTERS: usize = 150;

const MAGIC: &[u8; 8] = b"IQPPKMN1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub clusters: usize,
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            clusters: DEFAULT_CLUSTERS,
            max_iterations: 300,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub clusters: usize,
    pub dim: usize,
    /// Row-major `clusters * dim`.
    pub centroids: Vec<f64>,
    /// Cluster index per collection row.
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Mean squared Euclidean distance of each cluster's members to its centroid.
    pub variances: Vec<f64>,
    /// Within-cluster sum of squares after every assignment step.
    pub sse_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.data.len() / self.dim
    }
}

/// Nearest centroid by squared distance, ties to the lowest index.
fn nearest(point: &[f64], centroids: &[f64], dim: usize, allowed: Option<&[usize]>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, c) in centroids.chunks(dim).enumerate() {
        if allowed.is_some_and(|sizes| sizes[j] == 0) {
            continue;
        }
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &Points, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    par::map_range(points.len(), |i| nearest(points.row(i), centroids, points.dim, None))
        .into_iter()
        .unzip()
}

fn seed_plus_plus(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = points.row(first).to_vec();
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    while centroids.len() < k * points.dim {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in closest.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point duplicates a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let c = points.row(next);
        centroids.extend_from_slice(c);
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), c));
        }
    }
    centroids
}

/// Fits k-means to the collection rows.
///
/// The assignment step may run in parallel; centroid sums are reduced in
/// row order so the result depends only on the seed. Empty clusters are
/// re-seeded with the point farthest from its centroid. The within-cluster
/// sum of squares never increases between iterations: an update that would
/// raise it (only possible through rounding) ends the run instead.
pub fn fit_kmeans(collection: &EmbeddingStore, params: &KMeansParams) -> Result<KMeansModel> {
    let n = collection.len();
    let k = params.clusters;
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let dim = collection.dim();
    let points = Points {
        data: collection.as_flat().iter().map(|&v| v as f64).collect(),
        dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = seed_plus_plus(&points, k, &mut rng);
    let (mut assignments, mut dists) = assign(&points, &centroids);
    let mut sse: f64 = dists.iter().sum();
    let mut history = vec![sse];

    for _ in 0..params.max_iterations {
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        let mut next = centroids.clone();
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in next[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        if !empty.is_empty() {
            let mut far: Vec<(f64, usize)> = (0..n)
                .map(|i| {
                    let a = assignments[i];
                    (sq_dist(points.row(i), &next[a * dim..(a + 1) * dim]), i)
                })
                .collect();
            far.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            for (j, &(_, i)) in empty.iter().zip(&far) {
                next[j * dim..(j + 1) * dim].copy_from_slice(points.row(i));
            }
        }
        let shift = centroids
            .chunks(dim)
            .zip(next.chunks(dim))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let (next_assign, next_dists) = assign(&points, &next);
        let next_sse: f64 = next_dists.iter().sum();
        if next_sse > sse {
            break;
        }
        centroids = next;
        assignments = next_assign;
        dists = next_dists;
        sse = next_sse;
        history.push(sse);
        if shift < params.tolerance {
            break;
        }
    }

    let mut sizes = vec![0usize; k];
    let mut spread = vec![0.0; k];
    for (&a, &d) in assignments.iter().zip(&dists) {
        sizes[a] += 1;
        spread[a] += d;
    }
    let variances = spread
        .iter()
        .zip(&sizes)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(KMeansModel {
        clusters: k,
        dim,
        centroids,
        assignments,
        sizes,
        variances,
        sse_history: history,
    })
}

impl KMeansModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    /// Nearest non-empty cluster to `query` and its Euclidean distance.
    pub fn nearest_cluster(&self, query: &[f32]) -> Result<(usize, f64)> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let q: Vec<f64> = query.iter().map(|&v| v as f64).collect();
        let (j, d2) = nearest(&q, &self.centroids, self.dim, Some(&self.sizes));
        Ok((j, d2.sqrt()))
    }

    pub fn save(&self, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BinWriter::new(MAGIC);
        w.u32(VERSION);
        w.long_str(&meta.to_line());
        w.u64(self.clusters as u64);
        w.u64(self.dim as u64);
        w.f64s(&self.centroids);
        w.u64(self.assignments.len() as u64);
        for &a in &self.assignments {
            w.u64(a as u64);
        }
        w.f64s(&self.variances);
        w.f64s(&self.sse_history);
        write_file(path.as_ref(), w.buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        let mut r = BinReader::new(&bytes, MAGIC, path)?;
        if r.u32()? != VERSION {
            return Err(r.error("unsupported k-means model version"));
        }
        r.long_str()?;
        let clusters = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let centroids = r.f64s()?;
        let n = r.len_prefix(8)?;
        let assignments = (0..n)
            .map(|_| r.u64().map(|a| a as usize))
            .collect::<Result<Vec<_>>>()?;
        let variances = r.f64s()?;
        let sse_history = r.f64s()?;
        r.finish()?;
        if centroids.len() != clusters * dim
            || variances.len() != clusters
            || assignments.iter().any(|&a| a >= clusters)
        {
            return Err(Error::format(path, "inconsistent k-means model"));
        }
        let mut sizes = vec![0; clusters];
        for &a in &assignments {
            sizes[a] += 1;
        }
        Ok(Self {
            clusters,
            dim,
            centroids,
            assignments,
            sizes,
            variances,
            sse_history,
        })
    }
}

/// `(dist(c_j, q) + var(C_j)) / |C_j|` for the cluster `C_j` nearest to the
/// query. Higher means harder.
pub fn cluster_density(model: &KMeansModel, query: &[f32]) -> Result<f64> {
    let (j, dist) = model.nearest_cluster(query)?;
    Ok((dist + model.variances[j]) / model.sizes[j] as f64)
}
