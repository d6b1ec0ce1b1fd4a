use std::collections::BTreeMap;

use crate::logstore::LogBatch;
use crate::num::{median, Scalar};

use super::load::estimate_period_loads;

/// Number of clustering features: file size, rtt, bandwidth, buffer, load.
pub const CLUSTER_FEATURES: usize = 5;

/// Group of historically similar transfers.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: u32,
    /// Mean over member records of (mean file bytes, rtt, bandwidth,
    /// buffer size, external load fraction).
    pub centroid: [f64; CLUSTER_FEATURES],
    /// Indices into the batch's records, ascending.
    pub member_records: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub weights: [f64; CLUSTER_FEATURES],
    /// Width of the time bins used to estimate external load.
    pub load_bin_seconds: f64,
    /// Merging continues below `max_clusters` while the merge distance is at
    /// most this multiple of the median merge distance.
    pub cut_ratio: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { weights: [4.0, 3.0, 2.0, 1.0, 1.0], load_bin_seconds: 3600.0, cut_ratio: 2.0 }
    }
}

/// Per-feature standardization followed by square-root weighting, so that
/// squared Euclidean distances carry the feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mean: [f64; CLUSTER_FEATURES],
    pub std: [f64; CLUSTER_FEATURES],
    pub weights: [f64; CLUSTER_FEATURES],
}

/// Upper bounds of the small and medium file-size classes, in bytes.
pub const SIZE_CLASS_BOUNDS: [f64; 2] = [32e6, 1e9];

/// 0 for small, 1 for medium, 2 for large mean file sizes.
pub fn size_class(mean_file_bytes: f64) -> f64 {
    SIZE_CLASS_BOUNDS.iter().filter(|b| mean_file_bytes >= **b).count() as f64
}

impl FeatureScaler {
    /// Raw feature vector with mean file size replaced by its size class.
    pub fn transform_raw(raw: &[f64; CLUSTER_FEATURES]) -> [f64; CLUSTER_FEATURES] {
        let mut t = *raw;
        t[0] = size_class(raw[0]);
        t
    }

    pub fn fit(transformed: &[[f64; CLUSTER_FEATURES]], weights: [f64; CLUSTER_FEATURES]) -> Self {
        let n = transformed.len().max(1) as f64;
        let mut mean = [0.0; CLUSTER_FEATURES];
        let mut std = [0.0; CLUSTER_FEATURES];
        for k in 0..CLUSTER_FEATURES {
            mean[k] = transformed.iter().map(|v| v[k]).sum::<f64>() / n;
            let var = transformed.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / n;
            std[k] = var.sqrt();
        }
        Self { mean, std, weights }
    }

    /// Weighted standardized coordinates. Constant features map to zero.
    pub fn scale(&self, transformed: &[f64; CLUSTER_FEATURES]) -> [f64; CLUSTER_FEATURES] {
        std::array::from_fn(|k| {
            // Guard against relative round-off making a constant feature look varied.
            if self.std[k] <= 1e-12 * self.mean[k].abs().max(1.0) {
                0.0
            } else {
                (transformed[k] - self.mean[k]) / self.std[k] * self.weights[k].sqrt()
            }
        })
    }

    /// Squared weighted distance ignoring features flagged `false` in `use_feature`.
    pub fn distance2(
        &self,
        a: &[f64; CLUSTER_FEATURES],
        b: &[f64; CLUSTER_FEATURES],
        use_feature: &[bool; CLUSTER_FEATURES],
    ) -> f64 {
        let (sa, sb) = (self.scale(a), self.scale(b));
        (0..CLUSTER_FEATURES).filter(|&k| use_feature[k]).map(|k| (sa[k] - sb[k]).powi(2)).sum()
    }
}

/// One agglomeration step: clusters `a` and `b` (indices into the running
/// list of nodes, leaves first) merged at Ward distance `distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge<S> {
    pub a: usize,
    pub b: usize,
    pub distance: S,
}

/// Full Ward agglomeration using Lance-Williams updates on squared distances.
///
/// Node `n + k` is created by merge `k`. Among equal distances the pair whose
/// lowest member index is smallest wins, then the partner's lowest index.
pub fn ward_merges<S: Scalar>(points: &[Vec<S>]) -> Vec<Merge<S>> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let sqdist = |a: &[S], b: &[S]| a.iter().zip(b).fold(S::zero(), |s, (x, y)| s + (*x - *y) * (*x - *y));
    // Active nodes: (node id, size, lowest member index).
    let mut active: Vec<(usize, usize, usize)> = (0..n).map(|i| (i, 1, i)).collect();
    let mut d: Vec<Vec<S>> = (0..n).map(|i| (0..n).map(|j| sqdist(&points[i], &points[j])).collect()).collect();
    let mut merges = Vec::with_capacity(n - 1);
    let mut next_id = n;
    while active.len() > 1 {
        let m = active.len();
        let mut best: Option<(S, usize, usize, usize, usize)> = None;
        for x in 0..m {
            for y in x + 1..m {
                let dist = d[x][y];
                let (lo, hi) = {
                    let (a, b) = (active[x].2, active[y].2);
                    (a.min(b), a.max(b))
                };
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => dist < bd || (dist == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((dist, lo, hi, x, y));
                }
            }
        }
        let (dist, _, _, x, y) = best.expect("at least one pair");
        let (nx, ny) = (S::from_usize(active[x].1).unwrap(), S::from_usize(active[y].1).unwrap());
        // On squared Euclidean input the Lance-Williams value is twice the
        // Ward cost, and its root is the usual dendrogram height.
        merges.push(Merge { a: active[x].0, b: active[y].0, distance: dist.sqrt() });
        let mut row = vec![S::zero(); m];
        for k in 0..m {
            if k == x || k == y {
                continue;
            }
            let nk = S::from_usize(active[k].1).unwrap();
            let total = nx + ny + nk;
            row[k] = ((nx + nk) * d[x][k] + (ny + nk) * d[y][k] - nk * d[x][y]) / total;
        }
        let merged = (next_id, active[x].1 + active[y].1, active[x].2.min(active[y].2));
        next_id += 1;
        for k in 0..m {
            d[x][k] = row[k];
            d[k][x] = row[k];
        }
        d[x][x] = S::zero();
        active[x] = merged;
        active.remove(y);
        d.remove(y);
        for r in d.iter_mut() {
            r.remove(y);
        }
    }
    merges
}

/// Assigns each point a flat label by replaying merges until `max_clusters`
/// remain, then continuing while merges stay short (see [`ClusterConfig`]).
pub fn cut_merges<S: Scalar>(n: usize, merges: &[Merge<S>], max_clusters: usize, cut_ratio: S) -> Vec<usize> {
    let heights: Vec<S> = merges.iter().map(|m| m.distance).collect();
    let med = median(&heights).unwrap_or(S::zero());
    let mut parent: Vec<usize> = (0..n + merges.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut count = n;
    for (k, m) in merges.iter().enumerate() {
        let allowed = count > max_clusters.max(1) || m.distance == S::zero() || m.distance <= cut_ratio * med;
        if !allowed {
            break;
        }
        let node = n + k;
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        parent[ra] = node;
        parent[rb] = node;
        count -= 1;
    }
    // Relabel roots in order of first appearance.
    let mut labels = vec![0; n];
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, l) in labels.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        let next = seen.len();
        *l = *seen.entry(r).or_insert(next);
    }
    labels
}

/// Clusters transfers with loads estimated from the batch itself.
pub fn cluster_logs(batch: &LogBatch, max_clusters: usize) -> Vec<Cluster> {
    let config = ClusterConfig::default();
    let loads = estimate_period_loads(batch, config.load_bin_seconds);
    cluster_with_loads(batch, max_clusters, &loads, &config).0
}

/// Per-transfer raw features (mean over the transfer's records).
pub fn transfer_features(batch: &LogBatch, loads: &BTreeMap<String, f64>) -> Vec<(Vec<usize>, [f64; CLUSTER_FEATURES])> {
    batch
        .transfers()
        .into_iter()
        .map(|(id, range)| {
            let recs = &batch.records[range.clone()];
            let n = recs.len() as f64;
            let bw = recs.iter().map(|r| r.bandwidth as f64).sum::<f64>() / n;
            let load = loads.get(id).copied().unwrap_or(0.0) / bw;
            let f = [
                recs.iter().map(|r| r.dataset.mean_file_bytes).sum::<f64>() / n,
                recs.iter().map(|r| r.rtt).sum::<f64>() / n,
                bw,
                recs.iter().map(|r| r.params.bs as f64).sum::<f64>() / n,
                load,
            ];
            (range.collect(), f)
        })
        .collect()
}

/// Ward clustering of whole transfers; records inherit their transfer's cluster.
///
/// Returns the clusters together with the fitted scaler and each cluster's
/// mean transformed feature vector, used later to match new transfers.
pub fn cluster_with_loads(
    batch: &LogBatch,
    max_clusters: usize,
    loads: &BTreeMap<String, f64>,
    config: &ClusterConfig,
) -> (Vec<Cluster>, FeatureScaler, Vec<[f64; CLUSTER_FEATURES]>) {
    let transfers = transfer_features(batch, loads);
    let transformed: Vec<[f64; CLUSTER_FEATURES]> =
        transfers.iter().map(|(_, f)| FeatureScaler::transform_raw(f)).collect();
    let scaler = FeatureScaler::fit(&transformed, config.weights);
    let points: Vec<Vec<f64>> = transformed.iter().map(|t| scaler.scale(t).to_vec()).collect();
    let merges = ward_merges(&points);
    let labels = cut_merges(points.len(), &merges, max_clusters, config.cut_ratio);
    let k = labels.iter().max().map_or(0, |m| m + 1);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut centers = vec![[0.0; CLUSTER_FEATURES]; k];
    let mut counts = vec![0usize; k];
    for ((recs, _), (label, t)) in transfers.iter().zip(labels.iter().zip(&transformed)) {
        members[*label].extend(recs.iter().copied());
        for f in 0..CLUSTER_FEATURES {
            centers[*label][f] += t[f];
        }
        counts[*label] += 1;
    }
    let mut clusters: Vec<(Cluster, [f64; CLUSTER_FEATURES])> = members
        .into_iter()
        .zip(centers.into_iter().zip(counts))
        .map(|(mut recs, (c, cnt))| {
            recs.sort_unstable();
            let mut centroid = [0.0; CLUSTER_FEATURES];
            for &i in &recs {
                let r = &batch.records[i];
                let load = loads.get(&r.transfer_id).copied().unwrap_or(0.0) / r.bandwidth as f64;
                let raw = [r.dataset.mean_file_bytes, r.rtt, r.bandwidth as f64, r.params.bs as f64, load];
                for f in 0..CLUSTER_FEATURES {
                    centroid[f] += raw[f];
                }
            }
            for v in centroid.iter_mut() {
                *v /= recs.len() as f64;
            }
            let center = c.map(|v| v / cnt as f64);
            (Cluster { id: 0, centroid, member_records: recs }, center)
        })
        .collect();
    clusters.sort_by_key(|(c, _)| c.member_records[0]);
    let mut out = Vec::with_capacity(k);
    let mut out_centers = Vec::with_capacity(k);
    for (i, (mut c, center)) in clusters.into_iter().enumerate() {
        c.id = i as u32;
        out.push(c);
        out_centers.push(center);
    }
    (out, scaler, out_centers)
}
