use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::domain::{ParamLimits, ParamSet, SlaKind, SlaSpec};

use super::cluster::{FeatureScaler, CLUSTER_FEATURES};
use super::partition::SlaPartition;
use super::solve::{solve_sla, Solution, SurfacePair};
use super::OfflineError;

/// Tercile of the estimated external load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoadBucket {
    Low,
    Median,
    High,
}

impl LoadBucket {
    pub const ALL: [LoadBucket; 3] = [LoadBucket::Low, LoadBucket::Median, LoadBucket::High];

    pub fn token(&self) -> &'static str {
        match self {
            LoadBucket::Low => "lo",
            LoadBucket::Median => "md",
            LoadBucket::High => "hi",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            LoadBucket::Low => 0,
            LoadBucket::Median => 1,
            LoadBucket::High => 2,
        }
    }
}

impl FromStr for LoadBucket {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lo" => Ok(LoadBucket::Low),
            "md" => Ok(LoadBucket::Median),
            "hi" => Ok(LoadBucket::High),
            _ => Err(format!("unknown bucket '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub cluster: u32,
    pub kind: SlaKind,
    pub level: usize,
    pub bucket: LoadBucket,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CacheEntry {
    Solved(Solution),
    Infeasible,
}

/// Everything the online side needs to know about a cluster besides its
/// solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterInfo {
    pub id: u32,
    /// Mean transformed feature vector of member transfers.
    pub center: [f64; CLUSTER_FEATURES],
    pub reference_bytes: f64,
    pub members: usize,
    /// Load-fraction tercile boundaries `(low/median, median/high)`.
    pub bucket_bounds: (f64, f64),
    /// Partitions indexed by [`SlaKind::index`].
    pub partitions: Vec<SlaPartition>,
}

impl ClusterInfo {
    pub fn bucket_for(&self, load_fraction: f64) -> LoadBucket {
        if load_fraction <= self.bucket_bounds.0 {
            LoadBucket::Low
        } else if load_fraction <= self.bucket_bounds.1 {
            LoadBucket::Median
        } else {
            LoadBucket::High
        }
    }

    pub fn partition(&self, kind: SlaKind) -> &SlaPartition {
        &self.partitions[kind.index()]
    }
}

/// What offline analysis cost, to be amortized over served transfers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OfflineCostReport {
    pub analysis_joules: f64,
    pub analysis_seconds: f64,
    pub amortization_count: u64,
}

impl OfflineCostReport {
    /// Joules charged to each served transfer.
    pub fn amortized_joules(&self) -> Option<f64> {
        (self.amortization_count > 0).then(|| self.analysis_joules / self.amortization_count as f64)
    }
}

/// Work-count model of analysis time, so cost reports are reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub seconds_per_record: f64,
    pub seconds_per_eval: f64,
    /// Power drawn by the analysis host.
    pub watts: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { seconds_per_record: 2e-5, seconds_per_eval: 1e-6, watts: 150.0 }
    }
}

/// Precomputed solutions keyed by cluster, SLA kind, level and load bucket.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolutionCache {
    entries: HashMap<CacheKey, CacheEntry>,
    pub clusters: Vec<ClusterInfo>,
    pub scaler: Option<FeatureScaler>,
    pub cost: OfflineCostReport,
    /// Limits the solutions were computed under.
    pub limits: ParamLimits,
}

/// Surfaces and partitions of one cluster, ready to be solved.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub info: ClusterInfo,
    /// Surfaces indexed by [`LoadBucket::index`].
    pub buckets: Vec<SurfacePair>,
}

/// Solves every (cluster, kind, level, bucket) combination.
///
/// Returns the cache and the number of surface evaluations performed.
pub fn solve_all(models: &[ClusterModel], limits: &ParamLimits) -> (SolutionCache, u64) {
    let mut cache = SolutionCache { limits: *limits, ..SolutionCache::default() };
    let mut evals = 0u64;
    for m in models {
        for kind in SlaKind::ALL {
            for (level, value) in m.info.partition(kind).levels.iter().enumerate() {
                for bucket in LoadBucket::ALL {
                    let surfaces = &m.buckets[bucket.index()];
                    let slices = surfaces.throughput.slice_keys.iter().filter(|k| k.pp <= limits.pp_max).count();
                    evals += 3 * slices as u64 * limits.cc_limit as u64 * limits.p_limit as u64;
                    let sla = SlaSpec { kind, value: *value, epsilon: 0.0 };
                    let entry = match solve_sla(surfaces, &sla, limits) {
                        Ok(s) => CacheEntry::Solved(s),
                        Err(_) => CacheEntry::Infeasible,
                    };
                    cache.entries.insert(CacheKey { cluster: m.info.id, kind, level, bucket }, entry);
                }
            }
        }
        cache.clusters.push(m.info.clone());
    }
    (cache, evals)
}

/// Exact-match retrieval; never solves.
pub fn lookup(cache: &SolutionCache, key: &CacheKey) -> Result<Solution, OfflineError> {
    cache.get(key)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn split_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(';').map(|x| x.parse::<f64>().map_err(|_| format!("bad number '{x}'"))).collect()
}

fn fields(line: &str) -> HashMap<&str, &str> {
    line.split_whitespace().filter_map(|t| t.split_once('=')).collect()
}

impl SolutionCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Result<Solution, OfflineError> {
        match self.entries.get(key) {
            Some(CacheEntry::Solved(s)) => Ok(*s),
            Some(CacheEntry::Infeasible) => Err(OfflineError::Infeasible(format!(
                "cluster {} kind {} level {} bucket {}",
                key.cluster,
                key.kind,
                key.level,
                key.bucket.token()
            ))),
            None => Err(OfflineError::UnknownKey(format!(
                "cluster {} kind {} level {} bucket {}",
                key.cluster,
                key.kind,
                key.level,
                key.bucket.token()
            ))),
        }
    }

    pub fn entry(&self, key: &CacheKey) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: CacheKey, entry: CacheEntry) {
        self.entries.insert(key, entry);
    }

    pub fn sorted_keys(&self) -> Vec<CacheKey> {
        let mut keys: Vec<CacheKey> = self.entries.keys().copied().collect();
        keys.sort();
        keys
    }

    pub fn cluster(&self, id: u32) -> Option<&ClusterInfo> {
        self.clusters.iter().find(|c| c.id == id)
    }

    /// Nearest cluster to a transfer description, ignoring external load.
    pub fn match_cluster(&self, mean_file_bytes: f64, rtt: f64, bandwidth: f64, buffer: u64) -> Option<u32> {
        let scaler = self.scaler.as_ref()?;
        let t = FeatureScaler::transform_raw(&[mean_file_bytes, rtt, bandwidth, buffer as f64, 0.0]);
        let use_f = [true, true, true, true, false];
        self.clusters
            .iter()
            .map(|c| (scaler.distance2(&t, &c.center, &use_f), c.id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    /// Serializes to the line format. Output is independent of hash order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let l = &self.limits;
        let _ = writeln!(
            out,
            "#limits cc={} p={} pp={} acc={} ap={} b1={} b2={}",
            l.cc_limit, l.p_limit, l.pp_max, l.alpha_cc, l.alpha_p, l.beta1, l.beta2
        );
        if let Some(s) = &self.scaler {
            let _ = writeln!(out, "#scaler mean={} std={} weights={}", join(&s.mean), join(&s.std), join(&s.weights));
        }
        for c in &self.clusters {
            let _ = writeln!(
                out,
                "#cluster id={} center={} refbytes={} members={} lo={} hi={}",
                c.id,
                join(&c.center),
                c.reference_bytes,
                c.members,
                c.bucket_bounds.0,
                c.bucket_bounds.1
            );
            for p in &c.partitions {
                let _ = writeln!(
                    out,
                    "#partition cluster={} kind={} min={} max={} levels={}",
                    c.id,
                    p.kind,
                    p.feasible_min,
                    p.feasible_max,
                    join(&p.levels)
                );
            }
        }
        for key in self.sorted_keys() {
            let head = format!("cluster={} kind={} level={} bucket={}", key.cluster, key.kind, key.level, key.bucket.token());
            match &self.entries[&key] {
                CacheEntry::Solved(s) => {
                    let _ = writeln!(
                        out,
                        "{head} cc={} p={} pp={} bs={} predT={} predE={}",
                        s.params.cc, s.params.p, s.params.pp, s.params.bs, s.predicted_t, s.predicted_e
                    );
                }
                CacheEntry::Infeasible => {
                    let _ = writeln!(out, "#infeasible {head}");
                }
            }
        }
        let c = &self.cost;
        let _ = writeln!(
            out,
            "#cost analysis_joules={} analysis_seconds={} amortization={}",
            c.analysis_joules, c.analysis_seconds, c.amortization_count
        );
        out
    }

    pub fn from_text(text: &str) -> Result<Self, OfflineError> {
        let mut cache = SolutionCache::default();
        for (i, line) in text.lines().enumerate() {
            let err = |msg: String| OfflineError::CacheFormat { line: i + 1, msg };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f = fields(line);
            let get = |k: &str| f.get(k).copied().ok_or_else(|| err(format!("missing '{k}'")));
            let num = |k: &str| -> Result<f64, OfflineError> {
                get(k)?.parse::<f64>().map_err(|_| err(format!("bad number for '{k}'")))
            };
            let int = |k: &str| -> Result<u64, OfflineError> {
                get(k)?.parse::<u64>().map_err(|_| err(format!("bad integer for '{k}'")))
            };
            let floats = |k: &str| split_floats(get(k)?).map_err(&err);
            let arr5 = |k: &str| -> Result<[f64; CLUSTER_FEATURES], OfflineError> {
                let v = floats(k)?;
                v.try_into().map_err(|_| err(format!("'{k}' needs {CLUSTER_FEATURES} values")))
            };
            let kind = || -> Result<SlaKind, OfflineError> { get("kind")?.parse().map_err(|e| err(format!("{e}"))) };
            let key = || -> Result<CacheKey, OfflineError> {
                Ok(CacheKey {
                    cluster: int("cluster")? as u32,
                    kind: kind()?,
                    level: int("level")? as usize,
                    bucket: get("bucket")?.parse().map_err(&err)?,
                })
            };
            let tag = line.split_whitespace().next().unwrap_or("");
            match tag {
                "#limits" => {
                    cache.limits = ParamLimits {
                        cc_limit: int("cc")? as u32,
                        p_limit: int("p")? as u32,
                        pp_max: int("pp")? as u32,
                        alpha_cc: int("acc")? as u32,
                        alpha_p: int("ap")? as u32,
                        beta1: num("b1")?,
                        beta2: num("b2")?,
                    };
                    cache.limits.validate().map_err(|e| err(e.to_string()))?;
                }
                "#scaler" => {
                    cache.scaler = Some(FeatureScaler { mean: arr5("mean")?, std: arr5("std")?, weights: arr5("weights")? });
                }
                "#cluster" => cache.clusters.push(ClusterInfo {
                    id: int("id")? as u32,
                    center: arr5("center")?,
                    reference_bytes: num("refbytes")?,
                    members: int("members")? as usize,
                    bucket_bounds: (num("lo")?, num("hi")?),
                    partitions: Vec::new(),
                }),
                "#partition" => {
                    let id = int("cluster")? as u32;
                    let p = SlaPartition {
                        kind: kind()?,
                        levels: floats("levels")?,
                        feasible_min: num("min")?,
                        feasible_max: num("max")?,
                    };
                    let c = cache
                        .clusters
                        .iter_mut()
                        .find(|c| c.id == id)
                        .ok_or_else(|| err(format!("partition for unknown cluster {id}")))?;
                    if p.kind.index() != c.partitions.len() {
                        return Err(err("partitions must be listed in T, E, P order".into()));
                    }
                    c.partitions.push(p);
                }
                "#infeasible" => {
                    cache.entries.insert(key()?, CacheEntry::Infeasible);
                }
                "#cost" => {
                    cache.cost = OfflineCostReport {
                        analysis_joules: num("analysis_joules")?,
                        analysis_seconds: num("analysis_seconds")?,
                        amortization_count: int("amortization")?,
                    };
                }
                t if t.starts_with('#') => {}
                _ => {
                    let params = ParamSet::new(int("cc")? as u32, int("p")? as u32, int("pp")? as u32, int("bs")?)
                        .map_err(|e| err(e.to_string()))?;
                    let s = Solution { params, predicted_t: num("predT")?, predicted_e: num("predE")? };
                    cache.entries.insert(key()?, CacheEntry::Solved(s));
                }
            }
        }
        if cache.clusters.iter().any(|c| c.partitions.len() != 3) {
            return Err(OfflineError::CacheFormat { line: 0, msg: "cluster without all three partitions".into() });
        }
        Ok(cache)
    }
}
