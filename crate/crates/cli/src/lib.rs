//! Command implementations behind the `gdf` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};

use gdf_core::control::baselines::{HteeConfig, HteeController, StaticController};
use gdf_core::control::centralized::{CentralConfig, CentralizedController};
use gdf_core::control::distributed::{DistributedController, TunerConfig, TunerState};
use gdf_core::control::{Action, ControlContext, Controller, Decision, SlaTracker, TransferInfo};
use gdf_core::fairness::jain_index;
use gdf_core::logstore::{self, LogBatch};
use gdf_core::offline::{self, Analysis, CacheKey, LoadBucket, OfflineConfig, SolutionCache};
use gdf_core::simnet::{self, HistoryConfig, Preset, RunOptions, RunOutput, Scenario, SimWorld, TickObservation};
use gdf_core::{ParamSet, SlaKind, SlaSpec};

/// Environment variable overriding the scenario tick.
pub const TICK_ENV: &str = "GDF_TICK";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    MaxTh,
    MinPow,
    TypeT,
    TypeE,
    TypeP,
    Htee,
    Static,
    Single,
    Centralized,
}

impl ControllerKind {
    pub const NAMES: [&'static str; 9] =
        ["maxth", "minpow", "typeT", "typeE", "typeP", "htee", "static", "single", "centralized"];

    pub fn needs_cache(&self) -> bool {
        !matches!(self, ControllerKind::Htee | ControllerKind::Static | ControllerKind::Single)
    }
}

impl FromStr for ControllerKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "maxth" => ControllerKind::MaxTh,
            "minpow" => ControllerKind::MinPow,
            "typeT" => ControllerKind::TypeT,
            "typeE" => ControllerKind::TypeE,
            "typeP" => ControllerKind::TypeP,
            "htee" => ControllerKind::Htee,
            "static" => ControllerKind::Static,
            "single" => ControllerKind::Single,
            "centralized" => ControllerKind::Centralized,
            _ => bail!("unknown controller '{s}' (expected one of {})", Self::NAMES.join(", ")),
        })
    }
}

/// `<T|E|P> <value>`; the tolerance defaults to 5% of the value.
pub fn parse_sla(text: &str, epsilon: Option<f64>) -> Result<SlaSpec> {
    let mut it = text.split_whitespace();
    let (Some(kind), Some(value), None) = (it.next(), it.next(), it.next()) else {
        bail!("sla must look like '<T|E|P> <value>', got '{text}'");
    };
    let kind: SlaKind = kind.parse().map_err(|e| anyhow!("sla kind: {e}"))?;
    let value: f64 = value.parse().with_context(|| format!("sla value '{value}'"))?;
    let eps = epsilon.unwrap_or(0.05 * value);
    Ok(SlaSpec::new(kind, value, eps)?)
}

/// Reads a scenario file, applying [`TICK_ENV`] and an optional seed.
pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    let mut sc = Scenario::parse(&text).with_context(|| format!("scenario {}", path.display()))?;
    if let Ok(v) = std::env::var(TICK_ENV) {
        let tick: f64 = v.parse().with_context(|| format!("{TICK_ENV}='{v}'"))?;
        if !(tick > 0.0) {
            bail!("{TICK_ENV} must be positive");
        }
        sc.config.tick = tick;
    }
    if let Some(s) = seed {
        sc.config.seed = s;
    }
    Ok(sc)
}

pub fn load_cache(path: &Path) -> Result<SolutionCache> {
    let text = fs::read_to_string(path).with_context(|| format!("reading cache {}", path.display()))?;
    SolutionCache::from_text(&text).with_context(|| format!("cache {}", path.display()))
}

const CONTROLLER_KEYS: [&str; 14] = [
    "sla",
    "epsilon",
    "opportunistic",
    "invert_delay",
    "dwell",
    "loss_threshold",
    "fill_horizon",
    "headroom",
    "htee_limit",
    "htee_dwell",
    "pipelining",
    "cc",
    "p",
    "pp",
];

fn controller_value<T: FromStr>(sc: &Scenario, key: &str) -> Result<Option<T>> {
    Ok(sc.controller_value(key)?)
}

fn tuner_config(sc: &Scenario) -> Result<TunerConfig> {
    let mut c = TunerConfig::default();
    if let Some(v) = controller_value(sc, "opportunistic")? {
        c.opportunistic = v;
    }
    if let Some(v) = controller_value(sc, "invert_delay")? {
        c.invert_delay_trigger = v;
    }
    if let Some(v) = controller_value(sc, "dwell")? {
        c.dwell = v;
    }
    if let Some(v) = controller_value(sc, "loss_threshold")? {
        c.loss_threshold = v;
    }
    if let Some(v) = controller_value(sc, "fill_horizon")? {
        c.fill_horizon = v;
    }
    Ok(c)
}

/// Every controller the runner can drive.
#[derive(Debug, Clone)]
pub enum AnyController {
    Distributed(DistributedController),
    Centralized(CentralizedController),
    Htee(HteeController),
    Static(StaticController),
}

impl AnyController {
    fn inner(&mut self) -> &mut dyn Controller {
        match self {
            AnyController::Distributed(c) => c,
            AnyController::Centralized(c) => c,
            AnyController::Htee(c) => c,
            AnyController::Static(c) => c,
        }
    }

    /// Transfers whose SLA could not be served, with the reason.
    pub fn failures(&self) -> BTreeMap<String, String> {
        match self {
            AnyController::Distributed(c) => c.failed.clone(),
            AnyController::Centralized(c) => c.failed.clone(),
            _ => BTreeMap::new(),
        }
    }
}

impl Controller for AnyController {
    fn name(&self) -> &str {
        match self {
            AnyController::Distributed(c) => c.name(),
            AnyController::Centralized(c) => c.name(),
            AnyController::Htee(c) => c.name(),
            AnyController::Static(c) => c.name(),
        }
    }
    fn on_arrival(&mut self, t: f64, info: &TransferInfo) -> Decision {
        self.inner().on_arrival(t, info)
    }
    fn on_tick(&mut self, obs: &TickObservation) -> Vec<Action> {
        self.inner().on_tick(obs)
    }
    fn on_finish(&mut self, t: f64, id: &str) {
        self.inner().on_finish(t, id)
    }
}

/// A world ready to run with its controller and the SLA of every transfer.
pub struct Prepared {
    pub world: SimWorld,
    pub controller: AnyController,
    pub slas: BTreeMap<String, SlaSpec>,
}

/// Cluster the scenario's workload falls into.
pub fn scenario_cluster(sc: &Scenario, cache: &SolutionCache) -> Result<u32> {
    let l = &sc.config.link;
    cache
        .match_cluster(sc.workload.mean_file_bytes(), l.rtt, l.bandwidth, l.buffer)
        .ok_or_else(|| anyhow!("cache has no clusters"))
}

/// SLA of partition `level` for `kind`, expressed for a transfer of
/// `total_bytes`.
pub fn level_sla(cache: &SolutionCache, cluster: u32, kind: SlaKind, level: usize, total_bytes: f64) -> Result<SlaSpec> {
    let info = cache.cluster(cluster).ok_or_else(|| anyhow!("cluster {cluster} missing from cache"))?;
    let part = info.partition(kind);
    let v = *part.levels.get(level).ok_or_else(|| anyhow!("{kind} level {level} is above the feasible range"))?;
    let value = match kind {
        SlaKind::TotalEnergyCap => v * total_bytes / info.reference_bytes,
        _ => v,
    };
    Ok(SlaSpec::new(kind, value, 0.05 * value)?)
}

/// Builds the world and controller for `kind`. `sla_override` replaces the
/// scenario's `sla` key for SLA-driven controllers.
pub fn prepare(
    sc: &Scenario,
    kind: ControllerKind,
    cache: Option<Arc<SolutionCache>>,
    sla_override: Option<(SlaKind, usize)>,
) -> Result<Prepared> {
    for key in sc.controller.keys() {
        if !CONTROLLER_KEYS.contains(&key.as_str()) {
            bail!("unknown key 'controller.{key}'");
        }
    }
    let world = sc.build_world()?;
    let ctx = ControlContext::for_config(&sc.config);
    let buffer = sc.config.link.buffer;
    let ids: Vec<(String, f64)> = world.transfers().iter().map(|t| (t.id.clone(), t.total_bytes)).collect();
    let cache = match (kind.needs_cache(), cache) {
        (true, None) => bail!("controller needs a cache (--cache)"),
        (_, c) => c,
    };

    // Per-transfer SLAs.
    let mut slas = BTreeMap::new();
    let explicit: Option<SlaSpec> = match sc.controller.get("sla") {
        Some(text) => Some(parse_sla(text, controller_value(sc, "epsilon")?).context("controller.sla")?),
        None => None,
    };
    let by_level = |kind: SlaKind, level: Option<usize>| -> Result<BTreeMap<String, SlaSpec>> {
        let cache = cache.as_deref().expect("checked above");
        let cluster = scenario_cluster(sc, cache)?;
        let info = cache.cluster(cluster).expect("matched");
        // Default: the highest level the median-load bucket can serve.
        let level = match level {
            Some(l) => l,
            None => (0..info.partition(kind).levels.len())
                .rev()
                .find(|&level| cache.get(&CacheKey { cluster, kind, level, bucket: LoadBucket::Median }).is_ok())
                .ok_or_else(|| anyhow!("no feasible {kind} level for cluster {cluster}"))?,
        };
        ids.iter().map(|(id, total)| Ok((id.clone(), level_sla(cache, cluster, kind, level, *total)?))).collect()
    };
    match (kind, sla_override) {
        (_, Some((k, level))) => slas = by_level(k, Some(level))?,
        (ControllerKind::MaxTh, _) => slas = by_level(SlaKind::ThroughputGuarantee, None)?,
        (ControllerKind::MinPow, _) => slas = by_level(SlaKind::TotalEnergyCap, Some(0))?,
        (ControllerKind::TypeT | ControllerKind::TypeE | ControllerKind::TypeP | ControllerKind::Centralized, _) => {
            let sla = explicit.ok_or_else(|| anyhow!("controller.sla is required for this controller"))?;
            let want = match kind {
                ControllerKind::TypeT => Some(SlaKind::ThroughputGuarantee),
                ControllerKind::TypeE => Some(SlaKind::TotalEnergyCap),
                ControllerKind::TypeP => Some(SlaKind::InstantPowerCap),
                _ => None,
            };
            if let Some(w) = want {
                if w != sla.kind {
                    bail!("controller.sla has kind {} but the controller expects {w}", sla.kind);
                }
            }
            for (id, _) in &ids {
                slas.insert(id.clone(), sla);
            }
        }
        _ => {}
    }

    let controller = match kind {
        ControllerKind::Htee => AnyController::Htee(HteeController::new(HteeConfig {
            limit: controller_value(sc, "htee_limit")?.unwrap_or(gdf_core::ParamLimits::default().cc_limit),
            dwell: controller_value(sc, "htee_dwell")?.unwrap_or(5),
            pipelining: controller_value(sc, "pipelining")?.unwrap_or(1),
            buffer,
            group: ctx.loosest_group(),
        })),
        ControllerKind::Single => AnyController::Static(StaticController::single_stream(buffer, ctx.loosest_group())),
        ControllerKind::Static => {
            let params = ParamSet::new(
                controller_value(sc, "cc")?.unwrap_or(4),
                controller_value(sc, "p")?.unwrap_or(4),
                controller_value(sc, "pp")?.unwrap_or(4),
                buffer,
            )?;
            AnyController::Static(StaticController::new(params, ctx.loosest_group()))
        }
        ControllerKind::Centralized => {
            let mut config = CentralConfig::default();
            if let Some(h) = controller_value(sc, "headroom")? {
                config.headroom = h;
            }
            let default = *slas.values().next().ok_or_else(|| anyhow!("no transfers"))?;
            let mut c = CentralizedController::new(ctx, cache.expect("checked"), config, default);
            c.slas = slas.clone();
            AnyController::Centralized(c)
        }
        _ => {
            let default = *slas.values().next().ok_or_else(|| anyhow!("no transfers"))?;
            let mut c = DistributedController::new(ctx, cache.expect("checked"), tuner_config(sc)?, default);
            c.slas = slas.clone();
            AnyController::Distributed(c)
        }
    };
    Ok(Prepared { world, controller, slas })
}

/// One row of the run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub id: String,
    pub bytes: f64,
    pub seconds: f64,
    pub joules: f64,
    pub mean_throughput: f64,
    /// Bytes per joule.
    pub efficiency: f64,
    pub violation_fraction: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "id,bytes,seconds,joules,mean_throughput,efficiency,violation_fraction";

impl SummaryRow {
    pub fn csv(&self) -> String {
        let v = self.violation_fraction.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{}",
            self.id, self.bytes, self.seconds, self.joules, self.mean_throughput, self.efficiency, v
        )
    }
}

/// Everything a run produced.
pub struct SimReport {
    pub output: RunOutput,
    pub rows: Vec<SummaryRow>,
    pub slas: BTreeMap<String, SlaSpec>,
    /// Mean share of link capacity carried by managed transfers while any ran.
    pub utilization: f64,
    pub jain: f64,
    pub controller: AnyController,
}

impl SimReport {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(SUMMARY_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    pub fn actions_log(&self) -> String {
        self.output.actions.iter().map(|a| format!("{a}\n")).collect()
    }

    /// Centralized ledger snapshots, empty for other controllers.
    pub fn ledger_log(&self) -> String {
        match &self.controller {
            AnyController::Centralized(c) => c.snapshots.iter().map(|l| format!("{l}\n")).collect(),
            _ => String::new(),
        }
    }

    /// Mean violation fraction over transfers that have an SLA.
    pub fn mean_violation(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.violation_fraction).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn total_joules(&self) -> f64 {
        self.rows.iter().map(|r| r.joules).sum()
    }
}

/// Utilization of the link by managed transfers, averaged over ticks in
/// which at least one of them was running.
pub fn managed_utilization(trace: &[TickObservation]) -> f64 {
    let busy: Vec<f64> = trace
        .iter()
        .filter(|o| !o.transfers.is_empty())
        .map(|o| o.transfers.iter().map(|t| t.goodput).sum::<f64>() / o.link_bandwidth)
        .collect();
    if busy.is_empty() {
        0.0
    } else {
        busy.iter().sum::<f64>() / busy.len() as f64
    }
}

pub fn execute(mut prepared: Prepared, sc: &Scenario) -> Result<SimReport> {
    let groups = simnet::ResourceGroup::ladder(sc.config.link.bandwidth);
    let options = RunOptions { duration: sc.duration, stop_when_idle: true, epoch: sc.epoch };
    let output = simnet::run(&mut prepared.world, &mut prepared.controller, &groups, &options);
    let mut rows = Vec::new();
    for s in &output.summaries {
        let violation_fraction = prepared
            .slas
            .get(&s.id)
            .map(|sla| SlaTracker::over_trace(*sla, s.total_bytes, &output.trace, &s.id).fraction());
        rows.push(SummaryRow {
            id: s.id.clone(),
            bytes: s.bytes,
            seconds: s.seconds,
            joules: s.joules,
            mean_throughput: s.mean_throughput,
            efficiency: if s.joules > 0.0 { s.bytes / s.joules } else { 0.0 },
            violation_fraction,
        });
    }
    let means: Vec<f64> = rows.iter().map(|r| r.mean_throughput).collect();
    Ok(SimReport {
        utilization: managed_utilization(&output.trace),
        jain: jain_index(&means).unwrap_or(1.0),
        rows,
        output,
        slas: prepared.slas,
        controller: prepared.controller,
    })
}

pub fn simulate(sc: &Scenario, kind: ControllerKind, cache: Option<Arc<SolutionCache>>) -> Result<SimReport> {
    execute(prepare(sc, kind, cache, None)?, sc)
}

/// Writes `trace.log`, `summary.csv`, `actions.log` and, for the
/// centralized controller, `ledger.log` into `dir`.
pub fn write_run(dir: &Path, report: &SimReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = [
        ("trace.log", report.output.logs.export()),
        ("summary.csv", report.summary_csv()),
        ("actions.log", report.actions_log()),
    ];
    for (name, body) in files {
        fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
    }
    if matches!(report.controller, AnyController::Centralized(_)) {
        fs::write(dir.join("ledger.log"), report.ledger_log()).context("writing ledger.log")?;
    }
    Ok(())
}

/// Runs the offline pipeline on a log file.
pub fn analyze_logs(path: &Path, config: &OfflineConfig) -> Result<Analysis> {
    let batch = logstore::ingest(path)?;
    let bw = batch.records.iter().map(|r| r.bandwidth).max().unwrap_or(1) as f64;
    let cleaned = logstore::clean(&batch, bw).with_context(|| format!("cleaning {}", path.display()))?;
    let analysis = offline::analyze(&cleaned, config).with_context(|| format!("analyzing {}", path.display()))?;
    if analysis.cache.clusters.is_empty() {
        bail!("no cluster had enough history to fit surfaces");
    }
    Ok(analysis)
}

/// Human-readable analysis summary ending in the cost report.
pub fn analysis_report(a: &Analysis) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "clusters {} entries {}", a.cache.clusters.len(), a.cache.len());
    for c in &a.cache.clusters {
        let t = c.partition(SlaKind::ThroughputGuarantee);
        let _ = writeln!(
            s,
            "cluster {} members {} reference_bytes {} throughput {}..{}",
            c.id, c.members, c.reference_bytes, t.feasible_min, t.feasible_max
        );
    }
    for (id, e) in &a.skipped {
        let _ = writeln!(s, "skipped cluster {id}: {e}");
    }
    let cost = a.cache.cost;
    let amortized = cost.amortized_joules().map_or("none".to_string(), |j| j.to_string());
    let _ = writeln!(
        s,
        "cost analysis_seconds {} analysis_joules {} amortization {} amortized_joules {}",
        cost.analysis_seconds, cost.analysis_joules, cost.amortization_count, amortized
    );
    s
}

/// Synthetic historical logs for a preset.
pub fn generate_logs(preset: Preset, seed: u64, ticks: u32) -> Result<LogBatch> {
    let mut cfg = HistoryConfig::standard(preset, seed);
    cfg.ticks = ticks;
    Ok(simnet::generate_history(&cfg)?)
}

/// One row of an SLA sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaRow {
    pub level: usize,
    pub value: f64,
    /// `None` when the level could not be served.
    pub achieved: Option<f64>,
    pub joules: f64,
    pub violation_fraction: f64,
}

pub const SLA_HEADER: &str = "level,value,status,achieved,joules,violation_fraction";

impl SlaRow {
    pub fn csv(&self) -> String {
        match self.achieved {
            Some(a) => format!("{},{},ok,{},{},{}", self.level, self.value, a, self.joules, self.violation_fraction),
            None => format!("{},{},infeasible,,,", self.level, self.value),
        }
    }
}

/// Inclusive level range written `lo..hi` or a single level.
pub fn parse_levels(text: &str) -> Result<(usize, usize)> {
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse()?, b.trim_start_matches('=').trim().parse()?),
        None => {
            let v = text.trim().parse()?;
            (v, v)
        }
    };
    if lo > hi {
        bail!("empty level range {text}");
    }
    Ok((lo, hi))
}

/// Runs the distributed controller at each partition level of `kind`.
pub fn sla_report(
    sc: &Scenario,
    kind: SlaKind,
    levels: (usize, usize),
    opportunistic: bool,
    cache: Arc<SolutionCache>,
) -> Result<Vec<SlaRow>> {
    let mut sc = sc.clone();
    sc.controller.insert("opportunistic".into(), opportunistic.to_string());
    let cluster = scenario_cluster(&sc, &cache)?;
    let part = cache.cluster(cluster).expect("matched").partition(kind).clone();
    let ctx = ControlContext::for_config(&sc.config);
    let mut rows = Vec::new();
    for level in levels.0..=levels.1 {
        let Some(&value) = part.levels.get(level) else {
            rows.push(SlaRow { level, value: f64::NAN, achieved: None, joules: 0.0, violation_fraction: 0.0 });
            continue;
        };
        let prepared = prepare(&sc, ControllerKind::TypeT, Some(cache.clone()), Some((kind, level)))?;
        // Unservable levels are reported, not run.
        let feasible = prepared.slas.iter().all(|(id, sla)| {
            let total = prepared.world.transfer(id).map_or(1.0, |t| t.total_bytes);
            TunerState::init(id, *sla, &cache, cluster, &ctx, &tuner_config(&sc).unwrap_or_default(), total).is_ok()
        });
        if !feasible {
            rows.push(SlaRow { level, value, achieved: None, joules: 0.0, violation_fraction: 0.0 });
            continue;
        }
        let report = execute(prepared, &sc)?;
        let n = report.rows.len().max(1) as f64;
        let achieved = match kind {
            SlaKind::ThroughputGuarantee => report.rows.iter().map(|r| r.mean_throughput).sum::<f64>() / n,
            SlaKind::TotalEnergyCap => report.total_joules() / n,
            SlaKind::InstantPowerCap => report
                .output
                .trace
                .iter()
                .flat_map(|o| o.transfers.iter().map(|t| t.watts))
                .fold(0.0, f64::max),
        };
        rows.push(SlaRow {
            level,
            value,
            achieved: Some(achieved),
            joules: report.total_joules(),
            violation_fraction: report.mean_violation().unwrap_or(0.0),
        });
    }
    Ok(rows)
}
