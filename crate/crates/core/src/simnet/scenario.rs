use std::collections::BTreeMap;
use std::str::FromStr;

use crate::domain::FEATURE_COUNT;
use crate::PowerModel;

use super::model::{default_power_model, ExternalFlow, FileSizes, HostModel, LinkSpec, NetModel, Workload};
use super::world::{SimConfig, SimWorld};
use super::SimError;

/// Named environment defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 10 Gb/s, 40 ms, 32 MB buffer, 16-core hosts.
    Xsede,
    /// 1 Gb/s, 65 ms, 8 MB buffer, 2-core hosts.
    Ibm,
}

impl FromStr for Preset {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.to_ascii_lowercase().as_str() {
            "xsede" => Ok(Preset::Xsede),
            "ibm" => Ok(Preset::Ibm),
            other => Err(SimError::Config(format!("unknown preset '{other}'"))),
        }
    }
}

impl Preset {
    pub fn link(&self) -> LinkSpec {
        match self {
            Preset::Xsede => LinkSpec { bandwidth: 10e9, rtt: 0.040, buffer: 32 << 20, v_read: 16e9, v_write: 12e9 },
            Preset::Ibm => LinkSpec { bandwidth: 1e9, rtt: 0.065, buffer: 8 << 20, v_read: 2.4e9, v_write: 1.6e9 },
        }
    }

    pub fn net(&self) -> NetModel {
        match self {
            Preset::Xsede => NetModel { stream_cap: 250e6, ..NetModel::default() },
            Preset::Ibm => NetModel { stream_cap: 120e6, ..NetModel::default() },
        }
    }

    pub fn host(&self) -> HostModel {
        match self {
            Preset::Xsede => HostModel {
                cores: 16.0,
                mem_bytes: 32.0 * (1u64 << 30) as f64,
                cpu_base: 0.25,
                cpu_per_link: 1.2,
                cpu_per_stream: 0.1,
                mem_base: 64.0 * (1u64 << 20) as f64,
                power: default_power_model(),
                jitter: 0.03,
            },
            Preset::Ibm => HostModel {
                cores: 2.0,
                mem_bytes: 4.0 * (1u64 << 30) as f64,
                cpu_base: 0.02,
                cpu_per_link: 0.5,
                cpu_per_stream: 0.02,
                mem_base: 32.0 * (1u64 << 20) as f64,
                power: default_power_model(),
                jitter: 0.03,
            },
        }
    }

    pub fn config(&self, tick: f64, seed: u64) -> SimConfig {
        SimConfig { link: self.link(), net: self.net(), host: self.host(), tick, seed }
    }
}

/// A parsed scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub duration: f64,
    pub epoch: f64,
    pub workload: Workload,
    pub contenders: u32,
    /// Delay between consecutive contender starts.
    pub stagger: f64,
    pub flows: Vec<ExternalFlow>,
    pub capacity_changes: Vec<(f64, f64)>,
    /// Raw `[controller]` entries, interpreted by the chosen controller.
    pub controller: BTreeMap<String, String>,
}

fn num<T: FromStr>(ctx: &str, v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("{ctx}: cannot parse '{v}'"))
}

fn floats(ctx: &str, v: &str, n: usize) -> Result<Vec<f64>, String> {
    let out: Vec<f64> = v.split(',').map(|x| num::<f64>(ctx, x.trim())).collect::<Result<_, _>>()?;
    if out.len() != n {
        return Err(format!("{ctx}: expected {n} comma-separated numbers"));
    }
    Ok(out)
}

fn size(ctx: &str, v: &str) -> Result<u64, String> {
    let x: f64 = num(ctx, v.trim())?;
    if !(x >= 1.0) || !x.is_finite() {
        return Err(format!("{ctx}: size must be >= 1 byte"));
    }
    Ok(x.round() as u64)
}

impl Scenario {
    /// Transfer ids in start order.
    pub fn transfer_ids(&self) -> Vec<String> {
        (1..=self.contenders).map(|i| format!("t{i}")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        // First pass: sections of (line, key, value).
        let mut sections: Vec<(String, usize, String, String)> = Vec::new();
        let mut section = String::from("scenario");
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SimError::Scenario { line: i + 1, msg: "expected 'key = value'".into() })?;
            sections.push((section.clone(), i + 1, k.trim().to_string(), v.trim().to_string()));
        }

        let preset = sections
            .iter()
            .find(|(s, _, k, _)| s == "scenario" && k == "preset")
            .map(|(_, line, _, v)| v.parse::<Preset>().map_err(|e| SimError::Scenario { line: *line, msg: e.to_string() }))
            .transpose()?
            .unwrap_or(Preset::Xsede);
        let mut sc = Scenario {
            config: preset.config(1.0, 1),
            duration: 600.0,
            epoch: 0.0,
            workload: Workload { file_count: 100, file_bytes: FileSizes::Uniform { lo: 100_000_000, hi: 500_000_000 } },
            contenders: 1,
            stagger: 0.0,
            flows: Vec::new(),
            capacity_changes: Vec::new(),
            controller: BTreeMap::new(),
        };
        let mut power: Option<Vec<f64>> = None;
        for (sec, line, key, value) in &sections {
            let ctx = format!("{sec}.{key}");
            let v = value.as_str();
            let c = &mut sc.config;
            let res: Result<(), String> = match (sec.as_str(), key.as_str()) {
                ("scenario", "preset") => Ok(()),
                ("scenario", "seed") => num(&ctx, v).map(|x| c.seed = x),
                ("scenario", "tick") => num(&ctx, v).map(|x| c.tick = x),
                ("scenario", "duration") => num(&ctx, v).map(|x| sc.duration = x),
                ("scenario", "epoch") => num(&ctx, v).map(|x| sc.epoch = x),
                ("link", "bandwidth") => num(&ctx, v).map(|x| c.link.bandwidth = x),
                ("link", "rtt") => num(&ctx, v).map(|x| c.link.rtt = x),
                ("link", "buffer") => size(&ctx, v).map(|x| c.link.buffer = x),
                ("link", "v_read") => num(&ctx, v).map(|x| c.link.v_read = x),
                ("link", "v_write") => num(&ctx, v).map(|x| c.link.v_write = x),
                ("net", "stream_cap") => num(&ctx, v).map(|x| c.net.stream_cap = x),
                ("net", "loss_constant") => num(&ctx, v).map(|x| c.net.loss_constant = x),
                ("net", "ca_gain") => num(&ctx, v).map(|x| c.net.ca_gain = x),
                ("net", "retx_waste") => num(&ctx, v).map(|x| c.net.retx_waste = x),
                ("net", "queue_cap") => num(&ctx, v).map(|x| c.net.queue_cap = x),
                ("net", "mss") => num(&ctx, v).map(|x| c.net.mss_bytes = x),
                ("host", "cores") => num(&ctx, v).map(|x| c.host.cores = x),
                ("host", "mem_bytes") => num(&ctx, v).map(|x| c.host.mem_bytes = x),
                ("host", "cpu_base") => num(&ctx, v).map(|x| c.host.cpu_base = x),
                ("host", "cpu_per_link") => num(&ctx, v).map(|x| c.host.cpu_per_link = x),
                ("host", "cpu_per_stream") => num(&ctx, v).map(|x| c.host.cpu_per_stream = x),
                ("host", "mem_base") => num(&ctx, v).map(|x| c.host.mem_base = x),
                ("host", "jitter") => num(&ctx, v).map(|x| c.host.jitter = x),
                ("host", "power") => floats(&ctx, v, FEATURE_COUNT + 1).map(|x| power = Some(x)),
                ("workload", "files") => num(&ctx, v).map(|x| sc.workload.file_count = x),
                ("workload", "size") => match v.split_once("..") {
                    Some((lo, hi)) => size(&ctx, lo).and_then(|lo| {
                        size(&ctx, hi).map(|hi| sc.workload.file_bytes = FileSizes::Uniform { lo, hi })
                    }),
                    None => size(&ctx, v).map(|b| sc.workload.file_bytes = FileSizes::Fixed(b)),
                },
                ("workload", "contenders") => num(&ctx, v).map(|x| sc.contenders = x),
                ("workload", "stagger") => num(&ctx, v).map(|x| sc.stagger = x),
                ("traffic", "flow") => floats(&ctx, v, 3).map(|f| {
                    sc.flows.push(ExternalFlow { start: f[0], end: f[1], rate: f[2] });
                }),
                ("traffic", "capacity") => floats(&ctx, v, 2).map(|f| sc.capacity_changes.push((f[0], f[1]))),
                ("controller", _) => {
                    sc.controller.insert(key.clone(), value.clone());
                    Ok(())
                }
                _ => Err(format!("unknown key '{ctx}'")),
            };
            res.map_err(|msg| SimError::Scenario { line: *line, msg })?;
        }
        if let Some(p) = power {
            sc.config.host.power = PowerModel::new(std::array::from_fn(|i| p[i]), p[FEATURE_COUNT])
                .map_err(|e| SimError::Config(format!("host.power: {e}")))?;
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !self.config.link.valid() {
            return bad("link values must be positive");
        }
        if !(self.config.tick > 0.0) || !(self.duration > 0.0) {
            return bad("tick and duration must be positive");
        }
        if !self.workload.valid() {
            return bad("workload needs files >= 1 and positive sizes");
        }
        if self.contenders == 0 {
            return bad("contenders must be >= 1");
        }
        if self.flows.iter().any(|f| !(f.rate >= 0.0) || !(f.end >= f.start)) {
            return bad("flows need end >= start and rate >= 0");
        }
        if self.capacity_changes.iter().any(|c| !(c.1 > 0.0)) {
            return bad("capacity changes must be positive");
        }
        Ok(())
    }

    /// World with the scenario's transfers registered (all pending).
    pub fn build_world(&self) -> Result<SimWorld, SimError> {
        let mut w = SimWorld::new(self.config.clone())?;
        w.external_flows = self.flows.clone();
        for &(at, bw) in &self.capacity_changes {
            w.schedule_capacity(at, bw);
        }
        for (i, id) in self.transfer_ids().iter().enumerate() {
            w.add_transfer(id, i as f64 * self.stagger, self.workload)?;
        }
        Ok(w)
    }

    /// Value of a `[controller]` key.
    pub fn controller_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, SimError> {
        match self.controller.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| SimError::Config(format!("controller.{key}: cannot parse '{v}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_repeats() {
        let sc = Scenario::parse(
            "preset = ibm\nseed = 9\nduration = 30\n[workload]\nfiles = 10\nsize = 1e6..5e6\ncontenders = 2\n\
             [traffic]\nflow = 0,10,1e8\nflow = 5,20,2e8 # second\n[controller]\nsla = T 5e8\n",
        )
        .unwrap();
        assert_eq!(sc.config.seed, 9);
        assert_eq!(sc.config.link.bandwidth, 1e9);
        assert_eq!(sc.flows.len(), 2);
        assert_eq!(sc.workload.file_bytes, FileSizes::Uniform { lo: 1_000_000, hi: 5_000_000 });
        assert_eq!(sc.controller["sla"], "T 5e8");
        assert_eq!(sc.build_world().unwrap().transfers().len(), 2);
    }

    #[test]
    fn errors_carry_line_and_key() {
        match Scenario::parse("seed = 1\n[link]\nbandwdth = 3\n") {
            Err(SimError::Scenario { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("link.bandwdth"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Scenario::parse("[workload]\nfiles = 0\n").is_err());
        assert!(Scenario::parse("nonsense line\n").is_err());
    }
}
