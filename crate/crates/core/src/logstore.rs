//! Historical transfer logs: one `key=value` line per sample.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::domain::{ParamSet, Utilization};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("log contains no records")]
    EmptyBatch,
    #[error("transfer {transfer}: no valid sample of '{field}'")]
    AllMissing { transfer: String, field: &'static str },
    #[error("link bandwidth must be positive")]
    InvalidBandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dataset {
    pub total_bytes: u64,
    pub file_count: u64,
    pub mean_file_bytes: f64,
}

/// One periodic sample of a transfer. Missing measurements are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferLogRecord {
    pub transfer_id: String,
    pub timestamp: f64,
    pub interval: f64,
    pub rtt: f64,
    pub bandwidth: u64,
    pub queuing_delay: f64,
    pub packet_loss_rate: f64,
    /// Knobs in force; `params.bs` is the socket buffer size.
    pub params: ParamSet,
    pub dataset: Dataset,
    pub utilization: Utilization,
    pub achieved_throughput: f64,
    pub measured_power: f64,
    /// Set by [`clean`] when throughput was capped. Not persisted.
    pub capped: bool,
}

impl TransferLogRecord {
    pub fn buffer_size(&self) -> u64 {
        self.params.bs
    }
}

const KEYS: [&str; 26] = [
    "ts", "id", "iv", "rtt", "bw", "bs", "qd", "plr", "cc", "p", "pp", "bytes", "files", "mfb", "cpu", "mem",
    "dr", "dw", "dbr", "dbw", "nbs", "nbr", "ps", "pr", "thr", "pw",
];

/// Float fields that may be missing and are filled by [`clean`].
const FILLABLE: [&str; 16] =
    ["rtt", "qd", "plr", "mfb", "cpu", "mem", "dr", "dw", "dbr", "dbw", "nbs", "nbr", "ps", "pr", "thr", "pw"];

fn fillable_mut(r: &mut TransferLogRecord, i: usize) -> &mut f64 {
    let u = &mut r.utilization;
    match i {
        0 => &mut r.rtt,
        1 => &mut r.queuing_delay,
        2 => &mut r.packet_loss_rate,
        3 => &mut r.dataset.mean_file_bytes,
        4 => &mut u.cpu,
        5 => &mut u.mem,
        6 => &mut u.disk_reads,
        7 => &mut u.disk_writes,
        8 => &mut u.disk_bytes_read,
        9 => &mut u.disk_bytes_written,
        10 => &mut u.net_bytes_sent,
        11 => &mut u.net_bytes_received,
        12 => &mut u.pkts_sent,
        13 => &mut u.pkts_received,
        14 => &mut r.achieved_throughput,
        15 => &mut r.measured_power,
        _ => unreachable!("fillable index"),
    }
}

fn fillable(r: &TransferLogRecord, i: usize) -> f64 {
    match i {
        0 => r.rtt,
        1 => r.queuing_delay,
        2 => r.packet_loss_rate,
        3 => r.dataset.mean_file_bytes,
        14 => r.achieved_throughput,
        15 => r.measured_power,
        k => r.utilization.features()[k - 4],
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Serializes one record in the line format (without newline).
pub fn format_line(r: &TransferLogRecord) -> String {
    let u = &r.utilization;
    let mut s = String::with_capacity(320);
    let _ = write!(
        s,
        "ts={} id={} iv={} rtt={} bw={} bs={} qd={} plr={} cc={} p={} pp={} bytes={} files={} mfb={} \
         cpu={} mem={} dr={} dw={} dbr={} dbw={} nbs={} nbr={} ps={} pr={} thr={} pw={}",
        fmt_f(r.timestamp),
        r.transfer_id,
        fmt_f(r.interval),
        fmt_f(r.rtt),
        r.bandwidth,
        r.params.bs,
        fmt_f(r.queuing_delay),
        fmt_f(r.packet_loss_rate),
        r.params.cc,
        r.params.p,
        r.params.pp,
        r.dataset.total_bytes,
        r.dataset.file_count,
        fmt_f(r.dataset.mean_file_bytes),
        fmt_f(u.cpu),
        fmt_f(u.mem),
        fmt_f(u.disk_reads),
        fmt_f(u.disk_writes),
        fmt_f(u.disk_bytes_read),
        fmt_f(u.disk_bytes_written),
        fmt_f(u.net_bytes_sent),
        fmt_f(u.net_bytes_received),
        fmt_f(u.pkts_sent),
        fmt_f(u.pkts_received),
        fmt_f(r.achieved_throughput),
        fmt_f(r.measured_power),
    );
    s
}

fn parse_float(key: &str, v: &str, missing_ok: bool) -> Result<f64, String> {
    if v.eq_ignore_ascii_case("nan") {
        return if missing_ok { Ok(f64::NAN) } else { Err(format!("{key} is required")) };
    }
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("{key}: invalid number '{v}'")),
    }
}

fn parse_int(key: &str, v: &str) -> Result<u64, String> {
    v.parse::<u64>().map_err(|_| format!("{key}: invalid integer '{v}'"))
}

fn check(ok: bool, msg: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

/// Parses one line of the log format.
pub fn parse_line(line: &str) -> Result<TransferLogRecord, String> {
    let tokens: Vec<&str> = line.split(' ').collect();
    if tokens.len() != KEYS.len() {
        return Err(format!("expected {} fields, found {}", KEYS.len(), tokens.len()));
    }
    let mut vals = [""; 26];
    for (i, (tok, key)) in tokens.iter().zip(KEYS).enumerate() {
        match tok.split_once('=') {
            Some((k, v)) if k == key && !v.is_empty() => vals[i] = v,
            _ => return Err(format!("field {} must be '{key}=<value>', found '{tok}'", i + 1)),
        }
    }
    let f = |i: usize| parse_float(KEYS[i], vals[i], true);
    let n = |i: usize| parse_int(KEYS[i], vals[i]);
    let small = |i: usize| -> Result<u32, String> {
        u32::try_from(n(i)?).map_err(|_| format!("{}: out of range", KEYS[i]))
    };
    let params = ParamSet { cc: small(8)?, p: small(9)?, pp: small(10)?, bs: n(5)? };
    let mut feats = [0.0; 10];
    for (k, slot) in feats.iter_mut().enumerate() {
        *slot = f(14 + k)?;
    }
    let utilization = Utilization::from_features(feats);
    let rec = TransferLogRecord {
        timestamp: parse_float("ts", vals[0], false)?,
        transfer_id: vals[1].to_string(),
        interval: parse_float("iv", vals[2], false)?,
        rtt: f(3)?,
        bandwidth: n(4)?,
        queuing_delay: f(6)?,
        packet_loss_rate: f(7)?,
        params,
        dataset: Dataset { total_bytes: n(11)?, file_count: n(12)?, mean_file_bytes: f(13)? },
        utilization,
        achieved_throughput: f(24)?,
        measured_power: f(25)?,
        capped: false,
    };
    validate(&rec)?;
    Ok(rec)
}

/// Range checks; NaN (missing) values pass.
fn validate(r: &TransferLogRecord) -> Result<(), String> {
    let ok = |v: f64, pred: fn(f64) -> bool| v.is_nan() || pred(v);
    check(r.interval > 0.0, "iv must be > 0")?;
    check(ok(r.rtt, |v| v > 0.0), "rtt must be > 0")?;
    check(ok(r.queuing_delay, |v| v >= 0.0), "qd must be >= 0")?;
    check(ok(r.packet_loss_rate, |v| (0.0..=1.0).contains(&v)), "plr must lie in [0, 1]")?;
    check(r.bandwidth > 0, "bw must be > 0")?;
    r.params.validate().map_err(|e| e.to_string())?;
    check(r.dataset.total_bytes > 0 && r.dataset.file_count > 0, "bytes and files must be > 0")?;
    check(ok(r.dataset.mean_file_bytes, |v| v > 0.0), "mfb must be > 0")?;
    let u = &r.utilization;
    check(ok(u.cpu, |v| (0.0..=1.0).contains(&v)), "cpu must lie in [0, 1]")?;
    check(ok(u.mem, |v| (0.0..=1.0).contains(&v)), "mem must lie in [0, 1]")?;
    check(u.features()[2..].iter().all(|v| ok(*v, |x| x >= 0.0)), "rates must be >= 0")?;
    check(ok(r.achieved_throughput, |v| v >= 0.0), "thr must be >= 0")?;
    check(ok(r.measured_power, |v| v >= 0.0), "pw must be >= 0")?;
    check(!r.transfer_id.is_empty() && !r.transfer_id.contains('='), "bad id")?;
    Ok(())
}

/// Sorted, validated set of samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogBatch {
    pub records: Vec<TransferLogRecord>,
    pub provenance: String,
}

impl LogBatch {
    /// Sorts by `(transfer_id, timestamp)` and checks timestamps are strictly
    /// increasing within each transfer.
    pub fn new(records: Vec<TransferLogRecord>, provenance: impl Into<String>) -> Result<Self, LogError> {
        let numbered: Vec<(usize, TransferLogRecord)> = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        Self::from_numbered(numbered, provenance.into())
    }

    fn from_numbered(mut numbered: Vec<(usize, TransferLogRecord)>, provenance: String) -> Result<Self, LogError> {
        if numbered.is_empty() {
            return Err(LogError::EmptyBatch);
        }
        numbered.sort_by(|(la, a), (lb, b)| {
            a.transfer_id
                .cmp(&b.transfer_id)
                .then(a.timestamp.total_cmp(&b.timestamp))
                .then(la.cmp(lb))
        });
        for w in numbered.windows(2) {
            let ((_, a), (line, b)) = (&w[0], &w[1]);
            if a.transfer_id == b.transfer_id && b.timestamp <= a.timestamp {
                return Err(LogError::Parse {
                    line: *line,
                    msg: format!("duplicate timestamp {} for transfer {}", b.timestamp, b.transfer_id),
                });
            }
        }
        Ok(Self { records: numbered.into_iter().map(|(_, r)| r).collect(), provenance })
    }

    pub fn parse(text: &str, provenance: impl Into<String>) -> Result<Self, LogError> {
        let mut numbered = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = parse_line(line).map_err(|msg| LogError::Parse { line: i + 1, msg })?;
            numbered.push((i + 1, rec));
        }
        Self::from_numbered(numbered, provenance.into())
    }

    /// All records in line format, newline-terminated.
    pub fn export(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 330);
        for r in &self.records {
            out.push_str(&format_line(r));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        fs::write(path, self.export())
            .map_err(|source| LogError::Io { path: path.display().to_string(), source })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Contiguous index range of each transfer, in id order.
    pub fn transfers(&self) -> Vec<(&str, Range<usize>)> {
        let mut out: Vec<(&str, Range<usize>)> = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            match out.last_mut() {
                Some((id, range)) if *id == r.transfer_id => range.end = i + 1,
                _ => out.push((&r.transfer_id, i..i + 1)),
            }
        }
        out
    }
}

/// Reads and validates a log file.
pub fn ingest(path: &Path) -> Result<LogBatch, LogError> {
    let text = fs::read_to_string(path)
        .map_err(|source| LogError::Io { path: path.display().to_string(), source })?;
    LogBatch::parse(&text, path.display().to_string())
}

/// Caps impossible throughput at the link rate and fills missing values by
/// per-transfer linear interpolation in time.
pub fn clean(batch: &LogBatch, link_bw: f64) -> Result<LogBatch, LogError> {
    if !(link_bw > 0.0) {
        return Err(LogError::InvalidBandwidth);
    }
    let mut records = batch.records.clone();
    for (id, range) in batch.transfers() {
        let slice = &mut records[range];
        for field in 0..FILLABLE.len() {
            fill_field(slice, field).map_err(|_| LogError::AllMissing {
                transfer: id.to_string(),
                field: FILLABLE[field],
            })?;
        }
    }
    for r in &mut records {
        let cap = link_bw.min(r.bandwidth as f64);
        if r.achieved_throughput > cap {
            r.achieved_throughput = cap;
            r.capped = true;
        }
    }
    Ok(LogBatch { records, provenance: batch.provenance.clone() })
}

fn fill_field(slice: &mut [TransferLogRecord], field: usize) -> Result<(), ()> {
    let valid: Vec<usize> = (0..slice.len()).filter(|&i| !fillable(&slice[i], field).is_nan()).collect();
    if valid.is_empty() {
        return Err(());
    }
    if valid.len() == slice.len() {
        return Ok(());
    }
    for i in 0..slice.len() {
        if !fillable(&slice[i], field).is_nan() {
            continue;
        }
        let next = valid.partition_point(|&v| v < i);
        let value = match (next.checked_sub(1).map(|k| valid[k]), valid.get(next).copied()) {
            (Some(a), Some(b)) => {
                let (ta, tb, t) = (slice[a].timestamp, slice[b].timestamp, slice[i].timestamp);
                let (va, vb) = (fillable(&slice[a], field), fillable(&slice[b], field));
                va + (vb - va) * (t - ta) / (tb - ta)
            }
            (Some(a), None) => fillable(&slice[a], field),
            (None, Some(b)) => fillable(&slice[b], field),
            (None, None) => unreachable!("valid is nonempty"),
        };
        *fillable_mut(&mut slice[i], field) = value;
    }
    Ok(())
}
