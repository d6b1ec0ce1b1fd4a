//! Property tests over the core invariants.

mod common;

use gdf_core::control::centralized::LedgerStatus;
use gdf_core::control::distributed::{redistribute_pipelining, TunerConfig, TunerState};
use gdf_core::domain::{AffinePowerModel, EnergyAccount, FEATURE_COUNT};
use gdf_core::fairness::jain_index;
use gdf_core::logstore::{format_line, parse_line, Dataset, TransferLogRecord};
use gdf_core::offline::{solve_sla, SliceKey, SlaPartition, Solution, SurfaceModel};
use gdf_core::simnet::{FileSizes, Preset, ResourceGroup, SimWorld, Workload};
use gdf_core::{ParamLimits, ParamSet, SlaKind, SlaSpec, Spline2, Utilization};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn grid(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..3.0, n).prop_map(|steps| {
        let mut x = 1.0;
        steps
            .into_iter()
            .map(|s| {
                let v = x;
                x += s;
                v
            })
            .collect()
    })
}

fn tensor() -> impl Strategy<Value = Spline2> {
    (4usize..7, 4usize..7)
        .prop_flat_map(|(nx, ny)| (grid(nx), grid(ny), prop::collection::vec(-50.0f64..50.0, nx * ny)))
        .prop_map(|(xs, ys, v)| Spline2::new(xs, ys, v).unwrap())
}

proptest! {
    #[test]
    fn tensor_spline_reproduces_knots(s in tensor()) {
        for (i, &x) in s.xs().iter().enumerate() {
            for (j, &y) in s.ys().iter().enumerate() {
                prop_assert!(close(s.eval(x, y), s.knot_value(i, j), 1e-9));
            }
        }
    }

    #[test]
    fn tensor_spline_is_c2_across_knots(s in tensor(), f in 0.0f64..1.0) {
        let (xs, ys) = (s.xs().to_vec(), s.ys().to_vec());
        for j in 0..ys.len() - 1 {
            let y = ys[j] + f * (ys[j + 1] - ys[j]);
            for i in 1..xs.len() - 1 {
                let l = s.on_cell(i - 1, j, xs[i], y);
                let r = s.on_cell(i, j, xs[i], y);
                prop_assert!(close(l.value, r.value, 1e-9));
                prop_assert!(close(l.dx, r.dx, 1e-9));
                prop_assert!(close(l.dxx, r.dxx, 1e-9));
            }
        }
        for i in 0..xs.len() - 1 {
            let x = xs[i] + f * (xs[i + 1] - xs[i]);
            for j in 1..ys.len() - 1 {
                let l = s.on_cell(i, j - 1, x, ys[j]);
                let r = s.on_cell(i, j, x, ys[j]);
                prop_assert!(close(l.value, r.value, 1e-9));
                prop_assert!(close(l.dy, r.dy, 1e-9));
                prop_assert!(close(l.dyy, r.dyy, 1e-9));
            }
        }
    }

    #[test]
    fn power_is_monotone_in_every_feature(
        coef in prop::array::uniform10(0.0f64..200.0),
        base in prop::array::uniform10(0.0f64..1.0),
        k in 0usize..FEATURE_COUNT,
        bump in 0.0f64..5.0,
    ) {
        let m = AffinePowerModel::new(coef, 80.0).unwrap();
        let mut more = base;
        more[k] += bump;
        prop_assert!(m.predict(&more) >= m.predict(&base));
    }

    #[test]
    fn jain_index_is_bounded(xs in prop::collection::vec(0.0f64..1e10, 1..12)) {
        let n = xs.len() as f64;
        match jain_index(&xs) {
            Some(j) => {
                prop_assert!(j <= 1.0 + 1e-12);
                prop_assert!(j >= 1.0 / n - 1e-12);
            }
            None => prop_assert!(xs.iter().all(|x| *x == 0.0)),
        }
    }

    #[test]
    fn log_lines_round_trip(
        ts in 0.0f64..1e7, rtt in 1e-3f64..1.0, bw in 1u64..100_000_000_000, qd in 0.0f64..1.0,
        plr in 0.0f64..1.0, cc in 1u32..64, p in 1u32..64, pp in 1u32..64, bytes in 1u64..1u64 << 50,
        files in 1u64..1_000_000, cpu in 0.0f64..1.0, rates in prop::array::uniform8(0.0f64..1e10),
        thr in 0.0f64..1e11, pw in 0.0f64..1e4, missing in any::<bool>(),
    ) {
        let u = Utilization {
            cpu,
            mem: 0.5,
            disk_reads: rates[0],
            disk_writes: rates[1],
            disk_bytes_read: rates[2],
            disk_bytes_written: rates[3],
            net_bytes_sent: rates[4],
            net_bytes_received: rates[5],
            pkts_sent: rates[6],
            pkts_received: rates[7],
        };
        let r = TransferLogRecord {
            transfer_id: "x-1".into(),
            timestamp: ts,
            interval: 1.0,
            rtt: if missing { f64::NAN } else { rtt },
            bandwidth: bw,
            queuing_delay: qd,
            packet_loss_rate: plr,
            params: ParamSet { cc, p, pp, bs: 1 << 20 },
            dataset: Dataset { total_bytes: bytes, file_count: files, mean_file_bytes: bytes as f64 / files as f64 },
            utilization: u,
            achieved_throughput: thr,
            measured_power: pw,
            capped: false,
        };
        let back = parse_line(&format_line(&r)).unwrap();
        prop_assert_eq!(format_line(&back), format_line(&r));
        prop_assert_eq!(back.rtt.is_nan(), missing);
    }

    #[test]
    fn back_off_never_raises_and_never_drops_below_one(
        signals in prop::collection::vec((0.0f64..0.1, 0.001f64..0.1), 1..80),
    ) {
        let config = TunerConfig { opportunistic: false, ..TunerConfig::default() };
        let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e8, 2.5e7).unwrap();
        let mut s = TunerState::init("t1", sla, &common::cache(), 0, &common::ctx(), &config, 1e9).unwrap();
        for (loss, delay) in signals {
            let before = s.limits;
            s.back_off(&common::obs("t1", 5e8, delay, loss), &config);
            s.recent.push_back(common::obs("t1", 5e8, delay, loss));
            prop_assert!(s.limits.cc_limit <= before.cc_limit && s.limits.p_limit <= before.p_limit);
            prop_assert!(s.limits.cc_limit >= 1 && s.limits.p_limit >= 1);
        }
    }

    #[test]
    fn limits_recover_by_alpha_per_tick(cc in 1u32..=8, p in 1u32..=8) {
        let config = TunerConfig::default();
        let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e8, 2.5e7).unwrap();
        let mut s = TunerState::init("t1", sla, &common::cache(), 0, &common::ctx(), &config, 1e9).unwrap();
        s.limits.cc_limit = cc;
        s.limits.p_limit = p;
        s.raise_limits();
        prop_assert_eq!(s.limits.cc_limit, (cc + 1).min(8));
        prop_assert_eq!(s.limits.p_limit, (p + 1).min(8));
    }

    #[test]
    fn pipelining_split_conserves_the_budget(
        rates in prop::collection::vec(0.0f64..1e9, 1..10), budget in 0u32..100,
    ) {
        let (pp, low) = redistribute_pipelining(&rates, budget);
        prop_assert_eq!(pp.len(), rates.len());
        prop_assert_eq!(pp.iter().sum::<u32>(), budget.max(rates.len() as u32));
        prop_assert!(pp.iter().all(|&v| v >= 1));
        prop_assert!(low.iter().all(|&i| i < rates.len()));
    }

    #[test]
    fn ledger_statuses_follow_the_transition_table(steps in prop::collection::vec(0usize..4, 0..20)) {
        use LedgerStatus::*;
        let all = [Running, Finished, Aborted, SlaViolation];
        let mut state = Running;
        for k in steps {
            let next = all[k];
            let allowed = matches!(
                (state, next),
                (Running, Finished) | (Running, Aborted) | (Running, SlaViolation) | (SlaViolation, Running)
            );
            prop_assert_eq!(state.can_become(next), allowed);
            if allowed {
                state = next;
            }
        }
    }

    #[test]
    fn partition_levels_are_monotone(lo in 0.0f64..1e9, width in 1.0f64..1e10, k in 1usize..20, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        for kind in [SlaKind::ThroughputGuarantee, SlaKind::TotalEnergyCap, SlaKind::InstantPowerCap] {
            let part = SlaPartition::from_range(kind, lo, lo + width, k);
            let (x, y) = (lo + a.min(b) * width, lo + a.max(b) * width);
            prop_assert!(part.level_for(x).unwrap() <= part.level_for(y).unwrap());
            prop_assert!(part.level_for(lo - 1.0).is_none());
        }
    }

    #[test]
    fn step_energy_integral_equals_sum(
        steps in prop::collection::vec((0.01f64..10.0, 0.0f64..500.0), 1..50),
    ) {
        let mut acc = EnergyAccount::default();
        let mut t = 0.0;
        let mut sum = 0.0;
        for (dt, w) in steps {
            acc.push_interval(t, t + dt, w);
            sum += w * dt;
            t += dt;
        }
        prop_assert!(close(acc.integral(), sum, 1e-9));
        prop_assert!(close(acc.joules_total, sum, 1e-9));
    }

    #[test]
    fn simulated_throughput_respects_the_bottleneck(
        cc in 1u32..=8, p in 1u32..=8, pp in 1u32..=8, files in 1u32..200,
        external in 0.0f64..8e9, ibm in any::<bool>(), seed in 0u64..1000,
    ) {
        let preset = if ibm { Preset::Ibm } else { Preset::Xsede };
        let mut world = SimWorld::new(preset.config(1.0, seed)).unwrap();
        let link = world.link;
        world.external_flows.push(gdf_core::simnet::ExternalFlow { start: 3.0, end: 8.0, rate: external.min(link.bandwidth) });
        let w = Workload { file_count: files, file_bytes: FileSizes::Uniform { lo: 1_000_000, hi: 500_000_000 } };
        world.add_transfer("a", 0.0, w).unwrap();
        world.add_transfer("b", 0.0, w).unwrap();
        let group = ResourceGroup { cpu_cap: 1.0, nic_cap: link.bandwidth };
        world.start_transfer("a", ParamSet { cc, p, pp, bs: link.buffer }, group).unwrap();
        world.start_transfer("b", ParamSet { cc: 1, p: 1, pp: 1, bs: link.buffer }, group).unwrap();
        for _ in 0..12 {
            let o = world.step();
            let total: f64 = o.transfers.iter().map(|t| t.goodput).sum();
            prop_assert!(total <= link.bottleneck() * (1.0 + 1e-9));
            for t in &o.transfers {
                prop_assert!(t.throughput <= link.bottleneck() * (1.0 + 1e-9));
            }
        }
    }
}

/// Explicit per-point tables.
#[derive(Debug, Clone)]
struct Table {
    keys: Vec<SliceKey>,
    n_cc: u32,
    n_p: u32,
    t: Vec<f64>,
    e: Vec<f64>,
    w: Vec<f64>,
}

impl Table {
    fn idx(&self, s: usize, cc: u32, p: u32) -> usize {
        (s * self.n_cc as usize + (cc - 1) as usize) * self.n_p as usize + (p - 1) as usize
    }
}

impl SurfaceModel for Table {
    fn slice_keys(&self) -> Vec<SliceKey> {
        self.keys.clone()
    }
    fn throughput(&self, s: usize, cc: u32, p: u32) -> f64 {
        self.t[self.idx(s, cc, p)]
    }
    fn energy(&self, s: usize, cc: u32, p: u32) -> f64 {
        self.e[self.idx(s, cc, p)]
    }
    fn peak_power(&self, s: usize, cc: u32, p: u32) -> f64 {
        self.w[self.idx(s, cc, p)]
    }
}

/// Enumerate, filter, sort by (objective, streams, cc, slice).
fn brute(m: &Table, sla: &SlaSpec) -> Option<(u32, u32, u32)> {
    let mut all = Vec::new();
    for s in 0..m.keys.len() {
        for cc in 1..=m.n_cc {
            for p in 1..=m.n_p {
                let (t, e, w) = (m.throughput(s, cc, p), m.energy(s, cc, p), m.peak_power(s, cc, p));
                let (ok, obj) = match sla.kind {
                    SlaKind::ThroughputGuarantee => (t >= sla.value, e),
                    SlaKind::TotalEnergyCap => (e <= sla.value, -t),
                    SlaKind::InstantPowerCap => (w <= sla.value, -t),
                };
                if ok {
                    all.push((obj, cc * p, cc, s, m.keys[s].pp, p));
                }
            }
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    all.first().map(|x| (x.2, x.5, x.4))
}

fn table() -> impl Strategy<Value = Table> {
    (1u32..=5, 1u32..=5, 1usize..=3).prop_flat_map(|(n_cc, n_p, n_s)| {
        let n = n_cc as usize * n_p as usize * n_s;
        // Coarse values so ties occur.
        let vals = || prop::collection::vec((0u32..8).prop_map(|v| v as f64), n);
        (vals(), vals(), vals()).prop_map(move |(t, e, w)| Table {
            keys: (0..n_s as u32).map(|k| SliceKey { pp: 1 + 3 * k, bs: 1 << 20 }).collect(),
            n_cc,
            n_p,
            t,
            e,
            w,
        })
    })
}

proptest! {
    #[test]
    fn solver_matches_exhaustive_search(m in table(), kind in 0usize..3, v in 0u32..9) {
        let kind = [SlaKind::ThroughputGuarantee, SlaKind::TotalEnergyCap, SlaKind::InstantPowerCap][kind];
        let sla = SlaSpec { kind, value: v as f64, epsilon: 0.0 };
        let limits = ParamLimits::new(m.n_cc, m.n_p, 16).unwrap();
        let got: Option<Solution> = solve_sla(&m, &sla, &limits).ok();
        prop_assert_eq!(got.map(|s| (s.params.cc, s.params.p, s.params.pp)), brute(&m, &sla));
    }
}
