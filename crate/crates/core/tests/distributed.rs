mod common;

use common::{cache, ctx, obs};
use gdf_core::control::distributed::{TunerConfig, TunerState};
use gdf_core::control::{power_group, ActionKind};
use gdf_core::offline::OfflineError;
use gdf_core::{SlaKind, SlaSpec};

fn tuner(sla: SlaSpec, config: &TunerConfig) -> TunerState {
    TunerState::init("t1", sla, &cache(), 0, &ctx(), config, 1e9).unwrap()
}

fn plain() -> TunerConfig {
    TunerConfig { opportunistic: false, ..TunerConfig::default() }
}

#[test]
fn in_band_throughput_is_a_noop() {
    let config = plain();
    let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e8, 2.5e7).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    for k in 0..6 {
        let acts = s.on_tick(k as f64, &obs("t1", 5.1e8, 0.01, 0.0), &c, &config);
        assert_eq!(acts.len(), 1, "tick {k}: {acts:?}");
        assert_eq!(acts[0].kind, ActionKind::NoOp);
    }
}

#[test]
fn init_uses_median_solution_meeting_the_level() {
    let config = plain();
    let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e8, 2.5e7).unwrap();
    let s = tuner(sla, &config);
    // 5e8 maps to the level at 5.625e8.
    assert!(s.t_pred >= 5.625e8);
    assert!(s.current.within(&s.limits));
    let infeasible = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e9, 1e8).unwrap();
    let err = TunerState::init("t1", infeasible, &cache(), 0, &ctx(), &config, 1e9).unwrap_err();
    assert!(matches!(err, OfflineError::Infeasible(_)));
}

#[test]
fn sustained_loss_cuts_concurrency_by_beta2() {
    let config = plain();
    let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e8, 2.5e7).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    let mut cuts = Vec::new();
    for k in 0..30 {
        let acts = s.on_tick(k as f64, &obs("t1", 5e8, 0.01, 0.05), &c, &config);
        if let Some(a) = acts.iter().find(|a| a.kind == ActionKind::Backoff) {
            cuts.push((k, a.params.cc));
        }
        assert!(s.limits.cc_limit >= 1 && s.limits.p_limit >= 1);
    }
    // floor(8 * 0.75) = 6, then 4, 3, 2, 1; every third tick.
    assert_eq!(cuts, vec![(2, 6), (5, 4), (8, 3), (11, 2), (14, 1)]);
    assert_eq!(s.limits.cc_limit, 1);
    assert_eq!(s.limits.p_limit, 8);
}

#[test]
fn delay_drop_cuts_parallelism_and_limits_recover_additively() {
    let config = plain();
    let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e8, 2.5e7).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    for k in 0..10 {
        s.on_tick(k as f64, &obs("t1", 5e8, 0.02, 0.0), &c, &config);
    }
    // Delay far below its recent mean for the dwell period.
    for k in 10..13 {
        s.on_tick(k as f64, &obs("t1", 5e8, 0.001, 0.0), &c, &config);
    }
    assert_eq!(s.limits.p_limit, 6);
    assert_eq!(s.limits.cc_limit, 8);
    s.on_tick(13.0, &obs("t1", 5e8, 0.001, 0.0), &c, &config);
    assert_eq!(s.limits.p_limit, 7);
    s.on_tick(14.0, &obs("t1", 5e8, 0.001, 0.0), &c, &config);
    assert_eq!(s.limits.p_limit, 8);
}

#[test]
fn inverted_delay_trigger_fires_on_rising_delay() {
    let config = TunerConfig { invert_delay_trigger: true, ..plain() };
    let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 5e8, 2.5e7).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    for k in 0..5 {
        s.on_tick(k as f64, &obs("t1", 5e8, 0.02, 0.0), &c, &config);
    }
    for k in 5..8 {
        s.on_tick(k as f64, &obs("t1", 5e8, 0.2, 0.0), &c, &config);
    }
    assert_eq!(s.limits.p_limit, 6);
}

#[test]
fn shortfall_raises_the_goal_above_the_guarantee() {
    let config = plain();
    let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 3e8, 1.5e7).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    s.on_tick(0.0, &obs("t1", 3e8, 0.01, 0.0), &c, &config);
    let acts = s.on_tick(1.0, &obs("t1", 2e8, 0.01, 0.0), &c, &config);
    assert_eq!(s.t_goal, 3e8 + (3e8 - 2e8));
    assert!(acts.iter().all(|a| a.reason == "below"));
}

#[test]
fn opportunistic_goal_adds_fill_rate_and_credit_is_capped() {
    let config = TunerConfig::default();
    let sla = SlaSpec::new(SlaKind::ThroughputGuarantee, 3e8, 1.5e7).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    for k in 0..200 {
        s.on_tick(k as f64, &obs("t1", 6e8, 0.01, 0.0), &c, &config);
        assert!(s.throughput_buffer >= 0.0);
    }
    let cap = 1.5e7 * config.buffer_seconds;
    assert!((s.throughput_buffer - cap).abs() < 1e-6);
    // A full buffer leaves nothing to fill.
    assert!((s.t_goal - 3e8).abs() < 1e-6);
}

#[test]
fn efficient_energy_transfer_tightens_its_group() {
    let config = TunerConfig::default();
    let sla = SlaSpec::new(SlaKind::TotalEnergyCap, 4e3, 0.0).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    let start = s.group;
    let mut groups = Vec::new();
    for k in 0..10 {
        let mut o = obs("t1", 5e8, 0.01, 0.0);
        o.bytes_done = 1e8 * (k + 1) as f64;
        for a in s.on_tick(k as f64, &o, &c, &config) {
            if a.kind == ActionKind::SetGroup {
                groups.push(a.group);
            }
        }
    }
    assert!(!groups.is_empty());
    assert!(groups.iter().all(|&g| g < start));
}

#[test]
fn overspending_energy_transfer_returns_to_home_group() {
    let config = TunerConfig::default();
    let sla = SlaSpec::new(SlaKind::TotalEnergyCap, 4e3, 0.0).unwrap();
    let mut s = tuner(sla, &config);
    let c = cache();
    let home = s.home_group;
    for k in 0..12 {
        let mut o = obs("t1", 5e8, 0.01, 0.0);
        o.bytes_done = 1e8 * (k + 1) as f64;
        s.on_tick(k as f64, &o, &c, &config);
    }
    assert!(s.group < home);
    // Far more joules than bytes justify.
    let mut o = obs("t1", 5e8, 0.01, 0.0);
    o.watts = 1e6;
    o.bytes_done = 1.3e9;
    let acts = s.on_tick(12.0, &o, &c, &config);
    assert_eq!(s.group, home);
    assert!(acts.iter().any(|a| a.kind == ActionKind::SetGroup && a.group == home));
}

#[test]
fn power_capped_transfer_stays_in_a_safe_group() {
    let config = TunerConfig::default();
    let ctx = ctx();
    let c = cache();
    for cap in [250.0, 300.0] {
        let sla = SlaSpec::new(SlaKind::InstantPowerCap, cap, 0.0).unwrap();
        let mut s = TunerState::init("t1", sla, &c, 0, &ctx, &config, 1e9).unwrap();
        let g = power_group(&ctx, &c.limits, ctx.link.buffer, cap).unwrap();
        assert_eq!(s.group, g);
        let streams = c.limits.cc_limit * c.limits.p_limit;
        let peak = ctx.host.peak_watts(&ctx.groups[g], c.limits.cc_limit, streams, ctx.link.buffer, ctx.link.bandwidth, ctx.mss_bytes);
        assert!(peak <= cap);
        for k in 0..20 {
            s.on_tick(k as f64, &obs("t1", 1e9, 0.01, 0.0), &c, &config);
            assert!(s.group <= g);
        }
    }
}
