use std::collections::HashSet;

use qos_sim::harness::write_summary_csv;
use qos_sim::traffic::TXN_BYTES;
use qos_sim::{run, run_with, DataflowCase, Policy, ScenarioConfig, SimOptions, World};

const LONE_PROBE: &str = r#"
name = "lone"
seed = 3
duration_cycles = 200000

[controller]
policy = "QOS"

[[dma]]
name = "probe"
core = "dsp"
source = "latency_probe"
rate_bytes_per_s = 1e6
meter = { kind = "latency", limit_ns = 500.0 }
"#;

fn short_case(case: DataflowCase, policy: Policy) -> ScenarioConfig {
    let mut s = ScenarioConfig::shipped(case);
    s.controller.policy = policy;
    s
}

fn summary_bytes(s: &ScenarioConfig, cycles: u64) -> Vec<u8> {
    let mut out = Vec::new();
    write_summary_csv(&mut out, &[run(s, cycles).unwrap().summarize()]).unwrap();
    out
}

#[test]
fn transactions_are_conserved() {
    for policy in Policy::ALL {
        let s = short_case(DataflowCase::A, policy);
        let mut w = World::new(&s, SimOptions { record_completions: true, record_commands: false }).unwrap();
        for cycle in 0..60_000u64 {
            w.step().unwrap();
            if cycle % 5_000 == 0 {
                assert_eq!(w.generated(), w.completed() + w.resident(), "{policy} at {cycle}");
            }
        }
        let report = w.into_report();
        let records = report.completions.as_ref().unwrap();
        let ids: HashSet<u64> = records.iter().map(|r| r.id).collect();
        assert_eq!(ids.len(), records.len(), "{policy}: duplicated completion");
        assert_eq!(records.len() as u64, report.completed);
        assert_eq!(report.generated, report.completed + report.resident);
        for r in records {
            assert!(r.t_created <= r.t_enqueued && r.t_enqueued <= r.t_issued && r.t_issued < r.t_completed);
        }
    }
}

#[test]
fn same_seed_same_summary() {
    let s = short_case(DataflowCase::B, Policy::QosRb);
    assert_eq!(summary_bytes(&s, 100_000), summary_bytes(&s, 100_000));
}

#[test]
fn seed_changes_traffic() {
    let s = short_case(DataflowCase::A, Policy::Qos);
    let mut t = s.clone();
    t.seed += 1;
    assert_ne!(summary_bytes(&s, 100_000), summary_bytes(&t, 100_000));
}

#[test]
fn per_dma_bytes_add_up_to_dram_bytes() {
    for policy in [Policy::Fcfs, Policy::QosRb] {
        let r = run(&short_case(DataflowCase::A, policy), 100_000).unwrap();
        let per_dma: u64 = r.dmas.iter().map(|d| d.bytes).sum();
        let dram: u64 = r.channel_stats.iter().map(|c| c.bytes).sum();
        assert_eq!(per_dma, r.total_bytes);
        let in_flight = dram - r.total_bytes;
        // at most one issue per channel per cycle, each in flight for a few hundred cycles
        assert!(in_flight <= r.channel_stats.len() as u64 * 224 * TXN_BYTES as u64, "{in_flight}");
        assert_eq!(in_flight % TXN_BYTES as u64, 0);
        assert!(r.total_bytes > 0);
    }
}

#[test]
fn empty_world_stays_empty() {
    let text = LONE_PROBE.split("[[dma]]").next().unwrap();
    let s = ScenarioConfig::parse(text).unwrap();
    let r = run(&s, 10_000).unwrap();
    assert_eq!(r.generated, 0);
    assert_eq!(r.total_bytes, 0);
    assert_eq!(r.max_wait, 0);
    assert!(r.dmas.is_empty());
}

#[test]
fn lone_transaction_issues_on_arrival() {
    let s = ScenarioConfig::parse(LONE_PROBE).unwrap();
    let r = run_with(&s, s.duration_cycles, SimOptions { record_completions: true, record_commands: false }).unwrap();
    let records = r.completions.unwrap();
    assert!(!records.is_empty());
    for c in &records {
        assert_eq!(c.t_issued, c.t_enqueued, "{c:?}");
    }
}

#[test]
fn constant_rate_dma_on_idle_channel_meets_target() {
    // one YUV420 1080p frame per 1/30 s
    let text = r#"
name = "idle"
seed = 5
duration_cycles = 2000000

[controller]
policy = "QOS"

[[dma]]
name = "camera"
core = "camera"
source = "constant_rate"
rate_bytes_per_s = 93312000.0
locality = 0.9
read_fraction = 0.0
meter = { kind = "occupancy", buffer_bytes = 16384.0, initial_fraction = 0.5, direction = "fill" }
"#;
    let s = ScenarioConfig::parse(text).unwrap();
    let summary = run(&s, s.duration_cycles).unwrap().summarize();
    let cam = summary.dma("camera").unwrap();
    assert!(cam.min_npi.unwrap() >= 1.0, "{:?}", cam.min_npi);
    // the sensor's stream plus the half-full buffer it starts with
    let seconds = s.duration_cycles as f64 / s.dram.command_clock_hz();
    let written = cam.mean_bw_bytes_s * seconds;
    let expected = 93_312_000.0 * seconds + 8192.0;
    assert!((written - expected).abs() < 0.01 * expected, "{written} vs {expected}");
}

#[test]
fn priorities_stay_in_range() {
    let s = short_case(DataflowCase::A, Policy::Qos);
    let r = run(&s, 50_000).unwrap();
    for h in &r.histograms {
        let total: f64 = h.fraction_of_time.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    for series in &r.npi_series {
        assert!(series.samples.windows(2).all(|w| w[0].cycle < w[1].cycle));
        assert!(series.samples.iter().all(|s| s.priority.get() <= 7 && s.npi.get().is_finite()));
    }
}
