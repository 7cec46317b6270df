use proptest::prelude::*;
use qos_sim::controller::{choose, policy1, Candidate, RrState};
use qos_sim::{run, DmaId, Policy, QueueClass, ScenarioConfig};

fn candidate() -> impl Strategy<Value = Candidate> {
    (0usize..5, 0u16..6, 0u8..=8, any::<bool>(), 0u64..40).prop_map(|(q, s, p, hit, t)| Candidate {
        queue: QueueClass::ALL[q],
        source: DmaId(s),
        priority: p,
        row_hit: hit,
        age: (t, 0),
        urgent_media: false,
    })
}

fn ready_set() -> impl Strategy<Value = Vec<Candidate>> {
    proptest::collection::vec(candidate(), 1..=8).prop_map(|mut c| {
        for (i, x) in c.iter_mut().enumerate() {
            x.age.1 = i as u64;
        }
        c
    })
}

fn rr_state() -> impl Strategy<Value = RrState> {
    (0usize..5, prop_oneof![Just(u16::MAX), 0u16..6]).prop_map(|(queue, source)| RrState { queue, source })
}

/// Walks the source ring after the last served source and takes the first
/// source with a top-priority candidate, oldest first.
fn literal_policy1(rr: &RrState, c: &[Candidate]) -> Option<usize> {
    let top = c.iter().map(|x| x.priority).max()?;
    let mut order: Vec<u16> = (0..6).collect();
    order.rotate_left(if rr.source == u16::MAX { 0 } else { (rr.source as usize + 1) % 6 });
    order.into_iter().find_map(|s| {
        (0..c.len()).filter(|&i| c[i].priority == top && c[i].source.0 == s).min_by_key(|&i| c[i].age)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn policy1_matches_literal_reading(c in ready_set(), rr in rr_state()) {
        prop_assert_eq!(policy1(&rr, &c), literal_policy1(&rr, &c));
        prop_assert_eq!(choose(Policy::Qos, 6, &rr, &c), literal_policy1(&rr, &c));
    }

    #[test]
    fn policy2_prefers_hits_below_delta(mut c in ready_set(), rr in rr_state(), delta in 1u8..=8) {
        for x in &mut c {
            x.priority %= delta;
        }
        let i = choose(Policy::QosRb, delta, &rr, &c).unwrap();
        prop_assert_eq!(c[i].row_hit, c.iter().any(|x| x.row_hit));
        if c[i].row_hit {
            prop_assert!(c.iter().filter(|x| x.row_hit).all(|x| x.age >= c[i].age));
        }
    }

    #[test]
    fn policy2_preserves_qos(c in ready_set(), rr in rr_state(), delta in 0u8..=8) {
        let high = c.iter().any(|x| x.priority >= delta);
        let unequal = c.iter().any(|x| x.priority != c[0].priority);
        prop_assume!(high && unequal);
        prop_assert_eq!(choose(Policy::QosRb, delta, &rr, &c), choose(Policy::Qos, delta, &rr, &c));
    }

    #[test]
    fn fr_fcfs_takes_a_hit_when_one_is_ready(c in ready_set(), rr in rr_state()) {
        let i = choose(Policy::FrFcfs, 6, &rr, &c).unwrap();
        if c.iter().any(|x| x.row_hit) {
            prop_assert!(c[i].row_hit);
            prop_assert!(c.iter().filter(|x| x.row_hit).all(|x| x.age >= c[i].age));
        } else {
            prop_assert!(c.iter().all(|x| x.age >= c[i].age));
        }
    }

    #[test]
    fn every_policy_picks_from_a_nonempty_set(c in ready_set(), rr in rr_state()) {
        for p in Policy::ALL {
            let i = choose(p, 6, &rr, &c);
            prop_assert!(i.is_some_and(|i| i < c.len()));
        }
    }

    #[test]
    fn aged_transactions_win_under_qos(c in ready_set(), rr in rr_state()) {
        let i = choose(Policy::Qos, 6, &rr, &c).unwrap();
        if c.iter().any(|x| x.priority == 8) {
            prop_assert_eq!(c[i].priority, 8);
        }
    }
}

fn flood(seed: u64, flooders: usize) -> ScenarioConfig {
    let mut text = format!(
        r#"
name = "flood"
seed = {seed}
duration_cycles = 300000

[dram]
channels = 1

[controller]
policy = "QOS"
aging_period = 10000

[[dma]]
name = "victim"
core = "audio"
source = "bandwidth_stream"
rate_bytes_per_s = 2e7
locality = 0.0
meter = {{ kind = "bandwidth", target_bytes_per_s = 1.0 }}
"#
    );
    for i in 0..flooders {
        let core = ["gpu", "wifi", "usb", "modem", "dsp", "jpeg"][i];
        text += &format!(
            r#"
[[dma]]
name = "flood{i}"
core = "{core}"
source = "bandwidth_stream"
rate_bytes_per_s = 4e9
locality = {locality}
meter = {{ kind = "bandwidth", target_bytes_per_s = 1e12 }}
"#,
            locality = (i % 3) as f64 * 0.4
        );
    }
    ScenarioConfig::parse(&text).unwrap()
}

#[test]
fn starvation_bound_holds_across_floods() {
    for (seed, flooders) in [(1, 3), (2, 4), (3, 6)] {
        for policy in [Policy::Qos, Policy::QosRb] {
            let mut s = flood(seed, flooders);
            s.controller.policy = policy;
            let r = run(&s, s.duration_cycles).unwrap();
            let bound = 2 * s.controller.aging_period + s.controller.capacity as u64 * 112;
            let victim = &r.dmas[0];
            assert!(victim.bytes > 0, "{policy} seed {seed}: victim never served");
            assert!(victim.max_wait <= bound, "{policy} seed {seed}: wait {} > {bound}", victim.max_wait);
        }
    }
}
