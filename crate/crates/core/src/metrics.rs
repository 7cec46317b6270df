//! NPI series, priority histograms and per-run summaries.

use std::ops::Range;

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::controller::Policy;
use crate::meter::NpiValue;
use crate::types::{Core, DmaId, PriorityLevel, PRIORITY_LEVELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("sample at cycle {got} for DMA {dma} precedes last sample at {last}")]
    OutOfOrder { dma: DmaId, last: u64, got: u64 },
    #[error("window contains no samples")]
    EmptyWindow,
    #[error("reports differ beyond policy: {0}")]
    MismatchedScenario(String),
    #[error("unknown DMA {0}")]
    UnknownDma(DmaId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpiSample {
    pub cycle: u64,
    pub npi: NpiValue,
    pub priority: PriorityLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpiSeries {
    pub dma: DmaId,
    pub samples: Vec<NpiSample>,
}

impl NpiSeries {
    pub fn new(dma: DmaId) -> Self {
        NpiSeries { dma, samples: Vec::new() }
    }

    pub fn record(&mut self, sample: NpiSample) -> Result<(), MetricsError> {
        if let Some(last) = self.samples.last() {
            if sample.cycle <= last.cycle {
                return Err(MetricsError::OutOfOrder { dma: self.dma, last: last.cycle, got: sample.cycle });
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    fn in_window(&self, w: &Range<u64>) -> &[NpiSample] {
        let lo = self.samples.partition_point(|s| s.cycle < w.start);
        let hi = self.samples.partition_point(|s| s.cycle < w.end);
        &self.samples[lo..hi]
    }
}

/// One series per DMA, indexed by [`DmaId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSink {
    pub series: Vec<NpiSeries>,
}

impl MetricsSink {
    pub fn new(dmas: usize) -> Self {
        MetricsSink { series: (0..dmas).map(|d| NpiSeries::new(DmaId(d as u16))).collect() }
    }

    pub fn record(&mut self, dma: DmaId, sample: NpiSample) -> Result<(), MetricsError> {
        self.series
            .get_mut(dma.index())
            .ok_or(MetricsError::UnknownDma(dma))?
            .record(sample)
    }
}

pub fn min_npi(series: &NpiSeries, window: Range<u64>) -> Result<NpiValue, MetricsError> {
    series
        .in_window(&window)
        .iter()
        .map(|s| s.npi)
        .min_by(|a, b| a.get().total_cmp(&b.get()))
        .ok_or(MetricsError::EmptyWindow)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorityHistogram {
    pub dma: DmaId,
    pub fraction_of_time: [f64; PRIORITY_LEVELS],
}

impl PriorityHistogram {
    pub fn mean_level(&self) -> f64 {
        self.fraction_of_time.iter().enumerate().map(|(l, f)| l as f64 * f).sum()
    }
}

/// Time-weighted share of each level over `window`. A sample's level holds
/// until the next sample; cycles before the first sample count at level 0,
/// the level every DMA starts at.
pub fn priority_histogram(series: &NpiSeries, window: Range<u64>) -> Result<PriorityHistogram, MetricsError> {
    if window.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    let mut cycles = [0u64; PRIORITY_LEVELS];
    let lo = series.samples.partition_point(|s| s.cycle <= window.start);
    let mut level = if lo > 0 { series.samples[lo - 1].priority.get() } else { 0 };
    let mut at = window.start;
    for s in &series.samples[lo..] {
        if s.cycle >= window.end {
            break;
        }
        cycles[level as usize] += s.cycle - at;
        at = s.cycle;
        level = s.priority.get();
    }
    cycles[level as usize] += window.end - at;
    let total = (window.end - window.start) as f64;
    Ok(PriorityHistogram { dma: series.dma, fraction_of_time: cycles.map(|c| c as f64 / total) })
}

/// Per-DMA outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DmaSummary {
    pub dma: DmaId,
    pub name: String,
    pub core: Core,
    /// `None` when the DMA produced no samples.
    pub min_npi: Option<f64>,
    pub bytes: u64,
    pub mean_bw_bytes_s: f64,
    pub target_bytes_s: f64,
    pub histogram: PriorityHistogram,
    pub max_wait: u64,
}

/// Condensed result of one run, small enough to keep for every point of a
/// sweep or comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: ScenarioConfig,
    pub duration_cycles: u64,
    pub dmas: Vec<DmaSummary>,
    pub total_bytes: u64,
    pub total_bw_bytes_s: f64,
    pub row_hit_rate: f64,
    pub max_wait: u64,
}

impl RunSummary {
    pub fn policy(&self) -> Policy {
        self.scenario.controller.policy
    }

    pub fn dma(&self, name: &str) -> Option<&DmaSummary> {
        self.dmas.iter().find(|d| d.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub policy: Policy,
    pub total_bw_bytes_s: f64,
    pub row_hit_rate: f64,
    /// Relative to the first row.
    pub bw_delta: f64,
    pub min_npi: Vec<(String, Option<f64>)>,
}

/// Lines up runs that differ only in policy.
pub fn policy_comparison(runs: &[RunSummary]) -> Result<Vec<ComparisonRow>, MetricsError> {
    let Some(first) = runs.first() else { return Ok(Vec::new()) };
    let strip = |s: &ScenarioConfig| {
        let mut s = s.clone();
        s.controller.policy = Policy::Qos;
        s.controller.noc_policy = None;
        s
    };
    let base = strip(&first.scenario);
    for r in runs {
        let other = strip(&r.scenario);
        if other.seed != base.seed {
            return Err(MetricsError::MismatchedScenario(format!("seed {} vs {}", other.seed, base.seed)));
        }
        if other != base || r.duration_cycles != first.duration_cycles {
            return Err(MetricsError::MismatchedScenario(format!("`{}` vs `{}`", other.name, base.name)));
        }
    }
    Ok(runs
        .iter()
        .map(|r| ComparisonRow {
            policy: r.policy(),
            total_bw_bytes_s: r.total_bw_bytes_s,
            row_hit_rate: r.row_hit_rate,
            bw_delta: if first.total_bw_bytes_s > 0.0 {
                r.total_bw_bytes_s / first.total_bw_bytes_s - 1.0
            } else {
                0.0
            },
            min_npi: r.dmas.iter().map(|d| (d.name.clone(), d.min_npi)).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(cycle: u64, npi: f64, level: u8) -> NpiSample {
        NpiSample { cycle, npi: NpiValue::clamped(npi), priority: PriorityLevel::new(level).unwrap() }
    }

    fn series(points: &[(u64, f64, u8)]) -> NpiSeries {
        let mut s = NpiSeries::new(DmaId(0));
        for &(c, n, l) in points {
            s.record(sample(c, n, l)).unwrap();
        }
        s
    }

    #[test]
    fn record_order() {
        let mut sink = MetricsSink::new(1);
        sink.record(DmaId(0), sample(100, 1.0, 0)).unwrap();
        sink.record(DmaId(0), sample(200, 1.0, 0)).unwrap();
        assert_eq!(sink.series[0].samples.len(), 2);
        assert!(matches!(sink.record(DmaId(0), sample(150, 1.0, 0)), Err(MetricsError::OutOfOrder { .. })));
    }

    #[test]
    fn min_examples() {
        let s = series(&[(100, 1.0, 0), (200, 1.0, 0)]);
        assert_eq!(min_npi(&s, 0..1000).unwrap().get(), 1.0);
        let s = series(&[(100, 1.2, 0), (200, 0.13, 7), (300, 0.9, 2)]);
        assert_eq!(min_npi(&s, 0..1000).unwrap().get(), 0.13);
        assert_eq!(min_npi(&s, 250..1000).unwrap().get(), 0.9);
        assert_eq!(min_npi(&s, 400..1000), Err(MetricsError::EmptyWindow));
    }

    #[test]
    fn histogram_examples() {
        let s = series(&[(0, 1.0, 0)]);
        assert_eq!(priority_histogram(&s, 0..100).unwrap().fraction_of_time[0], 1.0);
        let s = series(&[(0, 1.0, 0), (50, 0.1, 7)]);
        let h = priority_histogram(&s, 0..100).unwrap();
        assert_eq!(h.fraction_of_time[0], 0.5);
        assert_eq!(h.fraction_of_time[7], 0.5);
        assert_eq!(priority_histogram(&s, 5..5), Err(MetricsError::EmptyWindow));
    }

    proptest! {
        #[test]
        fn histogram_attributes_every_cycle(
            steps in proptest::collection::vec((1u64..50, 0u8..8), 0..40),
            start in 0u64..200,
            len in 1u64..2000,
        ) {
            let mut s = NpiSeries::new(DmaId(0));
            let mut c = 0;
            for (d, l) in &steps {
                c += d;
                s.record(sample(c, 1.0, *l)).unwrap();
            }
            let h = priority_histogram(&s, start..start + len).unwrap();
            let sum: f64 = h.fraction_of_time.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            // brute force: level in force at each cycle
            let mut counts = [0u64; 8];
            for t in start..start + len {
                let lvl = s.samples.iter().rev().find(|x| x.cycle <= t).map_or(0, |x| x.priority.get());
                counts[lvl as usize] += 1;
            }
            for (f, c) in h.fraction_of_time.iter().zip(counts) {
                prop_assert!((f - c as f64 / len as f64).abs() < 1e-9);
            }
        }

        #[test]
        fn min_matches_scan(vals in proptest::collection::vec(0.0f64..16.0, 1..50), a in 0u64..60, b in 0u64..60) {
            let s = series(&vals.iter().enumerate().map(|(i, v)| (i as u64, *v, 0)).collect::<Vec<_>>());
            let (lo, hi) = (a.min(b), a.max(b));
            let expected = vals.iter().enumerate()
                .filter(|(i, _)| (*i as u64) >= lo && (*i as u64) < hi)
                .map(|(_, v)| *v)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
            match expected {
                Some(e) => prop_assert_eq!(min_npi(&s, lo..hi).unwrap().get(), e),
                None => prop_assert_eq!(min_npi(&s, lo..hi), Err(MetricsError::EmptyWindow)),
            }
        }
    }
}
