//! Experiment orchestration: policy comparisons, frequency sweeps and CSV
//! output.
//!
//! Independent runs may execute concurrently (feature `parallel`). Files are
//! named by policy or frequency, never by completion order, so output is
//! identical either way.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::{ConfigError, ScenarioConfig};
use crate::controller::Policy;
use crate::metrics::{RunSummary, PriorityHistogram};
use crate::sim::{run, SimulationReport};
use crate::types::PRIORITY_LEVELS;
use crate::Error;

/// How a batch of independent runs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_runs<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

/// NPI samples of one DMA: `cycle,dma,npi,priority`, every `stride`-th sample.
pub fn write_npi_csv(w: impl Write, report: &SimulationReport, dma: usize, stride: u64) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cycle", "dma", "npi", "priority"])?;
    let name = &report.dmas[dma].spec.name;
    for s in report.npi_series[dma].samples.iter().step_by(stride.max(1) as usize) {
        out.write_record([s.cycle.to_string(), name.clone(), f6(s.npi.get()), s.priority.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Completed bytes per bucket: `bucket_start_cycle,dma,bytes`.
pub fn write_bandwidth_csv(w: impl Write, report: &SimulationReport) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bucket_start_cycle", "dma", "bytes"])?;
    let width = report.scenario.output.bandwidth_bucket_cycles;
    let buckets = report.duration_cycles.div_ceil(width) as usize;
    for d in &report.dmas {
        for b in 0..buckets {
            let bytes = d.bandwidth_series.get(b).copied().unwrap_or(0);
            out.write_record([(b as u64 * width).to_string(), d.spec.name.clone(), bytes.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `policy,dma,min_npi,mean_bw_bytes_s,total_bw_bytes_s,row_hit_rate`.
pub fn write_summary_csv(w: impl Write, runs: &[RunSummary]) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["policy", "dma", "min_npi", "mean_bw_bytes_s", "total_bw_bytes_s", "row_hit_rate"])?;
    for r in runs {
        for d in &r.dmas {
            out.write_record([
                r.policy().name().to_string(),
                d.name.clone(),
                d.min_npi.map(f6).unwrap_or_default(),
                f6(d.mean_bw_bytes_s),
                f6(r.total_bw_bytes_s),
                f6(r.row_hit_rate),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the per-DMA series of one run into `dir`.
pub fn write_run_dir(dir: &Path, report: &SimulationReport) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let stride = report.scenario.output.series_stride;
    for (i, d) in report.dmas.iter().enumerate() {
        let f = fs::File::create(dir.join(format!("npi_{}.csv", d.spec.name)))?;
        write_npi_csv(std::io::BufWriter::new(f), report, i, stride)?;
    }
    let f = fs::File::create(dir.join("bandwidth.csv"))?;
    write_bandwidth_csv(std::io::BufWriter::new(f), report)?;
    let f = fs::File::create(dir.join("summary.csv"))?;
    write_summary_csv(std::io::BufWriter::new(f), &[report.summarize()])?;
    Ok(())
}

/// Runs `scenario` once per policy. With `out_dir`, writes one directory per
/// policy plus `summary.csv`. Full reports are dropped after summarizing.
pub fn run_comparison(
    scenario: &ScenarioConfig,
    policies: &[Policy],
    duration_cycles: u64,
    out_dir: Option<&Path>,
    exec: Exec,
) -> Result<Vec<RunSummary>, Error> {
    if policies.is_empty() {
        return Ok(Vec::new());
    }
    let results = map_runs(exec, policies, |&p| -> Result<RunSummary, Error> {
        let mut s = scenario.clone();
        s.controller.policy = p;
        let report = run(&s, duration_cycles)?;
        if let Some(dir) = out_dir {
            write_run_dir(&dir.join(p.name()), &report)?;
        }
        Ok(report.summarize())
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let f = fs::File::create(dir.join("summary.csv"))?;
        write_summary_csv(std::io::BufWriter::new(f), &runs)?;
    }
    Ok(runs)
}

/// One frequency point of a sweep for the designated DMA.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub io_freq_mhz: f64,
    pub dma: String,
    pub histogram: PriorityHistogram,
    pub mean_priority: f64,
    pub mean_bw_bytes_s: f64,
    pub target_bytes_s: f64,
}

/// Runs `scenario` at each DRAM I/O frequency, scaling the duration so every
/// point covers the same simulated time.
pub fn run_sweep(
    scenario: &ScenarioConfig,
    freqs_mhz: &[f64],
    dma: &str,
    out_dir: Option<&Path>,
    exec: Exec,
) -> Result<Vec<SweepRow>, Error> {
    if let Some(f) = freqs_mhz.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(ConfigError::Validation { key: "frequency".into(), message: format!("{f} is not > 0") }.into());
    }
    if !scenario.dmas.iter().any(|d| d.name == dma) {
        return Err(ConfigError::Validation { key: "dma".into(), message: format!("no DMA named `{dma}`") }.into());
    }
    let results = map_runs(exec, freqs_mhz, |&f| -> Result<SweepRow, Error> {
        let s = scenario.with_io_freq(f);
        let summary = run(&s, s.duration_cycles)?.summarize();
        let d = summary.dma(dma).expect("DMA checked above");
        Ok(SweepRow {
            io_freq_mhz: f,
            dma: dma.to_string(),
            mean_priority: d.histogram.mean_level(),
            histogram: d.histogram.clone(),
            mean_bw_bytes_s: d.mean_bw_bytes_s,
            target_bytes_s: d.target_bytes_s,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let f = fs::File::create(dir.join("sweep.csv"))?;
        write_sweep_csv(std::io::BufWriter::new(f), &rows)?;
    }
    Ok(rows)
}

/// `io_freq_mhz,dma,level_0..level_7,mean_priority,mean_bw_bytes_s,target_bytes_s`.
pub fn write_sweep_csv(w: impl Write, rows: &[SweepRow]) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["io_freq_mhz".to_string(), "dma".to_string()];
    header.extend((0..PRIORITY_LEVELS).map(|l| format!("level_{l}")));
    header.extend(["mean_priority", "mean_bw_bytes_s", "target_bytes_s"].map(String::from));
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![f6(r.io_freq_mhz), r.dma.clone()];
        rec.extend(r.histogram.fraction_of_time.iter().map(|f| f6(*f)));
        rec.extend([f6(r.mean_priority), f6(r.mean_bw_bytes_s), f6(r.target_bytes_s)]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_runs_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        let seq = map_runs(Exec::Sequential, &items, |x| x * x);
        let par = map_runs(Exec::Parallel, &items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn empty_policy_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let s = ScenarioConfig::shipped(crate::DataflowCase::A);
        let out = run_comparison(&s, &[], 10, Some(dir.path()), Exec::Sequential).unwrap();
        assert!(out.is_empty());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn sweep_rejects_non_positive_frequency() {
        let s = ScenarioConfig::shipped(crate::DataflowCase::A);
        assert!(run_sweep(&s, &[1700.0, 0.0], "image_processor", None, Exec::Sequential).is_err());
    }
}
