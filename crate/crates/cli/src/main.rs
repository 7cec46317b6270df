use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use qos_sim::harness::{self, Exec};
use qos_sim::metrics::RunSummary;
use qos_sim::{ConfigError, Core, DataflowCase, Error, Policy, ScenarioConfig};

/// Cycle-level shared-memory QoS simulator.
#[derive(Parser)]
#[command(name = "qos-sim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file, or `case-a` / `case-b` for the shipped scenarios.
    config: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of simulated cycles.
    #[arg(long)]
    duration: Option<u64>,
    /// Directory for CSV output.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Run one simulation at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario under its configured policy (or --policy).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<String>,
    },
    /// Simulate the same scenario under several policies.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated policy names.
        #[arg(long, default_value = "FCFS,RR,FRAME_QOS,QOS,QOS_RB,FR_FCFS")]
        policies: String,
    },
    /// Sweep the DRAM I/O frequency and report one DMA's priority histogram.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated frequencies in MHz.
        #[arg(long, default_value = "1700,1600,1500,1400,1300")]
        freqs: String,
        #[arg(long, default_value = "image_processor")]
        dma: String,
    },
    /// Parse, validate and print a scenario with every default filled in.
    EchoConfig { config: String },
    /// List the known cores with their queue and performance objective.
    ListCores,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load(path: &str) -> Result<ScenarioConfig, Failure> {
    match path {
        "case-a" => Ok(ScenarioConfig::shipped(DataflowCase::A)),
        "case-b" => Ok(ScenarioConfig::shipped(DataflowCase::B)),
        _ => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{path}: {e}")))?;
            Ok(ScenarioConfig::parse(&text)?)
        }
    }
}

fn prepare(c: &Common) -> Result<(ScenarioConfig, u64, Exec), Failure> {
    let mut s = load(&c.config)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(d) = c.duration {
        if d == 0 {
            return Err(Failure::Config("invalid `duration`: must be > 0".into()));
        }
        s.duration_cycles = d;
    }
    let exec = if c.sequential { Exec::Sequential } else { Exec::default() };
    Ok((s.clone(), s.duration_cycles, exec))
}

fn parse_policies(list: &str) -> Result<Vec<Policy>, Failure> {
    list.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| Policy::parse(p).ok_or_else(|| Failure::Config(format!("unknown policy `{p}`"))))
        .collect()
}

fn print_summaries(runs: &[RunSummary]) {
    for r in runs {
        println!(
            "{:<10} total {:>8.3} GB/s  row hits {:>5.1}%  max wait {} cycles",
            r.policy().name(),
            r.total_bw_bytes_s / 1e9,
            r.row_hit_rate * 100.0,
            r.max_wait
        );
        for d in &r.dmas {
            let npi = d.min_npi.map_or("-".to_string(), |n| format!("{n:.3}"));
            let flag = if d.min_npi.is_some_and(|n| n < 1.0) { "  below target" } else { "" };
            println!(
                "  {:<16} min NPI {:>6}  {:>9.1} MB/s  mean priority {:.2}{}",
                d.name,
                npi,
                d.mean_bw_bytes_s / 1e6,
                d.histogram.mean_level(),
                flag
            );
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { common, policy } => {
            let (mut s, duration, exec) = prepare(&common)?;
            if let Some(p) = policy {
                s.controller.policy = parse_policies(&p)?.first().copied().unwrap_or(s.controller.policy);
            }
            let started = Instant::now();
            let runs = harness::run_comparison(&s, &[s.controller.policy], duration, common.out.as_deref(), exec)?;
            print_summaries(&runs);
            eprintln!("simulated {duration} cycles in {:.1} s", started.elapsed().as_secs_f64());
        }
        Cmd::Compare { common, policies } => {
            let (s, duration, exec) = prepare(&common)?;
            let policies = parse_policies(&policies)?;
            let started = Instant::now();
            let runs = harness::run_comparison(&s, &policies, duration, common.out.as_deref(), exec)?;
            print_summaries(&runs);
            eprintln!("{} runs in {:.1} s", runs.len(), started.elapsed().as_secs_f64());
        }
        Cmd::Sweep { common, freqs, dma } => {
            let (mut s, duration, exec) = prepare(&common)?;
            s.duration_cycles = duration;
            let freqs = freqs
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|_| Failure::Config(format!("bad frequency `{f}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = harness::run_sweep(&s, &freqs, &dma, common.out.as_deref(), exec)?;
            for r in rows {
                let shares: Vec<String> = r.histogram.fraction_of_time.iter().map(|f| format!("{:.2}", f)).collect();
                println!(
                    "{:>7.0} MHz  {}  levels [{}]  mean {:.2}  {:.1} MB/s (target {:.1})",
                    r.io_freq_mhz,
                    r.dma,
                    shares.join(" "),
                    r.mean_priority,
                    r.mean_bw_bytes_s / 1e6,
                    r.target_bytes_s / 1e6
                );
            }
        }
        Cmd::EchoConfig { config } => print!("{}", load(&config)?.emit()),
        Cmd::ListCores => {
            for c in Core::CAMCORDER.iter().chain([Core::Cpu].iter()) {
                println!("{:<16} {:<7} {}", c.name(), c.queue_class().name(), c.performance_type());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
