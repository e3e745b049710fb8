use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use statrs::distribution::{ContinuousCDF, StudentsT};

use posn::config::max_faults;
use posn::consensus::Protocol;
use posn::metrics::{export_run, summary_json, SummaryStats};
use posn::netsim::Scenario;

#[derive(Parser)]
#[command(name = "posn", version, about = "Spiking-neuron consensus simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its summary.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        validators: Option<usize>,
        /// Client arrival rate, tx/s.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        protocol: Option<Protocol>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write summary.json, slots.csv, txs.csv and decisions.jsonl here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a protocol x validators x rate grid over many seeds and print
    /// means with 95% intervals as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated protocols.
        #[arg(long, value_delimiter = ',', default_value = "posn,por,pob")]
        protocols: Vec<Protocol>,
        /// Comma-separated validator counts; defaults to the scenario's.
        #[arg(long, value_delimiter = ',')]
        validators: Vec<usize>,
        /// Comma-separated arrival rates in tx/s; defaults to the scenario's.
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
    },
    /// Print a short report from an exported summary.json.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario; flags below override its values.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    duration_s: Option<f64>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario, String> {
        let mut s = match &self.scenario {
            Some(p) => Scenario::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
            None => Scenario::default(),
        };
        if let Some(d) = self.duration_s {
            s.duration_s = Some(d);
        }
        Ok(s)
    }
}

fn set_validators(s: &mut Scenario, n: usize) {
    s.config.n_validators = n;
    s.config.f_max = max_faults(n);
}

/// Mean and half-width of a two-sided 95% t interval.
fn confidence(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::NAN);
    (mean, t * (var / n).sqrt())
}

fn run(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Run {
            common,
            validators,
            rate,
            protocol,
            seed,
            out_dir,
        } => {
            let mut s = common.scenario()?;
            if let Some(n) = validators {
                set_validators(&mut s, n);
            }
            if let Some(r) = rate {
                s.load.arrival_rate = r;
            }
            if let Some(p) = protocol {
                s.protocol = p;
            }
            if seed.is_some() {
                s.seed = seed;
            }
            let log = s.run().map_err(|e| e.to_string())?;
            if let Some(dir) = out_dir {
                export_run(&log, &dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            }
            print!("{}", summary_json(&log));
            for v in &log.violations {
                eprintln!("violation: {v}");
            }
            Ok(if log.is_clean() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Sweep {
            common,
            protocols,
            validators,
            rates,
            seeds,
            first_seed,
        } => {
            let base = common.scenario()?;
            let validators = if validators.is_empty() { vec![base.config.n_validators] } else { validators };
            let rates = if rates.is_empty() { vec![base.load.arrival_rate] } else { rates };
            let mut dirty = false;
            println!("protocol,validators,rate,seeds,tps_mean,tps_ci95,latency_mean_ms,latency_ci95,skipped_mean");
            for &n in &validators {
                for &rate in &rates {
                    for &p in &protocols {
                        let (mut tps, mut lat, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
                        for seed in first_seed..first_seed + seeds {
                            let mut s = base.clone();
                            set_validators(&mut s, n);
                            s.load.arrival_rate = rate;
                            s.protocol = p;
                            s.seed = Some(seed);
                            let log = s.run().map_err(|e| e.to_string())?;
                            dirty |= !log.is_clean();
                            let st = SummaryStats::from_log(&log);
                            tps.push(st.tps);
                            if let Some(l) = st.latency {
                                lat.push(l.mean_ms);
                            }
                            skipped.push(st.skipped_slots as f64);
                        }
                        let (tm, tc) = confidence(&tps);
                        let (lm, lc) = if lat.is_empty() { (f64::NAN, f64::NAN) } else { confidence(&lat) };
                        let (sm, _) = confidence(&skipped);
                        println!("{},{n},{rate},{seeds},{tm:.3},{tc:.3},{lm:.3},{lc:.3},{sm:.2}", p.name());
                    }
                }
            }
            Ok(if dirty { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Report { out_dir } => {
            let path = out_dir.join("summary.json");
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let s: SummaryStats = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("protocol        {}", s.protocol);
            println!("seed            {}", s.seed);
            println!("validators      {}", s.n_validators);
            println!("slots           {} ({} finalized, {} skipped)", s.slots, s.finalized_slots, s.skipped_slots);
            println!("transactions    {} / {} finalized", s.finalized_txs, s.submitted_txs);
            println!("throughput      {:.2} tx/s", s.tps);
            if let Some(l) = &s.latency {
                println!("latency         mean {:.1} ms, p50 {} ms, p95 {} ms", l.mean_ms, l.p50_ms, l.p95_ms);
            }
            println!("leader entropy  {:.4} / {:.4} bits", s.leader_entropy_bits, s.max_entropy_bits);
            if let Some(c) = &s.chi_square {
                println!("chi-square      {:.3} (dof {}, p = {:.4})", c.statistic, c.dof, c.p_value);
            }
            println!("penalties       {}", s.penalties);
            println!("violations      {}", s.violations.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
