use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use baxos::backoff::{monte_carlo_single_winner, termination_probability, Scheme};
use baxos::export::ExportedRun;
use baxos::multipaxos::ViewTimeoutPolicy;
use baxos::runner::{replay, run_to_dir, sweep, SweepAxis, SweepRow, ARTIFACTS};
use baxos::scenario::{Protocol, Scenario};
use baxos::simnet::US_PER_S;
use baxos::verify::verify;
use baxos::Error;

/// Output root used when `--out` is not given.
const OUT_ENV: &str = "BAXOS_OUT";

#[derive(Parser)]
#[command(name = "baxos", version, about = "Baxos and Multi-Paxos simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        /// Preset name or TOML file.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to `$BAXOS_OUT/<name>-<protocol>-seed<N>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check the decided logs of one or more run directories.
    Verify {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Run one scenario across axis values and seeds.
    Sweep {
        scenario: String,
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// `1,2,3`, `1..8` or a count such as `5`.
        #[arg(long, default_value = "1..5")]
        seeds: String,
        /// CSV file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-dispatch a recorded run and print replica state at a cut point.
    Replay {
        /// Run directory or its trace.log.
        trace: PathBuf,
        /// Cut point in seconds; the whole run when absent.
        #[arg(long)]
        until: Option<f64>,
    },
    /// Termination probability table with Monte Carlo estimates.
    Prob {
        #[arg(long, default_value_t = 10)]
        max_level: u32,
        #[arg(long, default_value_t = 9)]
        max_proposers: u32,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<Protocol>,
    /// Piggyback the next choice's Prepare on each Propose.
    #[arg(long)]
    piggyback: Option<Toggle>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// `MS`, `fixed:MS` or `exp:MS[:JITTER_MS]`.
    #[arg(long, value_parser = parse_view_timeout)]
    view_timeout: Option<ViewTimeoutPolicy>,
    /// Horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_view_timeout(s: &str) -> Result<ViewTimeoutPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn seconds(s: f64, field: &str) -> Result<u64, Error> {
    if s.is_finite() && s >= 0.0 {
        Ok((s * US_PER_S as f64).round() as u64)
    } else {
        Err(Error::validation(
            field,
            format!("expected non-negative seconds, got {s}"),
        ))
    }
}

impl Overrides {
    fn apply(&self, mut s: Scenario) -> Result<Scenario, Error> {
        if let Some(p) = self.protocol {
            s = s.with_protocol(p);
        }
        if let Some(t) = self.piggyback {
            s = s.with_piggyback(matches!(t, Toggle::On));
        }
        if let Some(scheme) = self.scheme {
            s = s.with_scheme(scheme);
        }
        if let Some(v) = self.view_timeout {
            s = s.with_view_timeout(v);
        }
        if let Some(h) = self.horizon {
            s = s.with_horizon(seconds(h, "--horizon")?);
        }
        s.validate()?;
        Ok(s)
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Parse {
        what: "--seeds".into(),
        message: format!("expected `1,2,3`, `A..B` or a count, got `{s}`"),
    };
    let num = |v: &str| v.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        (a..=b).collect()
    } else if s.contains(',') {
        s.split(',').map(num).collect::<Result<_, _>>()?
    } else {
        (1..=num(s)?).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn ms(us: Option<u64>) -> String {
    us.map_or("-".into(), |v| format!("{:.1} ms", v as f64 / 1e3))
}

fn run(
    scenario: &str,
    seed: Option<u64>,
    out: Option<PathBuf>,
    o: &Overrides,
) -> Result<(), Error> {
    let mut s = o.apply(Scenario::resolve(scenario)?)?;
    if let Some(seed) = seed {
        s = s.with_seed(seed);
    }
    let dir = out.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from);
        root.join(format!("{}-{}-seed{}", s.name, s.protocol.name(), s.seed()))
    });
    for a in &s.adjustments {
        eprintln!("note: {a}");
    }
    let (manifest, _) = run_to_dir(&s, &dir)?;
    let r = &manifest.report;
    println!(
        "{} ({}, seed {}) -> {}",
        s.name,
        s.protocol.name(),
        s.seed(),
        dir.display()
    );
    if let Some(m) = &r.summary {
        println!(
            "  submitted {}  committed {}  failed {}  censored {}",
            m.submitted, m.committed, m.failed, m.censored
        );
        println!(
            "  throughput {:.1}/s  median {}  p99 {}",
            m.throughput,
            ms(m.median_us),
            ms(m.p99_us)
        );
    }
    println!(
        "  retries/commit {}  commit gini {:.3}  byte-rate stddev {:.1} kB/s",
        r.retries_per_commit
            .map_or("-".into(), |v| format!("{v:.3}")),
        r.commit_gini,
        r.byte_rate_stddev_kbps
    );
    println!("  trace {} lines, sha256 {}", r.trace_lines, r.trace_digest);
    Ok(())
}

fn verify_dirs(dirs: &[PathBuf]) -> Result<bool, Error> {
    let mut clean = true;
    for dir in dirs {
        let path = if dir.is_dir() {
            dir.join(ARTIFACTS[3])
        } else {
            dir.clone()
        };
        let report = verify(&ExportedRun::read(&path)?);
        match report.first() {
            None => println!(
                "{}: ok ({} replicas, {} entries, {} requests)",
                dir.display(),
                report.replicas,
                report.entries,
                report.requests
            ),
            Some(v) => {
                clean = false;
                println!("{}: VIOLATION {v}", dir.display());
                for other in &report.violations[1..] {
                    println!("  also {other}");
                }
            }
        }
    }
    Ok(clean)
}

fn run_sweep(
    scenario: &str,
    axis: SweepAxis,
    values: &[String],
    seeds: &str,
    out: Option<&Path>,
    o: &Overrides,
) -> Result<(), Error> {
    let template = o.apply(Scenario::resolve(scenario)?)?;
    let seeds = parse_seeds(seeds)?;
    let result = sweep(&template, axis, values, &seeds);
    let mut text = String::from(SweepRow::CSV_HEADER);
    text.push('\n');
    for row in &result.rows {
        text.push_str(&row.csv());
        text.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, &text).map_err(|e| Error::io(p, e))?,
        None => print!("{text}"),
    }
    match result.failure {
        Some((value, e)) => {
            eprintln!("sweep stopped at {}={value}", axis.name());
            Err(e)
        }
        None => Ok(()),
    }
}

fn run_replay(trace: &Path, until: Option<f64>) -> Result<(), Error> {
    let until = match until {
        Some(s) => seconds(s, "--until")?,
        None => u64::MAX,
    };
    let r = replay(trace, until)?;
    println!(
        "replayed to {:.3} s, {} trace lines matched",
        r.until_us as f64 / US_PER_S as f64,
        r.lines_matched
    );
    for (dump, st) in r.dumps.iter().zip(&r.stats) {
        print!("{dump}");
        println!(
            "  stats proposals={} retries={} own_commits={} fast_path={} elections={}",
            st.proposals,
            st.retries,
            st.own_commits,
            st.fast_path,
            st.elections.len()
        );
    }
    match r.final_state_matches {
        Some(true) => println!("final state matches the recorded run"),
        Some(false) => {
            return Err(Error::Replay(
                "final state differs from the recorded run".into(),
            ))
        }
        None => {}
    }
    Ok(())
}

fn prob(max_level: u32, max_proposers: u32, trials: u64, seed: u64) -> Result<(), Error> {
    println!("l,p,closed_form,monte_carlo,abs_error");
    for l in 1..=max_level {
        for p in 1..=max_proposers {
            let exact = termination_probability(l, p)?;
            let mc = monte_carlo_single_winner(l, p, trials, seed ^ ((l as u64) << 32 | p as u64))?;
            println!("{l},{p},{exact:.6},{mc:.6},{:.6}", (exact - mc).abs());
        }
    }
    Ok(())
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Validation(fields) => {
            eprintln!("error: scenario validation failed");
            for f in fields {
                eprintln!("  {f}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    match e {
        Error::Replay(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            overrides,
        } => run(scenario, *seed, out.clone(), overrides).map(|_| true),
        Command::Verify { dirs } => verify_dirs(dirs),
        Command::Sweep {
            scenario,
            axis,
            values,
            seeds,
            out,
            overrides,
        } => run_sweep(scenario, *axis, values, seeds, out.as_deref(), overrides).map(|_| true),
        Command::Replay { trace, until } => run_replay(trace, *until).map(|_| true),
        Command::Prob {
            max_level,
            max_proposers,
            trials,
            seed,
        } => prob(*max_level, *max_proposers, *trials, *seed).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => exit_for(&e),
    }
}
