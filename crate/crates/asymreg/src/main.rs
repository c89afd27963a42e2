use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asymreg::harness::{load_config, run_experiment, RunOutcome};
use asymreg::rates::{sabach_shtern_check, sabach_shtern_sweep, SabachShternInstance};
use asymreg::sampling::Sampler;
use asymreg::spaces::{axiom_audit, Space};

/// Numerical certification of asymptotic-regularity rates for
/// Halpern-type iterations.
///
/// Exit codes: 0 = every audit and certification passed; 1 = at least one
/// mathematical check failed; 2 = configuration, fixture, or IO error.
#[derive(Parser)]
#[command(name = "asymreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config (flat dotted-key TOML).
    Run { config: PathBuf },
    /// Run every .toml config in a directory; the worst exit code wins.
    Suite { dir: PathBuf },
    /// Comparison-sequence lemma oracle: equality witness plus a seeded
    /// random-instance soundness sweep.
    SabachShtern {
        /// Also print the first rows of the equality-witness table.
        #[arg(long)]
        demo: bool,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Audit the convex-combination axioms of a model space.
    AuditSpace {
        /// "euclid" or "tripod"
        kind: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn print_outcome(outcome: &RunOutcome) {
    let summary = &outcome.summary;
    for audit in &summary.audits {
        let verdict = if audit.passed() { "pass" } else { "FAIL" };
        println!(
            "  audit {:<28} {} ({} checks, worst excess {:+.3e})",
            audit.name, verdict, audit.checks, audit.worst_excess
        );
        if let Some(v) = audit.violations.first() {
            println!(
                "    witness: {} at sample {}: {:.6e} > {:.6e}",
                v.check, v.sample, v.lhs, v.rhs
            );
        }
    }
    for rate in &summary.rates {
        let verdict = if rate.passed() { "pass" } else { "FAIL" };
        let worst = rate
            .worst_rate_excess
            .map(|w| format!("{w:+.3e}"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "  rate  {:<28} {} (phi = {}(k+1)-{}, worst excess {})",
            rate.rate.name, verdict, rate.rate.phi.slope, rate.rate.phi.offset, worst
        );
        if let Some(w) = &rate.rate_witness {
            let k = w.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
            println!(
                "    witness: k={k}, n={}, residual {:.6e} > {:.6e}",
                w.n, w.value, w.bound
            );
        }
        if let Some(w) = &rate.curve_witness {
            println!(
                "    curve witness: n={}, residual {:.6e} > {:.6e}",
                w.n, w.value, w.bound
            );
        }
    }
    println!(
        "{}: {} (M = {}, horizon {}, csv {})",
        summary.name,
        if summary.passed { "pass" } else { "FAIL" },
        summary.m,
        summary.horizon,
        summary.csv_path
    );
}

fn run_one(path: &Path) -> u8 {
    match load_config(path).and_then(|cfg| run_experiment(&cfg)) {
        Ok(outcome) => {
            print_outcome(&outcome);
            if outcome.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("{}: error: {e}", path.display());
            2
        }
    }
}

fn run_suite(dir: &Path) -> u8 {
    let mut configs: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
            .collect(),
        Err(e) => {
            eprintln!("suite: cannot read {}: {e}", dir.display());
            return 2;
        }
    };
    configs.sort();
    if configs.is_empty() {
        eprintln!("suite: no .toml configs in {}", dir.display());
        return 2;
    }
    let mut worst = 0;
    for config in &configs {
        let code = run_one(config);
        worst = worst.max(code);
    }
    println!(
        "suite: {} configs, worst exit code {worst}",
        configs.len()
    );
    worst
}

fn run_sabach_shtern(demo: bool, instances: usize, horizon: usize, seed: u64) -> u8 {
    let witness = SabachShternInstance::equality_witness(horizon);
    let mut drift = 0.0_f64;
    for (n, &s) in witness.s.iter().enumerate() {
        drift = drift.max((s - witness.bound(n)).abs());
    }
    let report = match sabach_shtern_check(&witness, horizon) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("witness check failed: {e}");
            return 2;
        }
    };
    println!(
        "equality witness: hypothesis {}, conclusion {}, max |s_n - 2/(n+2)| = {:.3e}",
        report.hypothesis_ok, report.conclusion_ok, drift
    );
    if demo {
        println!("{:>6} {:>22} {:>22}", "n", "s_n", "bound JL/(gamma(n+J))");
        for n in [0usize, 1, 2, 3, 4, 5, 10, 100, 1000, horizon] {
            println!("{:>6} {:>22.16e} {:>22.16e}", n, witness.s[n], witness.bound(n));
        }
    }
    let sweep = match sabach_shtern_sweep(instances, horizon, seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("sweep failed: {e}");
            return 2;
        }
    };
    println!(
        "sweep: {} instances, horizon {}, seed {}: hypothesis held on {}, soundness violations {}, worst conclusion margin {:+.3e}",
        sweep.instances,
        sweep.horizon,
        sweep.seed,
        sweep.hypothesis_holds,
        sweep.soundness_violations,
        sweep.worst_conclusion_margin
    );
    let ok = report.hypothesis_ok
        && report.conclusion_ok
        && drift <= 1e-12
        && sweep.soundness_violations == 0
        && sweep.hypothesis_holds == sweep.instances;
    if ok {
        0
    } else {
        1
    }
}

fn run_audit_space(kind: &str, dim: usize, samples: usize, seed: u64) -> u8 {
    let space = match kind {
        "euclid" => match Space::euclid(dim) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("audit-space: {e}");
                return 2;
            }
        },
        "tripod" => Space::tripod(),
        other => {
            eprintln!("audit-space: unknown space kind `{other}` (use euclid or tripod)");
            return 2;
        }
    };
    let inputs = match Sampler::new(seed).axiom_samples(&space, samples, 4.0) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("audit-space: {e}");
            return 2;
        }
    };
    let report = match axiom_audit(&space, &inputs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("audit-space: {e}");
            return 2;
        }
    };
    println!(
        "{}: {} ({} checks over {} samples, worst excess {:+.3e}, seed {})",
        space.kind_name(),
        if report.passed() { "pass" } else { "FAIL" },
        report.checks,
        samples,
        report.worst_excess,
        seed
    );
    if let Some(v) = report.violations.first() {
        println!("  witness: {} at sample {}: {:.6e} > {:.6e}", v.check, v.sample, v.lhs, v.rhs);
    }
    if report.passed() {
        0
    } else {
        1
    }
}

/// Restore the default SIGPIPE disposition so `asymreg ... | head` dies
/// quietly instead of panicking when stdout closes mid-table.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run_one(&config),
        Command::Suite { dir } => run_suite(&dir),
        Command::SabachShtern { demo, instances, horizon, seed } => {
            run_sabach_shtern(demo, instances, horizon, seed)
        }
        Command::AuditSpace { kind, dim, samples, seed } => {
            run_audit_space(&kind, dim, samples, seed)
        }
    };
    ExitCode::from(code)
}
