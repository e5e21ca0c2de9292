use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use greeks_dk::config::RunConfig;
use greeks_dk::harness::{cell_seed, clt_screen, sweep_and_report, Experiment};
use greeks_dk::kernel::{compute_kernel_constants, kernel_from_spec, verify_order};
use serde_json::json;

#[derive(Parser)]
#[command(name = "greeks-dk", version, about = "Double-kernel Monte Carlo Greek estimation experiments")]
struct Cli {
    /// Output directory (overrides `outputs` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed (overrides `sweep.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One estimate per estimator at the largest N of the sweep.
    Run { config: PathBuf },
    /// Replicated convergence sweep with CSV, JSON and .dat reports.
    Sweep { config: PathBuf },
    /// Normality screen of the standardized pivot.
    Clt {
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Kernel utilities.
    Kernels {
        #[command(subcommand)]
        action: KernelAction,
    },
}

#[derive(Subcommand)]
enum KernelAction {
    /// Checks that the named kernel has the requested order.
    Verify { name: String, order: usize },
}

fn load(path: &Path, cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.sweep.seed = seed;
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.outputs.clone());
    Ok((cfg, out))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(cli: &Cli, config: &Path) -> Result<()> {
    let (cfg, out) = load(config, cli)?;
    let exp = Experiment::build(&cfg)?;
    let n = *cfg.sweep.ns.last().context("sweep.Ns is empty")?;
    let plan = exp.plan(n)?;
    let seed = cell_seed(cfg.sweep.seed, n, 0);
    let mut estimates = Vec::new();
    for name in &exp.estimators {
        let entry = match exp.run_estimator(name, n, plan.h_star, seed) {
            Ok(r) => json!({
                "estimator": name,
                "beta_hat": r.beta_hat,
                "std_error": (0..r.beta_hat.len()).map(|k| r.std_error(k)).collect::<Vec<_>>(),
                "ci_95": r.ci_95,
                "n_used": r.n_used,
                "truncation_rate": r.truncation_rate,
                "seconds": r.timing,
            }),
            Err(e) => json!({ "estimator": name, "error": e.to_string() }),
        };
        println!("{}", serde_json::to_string(&entry)?);
        estimates.push(entry);
    }
    let report = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "N": n,
        "seed": seed,
        "plan": plan,
        "true_greek": exp.true_greek,
        "skipped_estimators": exp.skipped,
        "estimates": estimates,
    });
    let path = out.join("estimate.json");
    write_json(&path, &report)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, config: &Path) -> Result<()> {
    let (cfg, out) = load(config, cli)?;
    let exp = Experiment::build(&cfg)?;
    for (name, why) in &exp.skipped {
        eprintln!("skipping {name}: {why}");
    }
    let (result, files) = sweep_and_report(&exp, &out)?;
    for s in &result.summaries {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<10} slope {} ± {}  var-scaling ratio {}",
            s.estimator,
            fmt(s.slope),
            fmt(s.slope_se),
            fmt(s.variance_scaling_ratio)
        );
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_clt(cli: &Cli, config: &Path, reps: Option<usize>) -> Result<bool> {
    let (cfg, out) = load(config, cli)?;
    let exp = Experiment::build(&cfg)?;
    let reps = reps.unwrap_or(cfg.clt.replications);
    let report = clt_screen(&exp, reps)?;
    let line = |label: &str, c: &greeks_dk::harness::CltResult| {
        println!(
            "{label:<14} h {:.4}  mean {:+.3}  var {:.3}  skew {:+.3}  exkurt {:+.3}  {}",
            c.h,
            c.pivot_mean,
            c.pivot_var,
            c.skewness,
            c.excess_kurtosis,
            if c.pass { "pass" } else { "fail" }
        )
    };
    line("undersmoothed", &report.undersmoothed);
    line("oversmoothed", &report.oversmoothed);
    if let Some(o) = &report.oracle {
        line("oracle", o);
    }
    let path = out.join("clt.json");
    write_json(&path, &serde_json::to_value(&report)?)?;
    eprintln!("wrote {}", path.display());
    Ok(report.undersmoothed.pass)
}

fn cmd_kernels_verify(name: &str, order: usize) -> Result<bool> {
    let k = kernel_from_spec(name, order, 1)?;
    let found = verify_order(&k, 8)?;
    k.check_invariants()?;
    let constants = compute_kernel_constants(&k, &k)?;
    let moments: Vec<f64> = (0..=order).map(|r| k.moment(&[r])).collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "kernel": k.label(),
            "requested_order": order,
            "verified_order": found,
            "moments": moments,
            "support_radius": k.support_radius(),
            "constants": constants,
        }))?
    );
    Ok(found == order)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config).map(|_| true),
        Command::Sweep { config } => cmd_sweep(&cli, config).map(|_| true),
        Command::Clt { config, reps } => cmd_clt(&cli, config, *reps),
        Command::Kernels {
            action: KernelAction::Verify { name, order },
        } => cmd_kernels_verify(name, *order),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

