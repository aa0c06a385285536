//! Command implementations behind the `rdgd` binary.
//!
//! Exit-code contract: 0 = all checks pass or are skipped, 1 = a bound
//! check failed, 2 = configuration or I/O error. The binary maps command
//! results onto that contract; the functions here return the intended exit
//! code so tests can drive them directly.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use rdgd::{
    bounds_thm1, bounds_thm2, bounds_thm3_cge, bounds_thm4, certify_constants, compute_epsilon,
    generate_family, run_replicated, CostFamily, FamilySource, FilterName, ProblemParams,
    RunConfig, RunMode, ScheduleConfig, Simulation, StochasticProblem, TheoremBounds, Trace,
};

/// Prints to stdout, swallowing broken-pipe errors so piping into `head`
/// ends the process quietly instead of panicking.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! emit_raw {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

/// Output directory resolution: the environment override wins, then the
/// explicit flag, then the current directory.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Ok(dir) = std::env::var("RDGD_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    flag.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Canonical config hash: SHA-256 of the re-serialized document, so
/// formatting differences do not change provenance.
pub fn config_hash(config: &RunConfig) -> String {
    format!("{:x}", Sha256::digest(config.to_json().as_bytes()))
}

// ---------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------

pub struct GenerateArgs {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub spread: f64,
    pub eig_lo: f64,
    pub eig_hi: f64,
    /// Named fixture instead of random generation (`line3`).
    pub preset: Option<String>,
    pub out: PathBuf,
    pub subset_floor: usize,
}

/// Writes a family JSON document and prints its smoothness certificate.
pub fn cmd_generate(args: &GenerateArgs) -> Result<i32> {
    let family = match &args.preset {
        Some(name) => FamilySource::Preset {
            preset: name.clone(),
        }
        .resolve(None)
        .map_err(|e| anyhow!("{e}"))?,
        None => generate_family(
            args.seed,
            args.n,
            args.d,
            args.spread,
            (args.eig_lo, args.eig_hi),
        )
        .map_err(|e| anyhow!("{e}"))?,
    };
    std::fs::write(&args.out, family.to_json())
        .with_context(|| format!("writing {}", args.out.display()))?;

    let cert = certify_constants(&family, args.subset_floor).map_err(|e| anyhow!("{e}"))?;
    #[derive(Serialize)]
    struct GenerateReport<'a> {
        seed: u64,
        n: usize,
        dimension: usize,
        path: &'a str,
        mu: f64,
        gamma: f64,
        subset_floor: usize,
    }
    emit!(
        "{}",
        serde_json::to_string_pretty(&GenerateReport {
            seed: args.seed,
            n: family.len(),
            dimension: family.dimension(),
            path: &args.out.display().to_string(),
            mu: cert.mu,
            gamma: cert.gamma,
            subset_floor: cert.subset_floor,
        })?
    );
    Ok(0)
}

// ---------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------

pub struct AnalyzeArgs {
    pub family: PathBuf,
    pub f: usize,
    pub r: usize,
    /// Emit a CSV of epsilon over every feasible (f, r) pair instead.
    pub grid: bool,
    pub out: Option<PathBuf>,
}

/// Prints a redundancy report as JSON, or the epsilon grid as CSV.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.family)
        .with_context(|| format!("reading {}", args.family.display()))?;
    let family = CostFamily::from_json(&text).map_err(|e| anyhow!("{e}"))?;

    if args.grid {
        let n = family.len();
        let mut csv = format!(
            "# family={} sha256={:x}\nf,r,epsilon,pairs_examined\n",
            args.family.display(),
            Sha256::digest(text.as_bytes())
        );
        for r in 0..n {
            for f in 0..n {
                if 2 * f >= n - r {
                    break;
                }
                let report = compute_epsilon(&family, f, r).map_err(|e| anyhow!("{e}"))?;
                csv.push_str(&format!(
                    "{f},{r},{},{}\n",
                    report.epsilon, report.pairs_examined
                ));
            }
        }
        match &args.out {
            Some(path) => {
                std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?
            }
            None => emit_raw!("{csv}"),
        }
        return Ok(0);
    }

    let report = compute_epsilon(&family, args.f, args.r).map_err(|e| anyhow!("{e}"))?;
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?
        }
        None => emit!("{text}"),
    }
    Ok(0)
}

// ---------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------

/// Certified constants plus redundancy for a config's family, with the
/// subset floor matching what the mode's guarantee assumes.
struct InstanceConstants {
    mu: f64,
    gamma: f64,
    epsilon: f64,
    target: Vec<f64>,
    diameter: f64,
    initial_sq_dist: f64,
}

fn instance_constants(config: &RunConfig, family: &CostFamily) -> Result<InstanceConstants> {
    let floor = match config.mode {
        RunMode::Stochastic {
            problem: StochasticProblem::Bs,
        }
        | RunMode::Stochastic {
            problem: StochasticProblem::Ds,
        } => config.n - config.f,
        _ if config.f > 0 => config.n - config.f,
        _ => config.n - config.r,
    };
    let cert = certify_constants(family, floor).map_err(|e| anyhow!("{e}"))?;
    let epsilon = compute_epsilon(family, config.f, config.r)
        .map_err(|e| anyhow!("{e}"))?
        .epsilon;
    let probe = Simulation::new(config, family.clone()).map_err(|e| anyhow!("{e}"))?;
    let target: Vec<f64> = probe.target().iter().copied().collect();
    let diameter = probe.feasible_box().max_distance_from(probe.target());
    let x0: Vec<f64> = match &config.x0 {
        Some(values) => values.clone(),
        None => probe.feasible_box().center().iter().copied().collect(),
    };
    let initial_sq_dist = x0.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(InstanceConstants {
        mu: cert.mu,
        gamma: cert.gamma,
        epsilon,
        target,
        diameter,
        initial_sq_dist,
    })
}

/// The guarantee covering a config, evaluated from certified constants;
/// `None` when no closed form covers the mode/filter combination.
fn bounds_for_config(
    config: &RunConfig,
    constants: &InstanceConstants,
    delta_override: Option<f64>,
) -> Option<TheoremBounds> {
    let p = ProblemParams {
        n: config.n,
        f: config.f,
        r: config.r,
        mu: constants.mu,
        gamma: constants.gamma,
        epsilon: constants.epsilon,
    };
    match (config.mode, config.filter) {
        (RunMode::Sync, FilterName::Sum) | (RunMode::Async, FilterName::Sum) if config.f == 0 => {
            Some(bounds_thm1(&p))
        }
        (RunMode::Stale { .. }, FilterName::Sum) => Some(bounds_thm2(&p)),
        (RunMode::Sync, FilterName::Cge) | (RunMode::Async, FilterName::Cge) => {
            let delta = delta_override.unwrap_or(1e-3 * constants.diameter);
            Some(bounds_thm3_cge(&p, delta))
        }
        (RunMode::Stochastic { problem }, _) => {
            let eta = match config.schedule {
                ScheduleConfig::Constant { eta } => eta,
                ScheduleConfig::Harmonic { .. } => return None,
            };
            let sigma = config.noise.map(|n| n.sigma).unwrap_or(0.0);
            Some(bounds_thm4(problem, &p, sigma, eta, constants.diameter))
        }
        _ => None,
    }
}

pub struct BoundsArgs {
    pub config: PathBuf,
    pub delta: Option<f64>,
}

/// Prints the TheoremBounds JSON for the config's mode.
pub fn cmd_bounds(args: &BoundsArgs) -> Result<i32> {
    let (config, family) = load_config(&args.config)?;
    let constants = instance_constants(&config, &family)?;
    let bounds = bounds_for_config(&config, &constants, args.delta)
        .ok_or_else(|| anyhow!("no closed-form bound covers this mode/filter combination"))?;
    #[derive(Serialize)]
    struct BoundsReport {
        config_hash: String,
        mu: f64,
        gamma: f64,
        epsilon: f64,
        diameter: f64,
        bounds: TheoremBounds,
    }
    emit!(
        "{}",
        serde_json::to_string_pretty(&BoundsReport {
            config_hash: config_hash(&config),
            mu: constants.mu,
            gamma: constants.gamma,
            epsilon: constants.epsilon,
            diameter: constants.diameter,
            bounds,
        })?
    );
    Ok(0)
}

// ---------------------------------------------------------------------
// run
// ---------------------------------------------------------------------

pub struct RunArgs {
    pub config: PathBuf,
    pub out_dir: Option<PathBuf>,
    /// Also write the trace as JSON.
    pub json_trace: bool,
    /// Embed full estimate/aggregate vectors in the JSON trace.
    pub full_vectors: bool,
    /// Tail window for bound membership; default max(T / 10, 100).
    pub tail_window: Option<usize>,
    /// Radius override for filters without a closed-form bound.
    pub dstar: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Serialize)]
struct CheckOutcome {
    name: String,
    bound_value: f64,
    observed: f64,
    satisfied: bool,
}

#[derive(Serialize)]
struct SkippedCheck {
    name: String,
    reason: String,
}

#[derive(Serialize)]
struct PhiReport {
    d_star: f64,
    outside_iterations: u64,
    violations: u64,
}

/// Summary document written next to the trace.
#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    config_hash: String,
    tail_window: usize,
    tail_max_distance: f64,
    bound_value: Option<f64>,
    satisfied: bool,
    checks: Vec<CheckOutcome>,
    skipped: Vec<SkippedCheck>,
    target: Vec<f64>,
    mu: f64,
    gamma: f64,
    epsilon: f64,
    diameter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<TheoremBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi_positivity: Option<PhiReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<MonteCarloReport>,
}

#[derive(Serialize)]
struct MonteCarloReport {
    replications: u32,
    /// Per-iteration mean of the squared distance to the target.
    mean_sq_distance: Vec<f64>,
    /// Per-iteration standard error of that mean.
    stderr: Vec<f64>,
    /// Closed-form bound curve at each iteration.
    bound_curve: Vec<f64>,
}

fn load_config(path: &Path) -> Result<(RunConfig, CostFamily)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = RunConfig::from_json(&text).map_err(|e| anyhow!("{e}"))?;
    config.validate_shape().map_err(|e| anyhow!("{e}"))?;
    let family = config
        .family
        .resolve(path.parent())
        .map_err(|e| anyhow!("{e}"))?;
    Ok((config, family))
}

/// Executes a config, writes trace and summary files, and returns the exit
/// code per the contract.
pub fn cmd_run(args: &RunArgs) -> Result<i32> {
    let (config, family) = load_config(&args.config)?;
    let out_dir = resolve_out_dir(args.out_dir.as_deref());
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let stem = args
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());

    let (summary, trace) = execute(&config, &family, args)?;

    let hash = config_hash(&config);
    std::fs::write(
        out_dir.join(format!("{stem}.trace.csv")),
        trace.to_csv(&hash),
    )?;
    if args.json_trace {
        std::fs::write(
            out_dir.join(format!("{stem}.trace.json")),
            trace.to_json(&hash, args.full_vectors),
        )?;
    }
    std::fs::write(
        out_dir.join(format!("{stem}.summary.json")),
        serde_json::to_string_pretty(&summary)?,
    )?;

    for check in &summary.checks {
        emit!(
            "{}: {} (observed {} vs bound {})",
            check.name,
            if check.satisfied { "pass" } else { "FAIL" },
            check.observed,
            check.bound_value
        );
    }
    for skip in &summary.skipped {
        emit!("{}: skipped: {}", skip.name, skip.reason);
    }
    Ok(if summary.satisfied { 0 } else { 1 })
}

/// Runs the experiment and assembles the summary; shared by run and suite.
fn execute(config: &RunConfig, family: &CostFamily, args: &RunArgs) -> Result<(RunSummary, Trace)> {
    let constants = instance_constants(config, family)?;
    let bounds = bounds_for_config(config, &constants, args.delta);

    let tail_window = args
        .tail_window
        .unwrap_or_else(|| (config.iterations / 10).max(100) as usize)
        .max(1);

    let mut checks = Vec::new();
    let mut skipped = Vec::new();
    let mut phi_positivity = None;
    let mut monte_carlo = None;

    let stochastic = matches!(config.mode, RunMode::Stochastic { .. });
    let traces = if stochastic && config.replications > 1 {
        run_replicated(config, family).map_err(|e| anyhow!("{e}"))?
    } else {
        vec![rdgd::run(config, family.clone()).map_err(|e| anyhow!("{e}"))?]
    };

    let trace = &traces[0];
    let tail_max_distance = trace.tail_max_distance(tail_window);
    let mut headline_bound = None;

    if config.iterations == 0 {
        skipped.push(SkippedCheck {
            name: "bound-membership".into(),
            reason: "no iterations; nothing to check".into(),
        });
    } else {
        match &bounds {
            None => {
                // CWTM (or another uncovered combination): check only against a
                // user-supplied radius.
                match args.dstar {
                    Some(radius) => checks.push(CheckOutcome {
                        name: "user-radius-tail".into(),
                        bound_value: radius,
                        observed: tail_max_distance,
                        satisfied: tail_max_distance <= radius,
                    }),
                    None => skipped.push(SkippedCheck {
                        name: "bound-membership".into(),
                        reason: "no closed-form bound for this mode/filter; pass --dstar to check"
                            .into(),
                    }),
                }
            }
            Some(bounds) if !bounds.feasible => {
                skipped.push(SkippedCheck {
                    name: "bound-membership".into(),
                    reason: format!("infeasible: alpha = {} not positive", bounds.alpha),
                });
            }
            Some(bounds) => match config.mode {
                RunMode::Sync | RunMode::Async | RunMode::Stale { .. } => {
                    let d_bound = bounds.d_bound.expect("feasible deterministic bound has D");
                    headline_bound = Some(d_bound);
                    checks.push(CheckOutcome {
                        name: "tail-distance".into(),
                        bound_value: d_bound,
                        observed: tail_max_distance,
                        satisfied: tail_max_distance <= d_bound,
                    });
                    if matches!(config.filter, FilterName::Cge) {
                        // Hypothesis diagnostic: the inner product should stay
                        // positive whenever the iterate sits outside D*.
                        let mut outside = 0u64;
                        let mut violations = 0u64;
                        for rec in &trace.records {
                            if let Some(step) = &rec.step {
                                if rec.dist_to_target >= d_bound + 0.01 {
                                    outside += 1;
                                    if step.phi <= 0.0 {
                                        violations += 1;
                                    }
                                }
                            }
                        }
                        phi_positivity = Some(PhiReport {
                            d_star: d_bound,
                            outside_iterations: outside,
                            violations,
                        });
                    }
                }
                RunMode::Stochastic { .. } => {
                    if traces.len() < 2 {
                        skipped.push(SkippedCheck {
                            name: "monte-carlo-bound".into(),
                            reason: "needs replications >= 2".into(),
                        });
                    } else {
                        let t_max = config.iterations as usize;
                        let reps = traces.len() as f64;
                        let mut mean_sq = Vec::with_capacity(t_max);
                        let mut stderr = Vec::with_capacity(t_max);
                        let mut curve = Vec::with_capacity(t_max);
                        let mut all_within = true;
                        let mut worst_excess = 0.0f64;
                        for t in 0..t_max {
                            let values: Vec<f64> = traces
                                .iter()
                                .map(|tr| tr.records[t + 1].dist_to_target.powi(2))
                                .collect();
                            let mean = values.iter().sum::<f64>() / reps;
                            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                                / (reps - 1.0);
                            let se = (var / reps).sqrt();
                            let bound_t = bounds
                                .expectation_curve(constants.initial_sq_dist, t as u64)
                                .expect("stochastic bounds carry rho and M");
                            if mean > bound_t + 3.0 * se {
                                all_within = false;
                                worst_excess = worst_excess.max(mean - bound_t - 3.0 * se);
                            }
                            mean_sq.push(mean);
                            stderr.push(se);
                            curve.push(bound_t);
                        }
                        let last = curve.last().copied().unwrap_or(f64::NAN);
                        headline_bound = Some(last);
                        checks.push(CheckOutcome {
                            name: "monte-carlo-bound".into(),
                            bound_value: last,
                            observed: if all_within {
                                *mean_sq.last().unwrap_or(&f64::NAN)
                            } else {
                                worst_excess
                            },
                            satisfied: all_within,
                        });
                        monte_carlo = Some(MonteCarloReport {
                            replications: traces.len() as u32,
                            mean_sq_distance: mean_sq,
                            stderr,
                            bound_curve: curve,
                        });
                    }
                }
            },
        }
    }

    let satisfied = checks.iter().all(|c| c.satisfied);
    let summary = RunSummary {
        seed: config.seed,
        config_hash: config_hash(config),
        tail_window,
        tail_max_distance,
        bound_value: headline_bound,
        satisfied,
        checks,
        skipped,
        target: constants.target.clone(),
        mu: constants.mu,
        gamma: constants.gamma,
        epsilon: constants.epsilon,
        diameter: constants.diameter,
        bounds,
        phi_positivity,
        monte_carlo,
    };
    Ok((
        summary,
        traces.into_iter().next().expect("at least one run"),
    ))
}

// ---------------------------------------------------------------------
// suite
// ---------------------------------------------------------------------

pub struct SuiteArgs {
    pub manifest: PathBuf,
    pub out_dir: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
struct Manifest {
    experiments: Vec<ManifestEntry>,
}

#[derive(serde::Deserialize)]
struct ManifestEntry {
    name: String,
    config: String,
}

#[derive(Serialize)]
struct SuiteReport {
    passed: usize,
    failed: usize,
    skipped: usize,
    errors: usize,
    experiments: Vec<SuiteLine>,
}

#[derive(Serialize)]
struct SuiteLine {
    name: String,
    status: String,
    detail: String,
}

/// Runs every experiment in the manifest; one report line each. Infeasible
/// bounds count as skipped, not failed.
pub fn cmd_suite(args: &SuiteArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).context("parsing manifest")?;
    let base = args.manifest.parent().map(Path::to_path_buf);
    let out_dir = resolve_out_dir(args.out_dir.as_deref());
    std::fs::create_dir_all(&out_dir)?;

    use rayon::prelude::*;
    let outcomes: Vec<(String, String, String)> = manifest
        .experiments
        .par_iter()
        .map(|entry| {
            let config_path = match &base {
                Some(dir) => dir.join(&entry.config),
                None => PathBuf::from(&entry.config),
            };
            let run_args = RunArgs {
                config: config_path,
                out_dir: Some(out_dir.clone()),
                json_trace: false,
                full_vectors: false,
                tail_window: None,
                dstar: None,
                delta: None,
            };
            match run_and_classify(&run_args) {
                Ok(Outcome::Passed(detail)) => (entry.name.clone(), "pass".into(), detail),
                Ok(Outcome::Skipped(reason)) => (entry.name.clone(), "skipped".into(), reason),
                Ok(Outcome::Failed(detail)) => (entry.name.clone(), "fail".into(), detail),
                Err(err) => (entry.name.clone(), "error".into(), format!("{err:#}")),
            }
        })
        .collect();

    let mut lines = Vec::new();
    let (mut passed, mut failed, mut skipped, mut errors) = (0, 0, 0, 0);
    for (name, status, detail) in outcomes {
        match status.as_str() {
            "pass" => passed += 1,
            "fail" => failed += 1,
            "skipped" => skipped += 1,
            _ => errors += 1,
        }
        emit!(
            "{name}: {status}{}{detail}",
            if detail.is_empty() { "" } else { ": " }
        );
        lines.push(SuiteLine {
            name,
            status,
            detail,
        });
    }
    let report = SuiteReport {
        passed,
        failed,
        skipped,
        errors,
        experiments: lines,
    };
    std::fs::write(
        out_dir.join("suite_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    emit!("suite: {passed} passed, {failed} failed, {skipped} skipped, {errors} errors");
    Ok(if failed > 0 || errors > 0 { 1 } else { 0 })
}

enum Outcome {
    Passed(String),
    Failed(String),
    Skipped(String),
}

fn run_and_classify(args: &RunArgs) -> Result<Outcome> {
    let (config, family) = load_config(&args.config)?;
    let out_dir = resolve_out_dir(args.out_dir.as_deref());
    let stem = args
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let (summary, trace) = execute(&config, &family, args)?;
    let hash = config_hash(&config);
    std::fs::write(
        out_dir.join(format!("{stem}.trace.csv")),
        trace.to_csv(&hash),
    )?;
    std::fs::write(
        out_dir.join(format!("{stem}.summary.json")),
        serde_json::to_string_pretty(&summary)?,
    )?;
    if !summary.satisfied {
        let failing: Vec<String> = summary
            .checks
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| format!("{} ({} > {})", c.name, c.observed, c.bound_value))
            .collect();
        return Ok(Outcome::Failed(failing.join(", ")));
    }
    if summary.checks.is_empty() {
        let reason = summary
            .skipped
            .first()
            .map(|s| s.reason.clone())
            .unwrap_or_else(|| "no checks".into());
        return Ok(Outcome::Skipped(reason));
    }
    let detail = summary
        .checks
        .iter()
        .map(|c| format!("{} {} <= {}", c.name, c.observed, c.bound_value))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome::Passed(detail))
}
