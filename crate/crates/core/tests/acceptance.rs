//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (run with `--nocapture` to see them).
//!
//! The redundancy oracle here re-enumerates subset pairs with its own
//! combination generator and its own Gaussian-elimination solver, so it
//! shares no code path with the library implementation it checks.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::DVector;
use rdgd::{
    aggregate_cge, aggregate_sum, bounds_thm1, bounds_thm3_cge, bounds_thm4, certify_constants,
    check_rho_range, compute_epsilon, generate_family, run, run_replicated, AgentRole, BoxConfig,
    ByzantineStrategy, CostFamily, DelayModel, FamilySource, FilterName, NoiseConfig, NoiseModel,
    ProblemParams, QuadraticCost, RunConfig, RunMode, ScheduleConfig, StochasticProblem, Trace,
};

fn report(criterion: u32, details: &str) {
    println!("PASS criterion {criterion}: {details}");
}

// ---------------------------------------------------------------------
// Independent oracle: subset enumeration + linear solve from scratch.
// ---------------------------------------------------------------------

/// All k-subsets of 0..n in lexicographic order.
fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn recurse(
        start: usize,
        n: usize,
        k: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            if n - i < k - current.len() {
                break;
            }
            current.push(i);
            recurse(i + 1, n, k, current, out);
            current.pop();
        }
    }
    recurse(0, n, k, &mut current, &mut out);
    out
}

/// Gaussian elimination with partial pivoting on a dense system.
#[allow(clippy::needless_range_loop)]
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let d = b.len();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-12, "oracle hit a singular aggregate");
        for row in (col + 1)..d {
            let factor = a[row][col] / a[col][col];
            for k in col..d {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = b[col];
        for k in (col + 1)..d {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    x
}

/// Aggregate minimizer of a subset, solved from raw matrix entries.
#[allow(clippy::needless_range_loop)]
fn oracle_minimizer(family: &CostFamily, subset: &[usize]) -> Vec<f64> {
    let d = family.dimension();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for &agent in subset {
        let cost = family.cost(agent);
        for i in 0..d {
            for j in 0..d {
                a[i][j] += cost.matrix()[(i, j)];
            }
            b[i] += cost.offset()[i];
        }
    }
    solve_dense(a, b)
}

fn euclidean_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Max pair distance by full re-enumeration, no memoization.
fn oracle_epsilon(family: &CostFamily, f: usize, r: usize) -> f64 {
    let n = family.len();
    let mut worst = 0.0f64;
    for s in subsets_of_size(n, n - f) {
        let x_s = oracle_minimizer(family, &s);
        for size in (n - r - 2 * f)..(n - f) {
            for pick in subsets_of_size(s.len(), size) {
                let shat: Vec<usize> = pick.iter().map(|&i| s[i]).collect();
                let x_shat = oracle_minimizer(family, &shat);
                worst = worst.max(euclidean_distance(&x_s, &x_shat));
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------
// Shared fixtures.
// ---------------------------------------------------------------------

/// Identity-curvature family in dimension `d` with seeded centers in
/// `[-spread, spread]^d`: mu = gamma = 1 up to roundoff and every subset
/// aggregate is well conditioned.
fn isotropic_family(seed: u64, n: usize, d: usize, spread: f64) -> CostFamily {
    use rand::Rng;
    let costs = (0..n)
        .map(|agent| {
            let mut rng = seeded_rng(seed, agent as u64);
            let center = DVector::from_fn(d, |_, _| rng.gen_range(-spread..spread));
            QuadraticCost::isotropic(center)
        })
        .collect();
    CostFamily::new(costs).unwrap()
}

fn seeded_rng(seed: u64, lane: u64) -> rand_chacha::ChaCha12Rng {
    use rand_chacha::rand_core::SeedableRng;
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&lane.to_le_bytes());
    rand_chacha::ChaCha12Rng::from_seed(key)
}

fn honest_roles(n: usize) -> Vec<AgentRole> {
    vec![AgentRole::Honest; n]
}

fn line3_async_config() -> RunConfig {
    RunConfig {
        family: FamilySource::Preset {
            preset: "line3".into(),
        },
        n: 3,
        f: 0,
        r: 1,
        mode: RunMode::Async,
        filter: FilterName::Sum,
        roles: honest_roles(3),
        delay: DelayModel::FixedSlowSet {
            slow: BTreeSet::from([2]),
            extra: None,
        },
        schedule: ScheduleConfig::Harmonic { eta0: None },
        iterations: 20_000,
        replications: 1,
        box_w: BoxConfig {
            lower: vec![-10.0],
            upper: vec![10.0],
        },
        noise: None,
        seed: 1,
        x0: None,
        parallel_agents: false,
    }
}

/// Worst-case cap on the aggregate norm in honest-only runs:
/// every logged norm must stay under `(n - r) (2 n mu eps + mu Gamma)`.
fn assert_aggregate_norm_bound(
    trace: &Trace,
    n: usize,
    r: usize,
    mu: f64,
    epsilon: f64,
    diameter: f64,
    label: &str,
) {
    let cap = (n - r) as f64 * (2.0 * n as f64 * mu * epsilon + mu * diameter);
    for rec in &trace.records {
        if let Some(step) = &rec.step {
            assert!(
                step.agg_norm <= cap + 1e-9,
                "{label}: t = {} aggregate norm {} above cap {cap}",
                rec.t,
                step.agg_norm
            );
        }
    }
}

// ---------------------------------------------------------------------
// Criteria.
// ---------------------------------------------------------------------

#[test]
fn criterion_01_redundancy_matches_brute_force_oracle() {
    let started = Instant::now();
    let mut checked = 0u32;
    for seed in 0..50u64 {
        use rand::Rng;
        let mut rng = seeded_rng(900 + seed, 0);
        let n = rng.gen_range(3..=8usize);
        let d = rng.gen_range(1..=3usize);
        let family = generate_family(seed, n, d, 2.0, (0.4, 2.0)).unwrap();
        for r in 0..n {
            for f in 0..n {
                if 2 * f >= n - r {
                    break;
                }
                let fast = compute_epsilon(&family, f, r).unwrap();
                let slow = oracle_epsilon(&family, f, r);
                assert!(
                    (fast.epsilon - slow).abs() <= 1e-9,
                    "family {seed} (n={n} d={d}) f={f} r={r}: {} vs oracle {}",
                    fast.epsilon,
                    slow
                );
                checked += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "oracle comparison took {elapsed:?}"
    );
    report(
        1,
        &format!("50 random families, {checked} feasible (f, r) grids agree with the brute-force oracle to 1e-9 in {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_line3_epsilon_values_are_exact() {
    let family = CostFamily::line3();
    let e10 = compute_epsilon(&family, 1, 0).unwrap().epsilon;
    let e01 = compute_epsilon(&family, 0, 1).unwrap().epsilon;
    assert!((e10 - 1.0).abs() <= 1e-12, "epsilon(1,0) = {e10}");
    assert!((e01 - 0.5).abs() <= 1e-12, "epsilon(0,1) = {e01}");
    report(
        2,
        &format!("line3 epsilon(1,0) = {e10}, epsilon(0,1) = {e01}"),
    );
}

#[test]
fn criterion_03_theorem1_tail_within_d() {
    let started = Instant::now();
    let config = line3_async_config();
    let family = CostFamily::line3();

    let cert = certify_constants(&family, family.len() - config.r).unwrap();
    let epsilon = compute_epsilon(&family, 0, 1).unwrap().epsilon;
    let bounds = bounds_thm1(&ProblemParams {
        n: 3,
        f: 0,
        r: 1,
        mu: cert.mu,
        gamma: cert.gamma,
        epsilon,
    });
    let d_bound = bounds.d_bound.unwrap();
    assert!((d_bound - 1.5).abs() < 1e-12, "D = {d_bound}");

    let trace = run(&config, family).unwrap();
    let tail = trace.tail_max_distance(2000);
    assert!(tail <= d_bound, "tail max {tail} above D = {d_bound}");

    // Aggregate-norm cap, honest-only run (criterion 11 input).
    let diameter = 11.0; // box [-10, 10], target 1.0
    assert_aggregate_norm_bound(&trace, 3, 1, cert.mu, epsilon, diameter, "criterion 3");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "run took {elapsed:?}");
    report(
        3,
        &format!("tail max |x - x*| = {tail:.6} <= D = {d_bound} over the last 2000 of 20000 iterations in {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04_theorem2_stale_tail_and_zero_delay_control() {
    // Main run: stale updates, tau = 2, rotating straggler.
    let mut stale = line3_async_config();
    stale.mode = RunMode::Stale { tau: 2 };
    stale.delay = DelayModel::RotatingSlow { extra: None };
    let family = CostFamily::line3();
    let trace = run(&stale, family.clone()).unwrap();
    let tail = trace.tail_max_distance(2000);
    assert!(tail <= 1.5, "stale tail max {tail} above D = 1.5");
    let epsilon = compute_epsilon(&family, 0, 1).unwrap().epsilon;
    assert_aggregate_norm_bound(&trace, 3, 1, 1.0, epsilon, 11.0, "criterion 4");

    // Controls: with zero delays the stale trajectory must be bitwise
    // identical to the fresh zero-delay control (all replies land, so the
    // update is the full sum in both).
    let mut fresh_control = line3_async_config();
    fresh_control.r = 0;
    fresh_control.delay = DelayModel::Constant { iterations: 0 };
    fresh_control.iterations = 5_000;
    let fresh_trace = run(&fresh_control, family.clone()).unwrap();

    let mut stale_control = stale.clone();
    stale_control.delay = DelayModel::Constant { iterations: 0 };
    stale_control.iterations = 5_000;
    let stale_trace = run(&stale_control, family).unwrap();

    for (a, b) in fresh_trace.records.iter().zip(&stale_trace.records) {
        assert_eq!(a.x, b.x, "control trajectories diverge at t = {}", a.t);
        assert_eq!(
            a.step.as_ref().map(|s| &s.aggregate),
            b.step.as_ref().map(|s| &s.aggregate),
            "control aggregates diverge at t = {}",
            a.t
        );
    }
    report(
        4,
        &format!("stale tail max = {tail:.6} <= D = 1.5; zero-delay stale control is bitwise identical to the fresh control"),
    );
}

#[test]
fn criterion_05_theorem3_cge_tail_within_d_star() {
    let started = Instant::now();
    let family = isotropic_family(41, 6, 2, 0.1);
    let (n, f, r) = (6, 1, 1);

    let cert = certify_constants(&family, n - f).unwrap();
    let epsilon = compute_epsilon(&family, f, r).unwrap().epsilon;

    let config = RunConfig {
        family: FamilySource::Preset {
            preset: "unused".into(),
        },
        n,
        f,
        r,
        mode: RunMode::Async,
        filter: FilterName::Cge,
        roles: vec![
            AgentRole::Honest,
            AgentRole::Byzantine(ByzantineStrategy::ReverseGradient),
            AgentRole::Honest,
            AgentRole::Honest,
            AgentRole::Honest,
            AgentRole::Honest,
        ],
        delay: DelayModel::FixedSlowSet {
            slow: BTreeSet::from([5]),
            extra: None,
        },
        schedule: ScheduleConfig::Harmonic { eta0: None },
        iterations: 50_000,
        replications: 1,
        box_w: BoxConfig {
            lower: vec![-6.0, -6.0],
            upper: vec![6.0, 6.0],
        },
        noise: None,
        seed: 5,
        // Start far from x_H so the run spends iterations outside D* and
        // the inner-product diagnostic below is exercised.
        x0: Some(vec![5.0, 5.0]),
        parallel_agents: false,
    };

    let simulation = rdgd::Simulation::new(&config, family.clone()).unwrap();
    let diameter = simulation
        .feasible_box()
        .max_distance_from(simulation.target());
    let delta = 1e-3 * diameter;
    let bounds = bounds_thm3_cge(
        &ProblemParams {
            n,
            f,
            r,
            mu: cert.mu,
            gamma: cert.gamma,
            epsilon,
        },
        delta,
    );
    assert!(bounds.feasible, "alpha = {} must be positive", bounds.alpha);
    let d_star = bounds.d_bound.unwrap();
    assert!(
        d_star < diameter,
        "D* = {d_star} must stay below Gamma = {diameter}"
    );

    let trace = simulation.run(config.iterations).unwrap();
    let tail = trace.tail_max_distance(5_000);
    assert!(tail <= d_star, "tail max {tail} above D* = {d_star}");

    // Hypothesis diagnostic, reported not asserted: whenever the iterate
    // sits outside D* + 0.01, the logged inner product should be positive.
    let mut outside = 0u32;
    let mut violations = 0u32;
    for rec in &trace.records {
        if let Some(step) = &rec.step {
            if rec.dist_to_target >= d_star + 0.01 {
                outside += 1;
                if step.phi <= 0.0 {
                    violations += 1;
                }
            }
        }
    }
    assert!(
        outside > 0,
        "start point should exercise the outside-D* regime"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 20.0, "run took {elapsed:?}");
    report(
        5,
        &format!(
            "tail max |x - x_H| = {tail:.6} <= D* = {d_star:.6} (alpha = {:.3}, eps = {epsilon:.4}); phi <= 0 in {violations}/{outside} outside-D* iterations; {elapsed:.2?}",
            bounds.alpha
        ),
    );
}

#[test]
fn criterion_06_cge_degenerates_to_sum_at_f0() {
    use rand::Rng;
    // Vector-level: 100 random gradient sets.
    let mut rng = seeded_rng(606, 0);
    for _ in 0..100 {
        let m = rng.gen_range(1..9);
        let d = rng.gen_range(1..5);
        let entries: Vec<(usize, DVector<f64>)> = (0..m)
            .map(|id| (id, DVector::from_fn(d, |_, _| rng.gen_range(-10.0..10.0))))
            .collect();
        assert_eq!(
            aggregate_cge(&entries, 0).unwrap(),
            aggregate_sum(&entries).unwrap(),
            "bitwise equality failed"
        );
    }

    // Run-level: f = 0, r = 0 trajectories coincide bitwise.
    let mut sum_config = line3_async_config();
    sum_config.r = 0;
    sum_config.delay = DelayModel::Constant { iterations: 0 };
    sum_config.iterations = 2_000;
    let family = CostFamily::line3();
    let sum_trace = run(&sum_config, family.clone()).unwrap();
    let mut cge_config = sum_config.clone();
    cge_config.filter = FilterName::Cge;
    let cge_trace = run(&cge_config, family).unwrap();
    assert_eq!(sum_trace, cge_trace, "CGE and Sum runs diverge at f = 0");

    report(
        6,
        "CGE with f = 0 equals the plain sum bitwise, on 100 random sets and on whole runs",
    );
}

#[test]
fn criterion_07_rho_in_unit_interval_on_random_feasible_instances() {
    use rand::Rng;
    let started = Instant::now();
    let mut rng = seeded_rng(707, 0);
    for problem in [
        StochasticProblem::Bs,
        StochasticProblem::Cs,
        StochasticProblem::Ds,
    ] {
        let mut done = 0;
        while done < 500 {
            let n = rng.gen_range(2..=20usize);
            let gamma: f64 = rng.gen_range(0.05..2.0);
            let mu = gamma * rng.gen_range(1.0..3.0);
            let (f, r) = match problem {
                StochasticProblem::Bs => (rng.gen_range(0..n), 0),
                StochasticProblem::Cs => (0, rng.gen_range(0..n)),
                StochasticProblem::Ds => (rng.gen_range(0..n), rng.gen_range(0..n)),
            };
            if f + r >= n {
                continue;
            }
            let p = ProblemParams {
                n,
                f,
                r,
                mu,
                gamma,
                epsilon: rng.gen_range(0.0..1.0),
            };
            let sigma = rng.gen_range(0.0..1.0);
            let diameter = rng.gen_range(0.5..10.0);
            let probe = bounds_thm4(problem, &p, sigma, 1e-9, diameter);
            if !probe.feasible {
                continue;
            }
            let eta_bar = probe.eta_bar.unwrap();
            let eta = rng.gen_range(0.0..eta_bar).max(eta_bar * 1e-9);
            let b = bounds_thm4(problem, &p, sigma, eta, diameter);
            assert!(
                check_rho_range(&b),
                "{problem:?}: rho = {:?} outside [0, 1) for {p:?}, eta = {eta}",
                b.rho
            );
            done += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    report(
        7,
        &format!("rho in [0, 1) on 500 random feasible instances per variant in {elapsed:.2?}"),
    );
}

/// Shared Monte-Carlo bound membership check for the stochastic variants.
/// Asserts mean[t] <= curve(t) + 3 * stderr[t] for every t.
fn monte_carlo_bound_check(
    label: &str,
    config: &RunConfig,
    family: &CostFamily,
    problem: StochasticProblem,
    subset_floor: usize,
) -> (f64, f64) {
    let cert = certify_constants(family, subset_floor).unwrap();
    let epsilon = compute_epsilon(family, config.f, config.r).unwrap().epsilon;

    let probe = rdgd::Simulation::new(config, family.clone()).unwrap();
    let target = probe.target().clone();
    let diameter = probe.feasible_box().max_distance_from(&target);
    let x0 = probe.feasible_box().center();
    let initial_sq = (&x0 - &target).norm_squared();

    let eta = match config.schedule {
        ScheduleConfig::Constant { eta } => eta,
        _ => unreachable!("stochastic runs use constant steps"),
    };
    let sigma = config.noise.unwrap().sigma;
    let bounds = bounds_thm4(
        problem,
        &ProblemParams {
            n: config.n,
            f: config.f,
            r: config.r,
            mu: cert.mu,
            gamma: cert.gamma,
            epsilon,
        },
        sigma,
        eta,
        diameter,
    );
    assert!(
        bounds.feasible,
        "{label}: alpha = {} not positive",
        bounds.alpha
    );
    assert!(
        eta < bounds.eta_bar.unwrap(),
        "{label}: eta = {eta} not below eta_bar = {}",
        bounds.eta_bar.unwrap()
    );
    assert!(check_rho_range(&bounds), "{label}: rho = {:?}", bounds.rho);

    let traces = run_replicated(config, family).unwrap();
    let replications = traces.len() as f64;
    let t_max = config.iterations as usize;

    let mut worst_margin = f64::INFINITY;
    for t in 0..t_max {
        // Record t + 1 holds x^{t+1}; the guarantee bounds its expected
        // squared distance.
        let values: Vec<f64> = traces
            .iter()
            .map(|trace| trace.records[t + 1].dist_to_target.powi(2))
            .collect();
        let mean = values.iter().sum::<f64>() / replications;
        let variance =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (replications - 1.0);
        let stderr = (variance / replications).sqrt();
        let curve = bounds.expectation_curve(initial_sq, t as u64).unwrap();
        assert!(
            mean <= curve + 3.0 * stderr,
            "{label}: t = {t} MC mean {mean} above bound {curve} + 3se {stderr}"
        );
        worst_margin = worst_margin.min(curve + 3.0 * stderr - mean);
    }
    (bounds.rho.unwrap(), worst_margin)
}

#[test]
fn criterion_08_theorem4_cs_monte_carlo_bound() {
    let started = Instant::now();
    let family = isotropic_family(88, 5, 2, 0.1);
    let config = RunConfig {
        family: FamilySource::Preset {
            preset: "unused".into(),
        },
        n: 5,
        f: 0,
        r: 1,
        mode: RunMode::Stochastic {
            problem: StochasticProblem::Cs,
        },
        filter: FilterName::Sum,
        roles: honest_roles(5),
        delay: DelayModel::GeometricTail { p: 0.6 },
        schedule: ScheduleConfig::Constant { eta: 0.25 }, // eta_bar / 2, pinned below
        iterations: 2_000,
        replications: 200,
        box_w: BoxConfig {
            lower: vec![-5.0, -5.0],
            upper: vec![5.0, 5.0],
        },
        noise: Some(NoiseConfig {
            sigma: 0.2,
            batch_size: 1,
            noise_model: NoiseModel::GaussianIsotropicTruncated,
        }),
        seed: 88,
        x0: None,
        parallel_agents: false,
    };

    // Pin eta = eta_bar / 2 from the certified constants.
    let cert = certify_constants(&family, 5 - 1).unwrap();
    let epsilon = compute_epsilon(&family, 0, 1).unwrap().epsilon;
    let eta_bar = bounds_thm4(
        StochasticProblem::Cs,
        &ProblemParams {
            n: 5,
            f: 0,
            r: 1,
            mu: cert.mu,
            gamma: cert.gamma,
            epsilon,
        },
        0.2,
        1e-9,
        1.0,
    )
    .eta_bar
    .unwrap();
    let mut config = config;
    config.schedule = ScheduleConfig::Constant { eta: eta_bar / 2.0 };

    let (rho, margin) =
        monte_carlo_bound_check("criterion 8", &config, &family, StochasticProblem::Cs, 4);

    // Honest-only stochastic run: the aggregate-norm cap applies too
    // (criterion 11 input); check it on the first replication.
    let trace = run(&config, family.clone()).unwrap();
    let probe = rdgd::Simulation::new(&config, family).unwrap();
    let diameter = probe.feasible_box().max_distance_from(probe.target());
    assert_aggregate_norm_bound(&trace, 5, 1, cert.mu, epsilon, diameter, "criterion 8");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    report(
        8,
        &format!("CS Monte-Carlo mean within bound at every t (rho = {rho:.4}, min slack = {margin:.4}, 200 replications) in {elapsed:.2?}"),
    );
}

#[test]
fn criterion_09_theorem4_bs_and_ds_monte_carlo_bounds() {
    let started = Instant::now();

    // BS: synchronous Byzantine learning, r = 0, CGE over all n.
    let bs_family = isotropic_family(99, 5, 2, 0.1);
    let bs_cert = certify_constants(&bs_family, 5 - 1).unwrap();
    let bs_epsilon = compute_epsilon(&bs_family, 1, 0).unwrap().epsilon;
    let bs_eta_bar = bounds_thm4(
        StochasticProblem::Bs,
        &ProblemParams {
            n: 5,
            f: 1,
            r: 0,
            mu: bs_cert.mu,
            gamma: bs_cert.gamma,
            epsilon: bs_epsilon,
        },
        0.2,
        1e-9,
        1.0,
    )
    .eta_bar
    .unwrap();
    let bs_config = RunConfig {
        family: FamilySource::Preset {
            preset: "unused".into(),
        },
        n: 5,
        f: 1,
        r: 0,
        mode: RunMode::Stochastic {
            problem: StochasticProblem::Bs,
        },
        filter: FilterName::Cge,
        roles: vec![
            AgentRole::Honest,
            AgentRole::Byzantine(ByzantineStrategy::ReverseGradient),
            AgentRole::Honest,
            AgentRole::Honest,
            AgentRole::Honest,
        ],
        delay: DelayModel::Constant { iterations: 0 },
        schedule: ScheduleConfig::Constant {
            eta: bs_eta_bar / 2.0,
        },
        iterations: 2_000,
        replications: 200,
        box_w: BoxConfig {
            lower: vec![-5.0, -5.0],
            upper: vec![5.0, 5.0],
        },
        noise: Some(NoiseConfig {
            sigma: 0.2,
            batch_size: 1,
            noise_model: NoiseModel::GaussianIsotropicTruncated,
        }),
        seed: 99,
        x0: None,
        parallel_agents: false,
    };
    let (bs_rho, bs_margin) = monte_carlo_bound_check(
        "criterion 9 BS",
        &bs_config,
        &bs_family,
        StochasticProblem::Bs,
        4,
    );

    // DS: asynchronous Byzantine learning. The margin needs
    // (n - f) gamma > 2 (f + r) mu, and gamma <= mu always, so f = r = 1
    // requires n >= 6 (n = 5 gives alpha = 0 for every admissible family);
    // n = 6 also satisfies the stated n >= 2f + r/2.
    let ds_family = isotropic_family(111, 6, 2, 0.1);
    let ds_cert = certify_constants(&ds_family, 6 - 1).unwrap();
    let ds_epsilon = compute_epsilon(&ds_family, 1, 1).unwrap().epsilon;
    let ds_eta_bar = bounds_thm4(
        StochasticProblem::Ds,
        &ProblemParams {
            n: 6,
            f: 1,
            r: 1,
            mu: ds_cert.mu,
            gamma: ds_cert.gamma,
            epsilon: ds_epsilon,
        },
        0.2,
        1e-9,
        1.0,
    )
    .eta_bar
    .unwrap();
    let ds_config = RunConfig {
        family: FamilySource::Preset {
            preset: "unused".into(),
        },
        n: 6,
        f: 1,
        r: 1,
        mode: RunMode::Stochastic {
            problem: StochasticProblem::Ds,
        },
        filter: FilterName::Cge,
        roles: vec![
            AgentRole::Honest,
            AgentRole::Byzantine(ByzantineStrategy::ReverseGradient),
            AgentRole::Honest,
            AgentRole::Honest,
            AgentRole::Honest,
            AgentRole::Honest,
        ],
        delay: DelayModel::FixedSlowSet {
            slow: BTreeSet::from([5]),
            extra: None,
        },
        schedule: ScheduleConfig::Constant {
            eta: ds_eta_bar / 2.0,
        },
        iterations: 2_000,
        replications: 200,
        box_w: BoxConfig {
            lower: vec![-5.0, -5.0],
            upper: vec![5.0, 5.0],
        },
        noise: Some(NoiseConfig {
            sigma: 0.2,
            batch_size: 1,
            noise_model: NoiseModel::GaussianIsotropicTruncated,
        }),
        seed: 111,
        x0: None,
        parallel_agents: false,
    };
    let (ds_rho, ds_margin) = monte_carlo_bound_check(
        "criterion 9 DS",
        &ds_config,
        &ds_family,
        StochasticProblem::Ds,
        5,
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    report(
        9,
        &format!("BS (rho = {bs_rho:.4}, min slack = {bs_margin:.4}) and DS (rho = {ds_rho:.4}, min slack = {ds_margin:.4}) Monte-Carlo means within bound at every t in {elapsed:.2?}"),
    );
}

#[test]
fn criterion_10_gamma_never_exceeds_mu() {
    use rand::Rng;
    for seed in 0..100u64 {
        let mut rng = seeded_rng(1000 + seed, 0);
        let n = rng.gen_range(2..=10usize);
        let d = rng.gen_range(1..=5usize);
        let floor = rng.gen_range(1..=n);
        let family = generate_family(3000 + seed, n, d, 3.0, (0.1, 5.0)).unwrap();
        let cert = certify_constants(&family, floor).unwrap();
        assert!(
            cert.gamma <= cert.mu,
            "family {seed}: gamma {} > mu {}",
            cert.gamma,
            cert.mu
        );
    }
    report(10, "gamma <= mu on 100 random families");
}

#[test]
fn criterion_11_aggregate_norm_cap_in_honest_runs() {
    // Fresh honest-only runs at several shapes; the caps also run inline in
    // criteria 3, 4, and 8.
    let family = CostFamily::line3();
    let epsilon_r1 = compute_epsilon(&family, 0, 1).unwrap().epsilon;

    let mut fresh = line3_async_config();
    fresh.iterations = 5_000;
    let trace = run(&fresh, family.clone()).unwrap();
    assert_aggregate_norm_bound(&trace, 3, 1, 1.0, epsilon_r1, 11.0, "criterion 11 async");

    let mut stale = line3_async_config();
    stale.mode = RunMode::Stale { tau: 2 };
    stale.delay = DelayModel::RotatingSlow { extra: None };
    stale.iterations = 5_000;
    let trace = run(&stale, family.clone()).unwrap();
    assert_aggregate_norm_bound(&trace, 3, 1, 1.0, epsilon_r1, 11.0, "criterion 11 stale");

    let mut sync = line3_async_config();
    sync.mode = RunMode::Sync;
    sync.r = 0;
    sync.delay = DelayModel::Constant { iterations: 0 };
    sync.iterations = 5_000;
    let epsilon_r0 = compute_epsilon(&family, 0, 0).unwrap().epsilon;
    let trace = run(&sync, family).unwrap();
    assert_aggregate_norm_bound(&trace, 3, 0, 1.0, epsilon_r0, 11.0, "criterion 11 sync");

    report(
        11,
        "aggregate norm within (n - r)(2 n mu eps + mu Gamma) at every logged iteration",
    );
}

#[test]
fn criterion_12_golden_trace_reproduces_byte_for_byte() {
    let config_text = include_str!("data/golden_config.json");
    let golden = include_str!("data/golden_trace.csv");
    let config = RunConfig::from_json(config_text).unwrap();
    let family = config.family.resolve(None).unwrap();

    let serial = run(&config, family.clone()).unwrap().to_csv("pinned");
    assert_eq!(
        serial, golden,
        "serial run diverged from the committed trace"
    );

    let mut parallel_config = config;
    parallel_config.parallel_agents = true;
    let parallel = run(&parallel_config, family).unwrap().to_csv("pinned");
    assert_eq!(
        parallel, golden,
        "parallel run diverged from the committed trace"
    );

    report(
        12,
        "pinned config reproduces the committed trace byte-for-byte, serial and parallel",
    );
}

#[test]
fn criterion_13_m_is_monotone_in_epsilon_and_sigma() {
    use rand::Rng;
    let mut rng = seeded_rng(1313, 0);
    for problem in [
        StochasticProblem::Bs,
        StochasticProblem::Cs,
        StochasticProblem::Ds,
    ] {
        let mut done = 0;
        while done < 100 {
            let n = rng.gen_range(2..=20usize);
            let gamma: f64 = rng.gen_range(0.05..2.0);
            let mu = gamma * rng.gen_range(1.0..3.0);
            let (f, r) = match problem {
                StochasticProblem::Bs => (rng.gen_range(0..n), 0),
                StochasticProblem::Cs => (0, rng.gen_range(0..n)),
                StochasticProblem::Ds => (rng.gen_range(0..n), rng.gen_range(0..n)),
            };
            if f + r >= n {
                continue;
            }
            let p = ProblemParams {
                n,
                f,
                r,
                mu,
                gamma,
                epsilon: rng.gen_range(0.0..1.0),
            };
            let sigma = rng.gen_range(0.0..1.0);
            let eta = rng.gen_range(1e-4..0.1);
            let diameter = rng.gen_range(0.5..10.0);
            let base = bounds_thm4(problem, &p, sigma, eta, diameter)
                .m_margin
                .unwrap();
            let mut p_eps = p;
            p_eps.epsilon += 0.03;
            let more_eps = bounds_thm4(problem, &p_eps, sigma, eta, diameter)
                .m_margin
                .unwrap();
            let more_sigma = bounds_thm4(problem, &p, sigma + 0.03, eta, diameter)
                .m_margin
                .unwrap();
            assert!(more_eps >= base, "{problem:?}: M not monotone in epsilon");
            assert!(more_sigma >= base, "{problem:?}: M not monotone in sigma");
            done += 1;
        }
    }
    report(
        13,
        "M nondecreasing in epsilon and sigma, 100 probes per variant",
    );
}
