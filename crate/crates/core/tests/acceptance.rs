//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.
//!
//! `ACCEPTANCE_ONLY=1,4` restricts the run to the listed criteria.
//! `ACCEPTANCE_PIPELINE_SECONDS` shortens the wall-clock budget of the
//! pipeline check (criterion 8) for local iteration; the default is 10.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anytime_maxsat::assess::{
    self, auc, ecdf_at, ecdf_curve, hits_at, make_time_grid, score, GridScale, RunOutcome,
    TargetSet,
};
use anytime_maxsat::experiment::{self, ExperimentPlan, GridSettings};
use anytime_maxsat::generate::{self, GeneratorKind, RandomWpmsParams, StaircaseParams};
use anytime_maxsat::hpo::{self, CostMode, Evaluator, HpoTargetStore, ParamSpace, TuneOptions};
use anytime_maxsat::solver::{
    self, Budget, Clock, RunResult, Searcher, SolveOptions, SolverConfig,
};
use anytime_maxsat::{Trajectory, TrajectoryEvent, WcnfInstance};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_trajectory(rng: &mut ChaCha8Rng, max_events: usize, max_cost: u64) -> Trajectory {
    let k = rng.random_range(0..=max_events);
    let mut costs: BTreeSet<u64> = BTreeSet::new();
    while costs.len() < k.min(max_cost as usize + 1) {
        costs.insert(rng.random_range(0..=max_cost));
    }
    let mut flips = 0u64;
    let mut elapsed = 0.0f64;
    let events = costs
        .into_iter()
        .rev()
        .map(|cost| {
            flips += rng.random_range(0..1000);
            elapsed += rng.random_range(0.0..2.0);
            TrajectoryEvent {
                elapsed,
                flips,
                cost,
            }
        })
        .collect();
    Trajectory::from_events(events).expect("valid by construction")
}

/// Best cost at `t` by a linear scan.
fn brute_best(trajectory: &Trajectory, t: f64, clock: Clock) -> Option<u64> {
    let mut best = None;
    for e in trajectory.events() {
        if e.time(clock) <= t {
            best = Some(e.cost);
        }
    }
    best
}

fn brute_hits(targets: &[u64], best: Option<u64>) -> u64 {
    match best {
        Some(b) => targets.iter().filter(|&&phi| phi >= b).count() as u64,
        None => 0,
    }
}

fn c1_ecdf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for case in 0..10_000 {
        let traj = random_trajectory(&mut rng, 12, 200);
        let n = rng.random_range(1..=50);
        let raw: Vec<u64> = (0..n).map(|_| rng.random_range(0..=220)).collect();
        let targets = TargetSet::new("i", raw.iter().copied());
        let clock = if case % 2 == 0 {
            Clock::Flips
        } else {
            Clock::Seconds
        };
        let t = match (rng.random_range(0..3), traj.events().len()) {
            (0, len) if len > 0 => traj.events()[rng.random_range(0..len)].time(clock),
            _ => rng.random_range(0.0..15_000.0),
        };
        let distinct: Vec<u64> = raw
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let hits = brute_hits(&distinct, brute_best(&traj, t, clock));
        let expected = Ratio::new(hits, distinct.len() as u64);
        let got_hits = hits_at(&traj, &targets, t, clock) as u64;
        let got = ecdf_at(&traj, &targets, t, clock);
        if got_hits != hits || Some(got) != expected.to_f64() {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("10000 triples, {mismatches} mismatches"),
    )
}

fn c2_scores() -> Outcome {
    let mut ok = score(9, Some(19)).unwrap() == 0.5;
    ok &= (0..100).all(|b| score(b, Some(b)).unwrap() == 1.0);
    ok &= score(9, None).unwrap() == 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..1000 {
        let best = rng.random_range(0..1_000_000u64);
        let a = best + rng.random_range(0..1_000_000);
        let b = best + rng.random_range(0..1_000_000);
        let (sa, sb) = (score(best, Some(a)).unwrap(), score(best, Some(b)).unwrap());
        let in_range = sa > 0.0 && sa <= 1.0 && sb > 0.0 && sb <= 1.0;
        let monotone = (a < b) == (sa > sb) && (a == b) == (sa == sb);
        if !in_range || !monotone {
            violations += 1;
        }
    }
    ok &= violations == 0;
    outcome(
        ok,
        format!("exact examples and 1000 random pairs, {violations} violations"),
    )
}

fn c3_curves() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = make_time_grid(0.1, 5000.0, 100, GridScale::Log).unwrap();
    let (mut bad_monotone, mut bad_range, mut max_err) = (0, 0, 0.0f64);
    for _ in 0..1000 {
        let traj = random_trajectory(&mut rng, 10, 100);
        let n = rng.random_range(1..=30);
        let targets = TargetSet::new("i", (0..n).map(|_| rng.random_range(0..=120u64)));
        let curve = ecdf_curve(&traj, &targets, &grid, Clock::Flips);
        if curve.values.windows(2).any(|w| w[0] > w[1]) {
            bad_monotone += 1;
        }
        let a = auc(&curve);
        if !(0.0..=1.0).contains(&a) {
            bad_range += 1;
        }
        let brute: f64 = grid
            .points()
            .iter()
            .map(|&t| {
                brute_hits(targets.values(), brute_best(&traj, t, Clock::Flips)) as f64
                    / targets.len() as f64
            })
            .sum::<f64>()
            / grid.len() as f64;
        max_err = max_err.max((a - brute).abs());
    }
    outcome(
        bad_monotone == 0 && bad_range == 0 && max_err <= 1e-12,
        format!("1000 runs, {bad_monotone} non-monotone, {bad_range} out of range, max |AUC - mean| = {max_err:e}"),
    )
}

/// Cost of `values`, evaluated straight from the clause lists.
fn checker(inst: &WcnfInstance, values: &[bool]) -> Option<u64> {
    let sat = |lits: &[anytime_maxsat::Literal]| {
        lits.iter()
            .any(|l| values[(l.var() - 1) as usize] != l.is_negated())
    };
    if inst.is_trivially_infeasible() || inst.hard_clauses().iter().any(|c| !sat(c.literals())) {
        return None;
    }
    Some(
        inst.cost_offset()
            + inst
                .soft_clauses()
                .iter()
                .filter(|c| !sat(c.literals()))
                .map(|c| c.weight().unwrap())
                .sum::<u64>(),
    )
}

fn exhaustive_optimum(inst: &WcnfInstance) -> Option<u64> {
    let n = inst.num_vars();
    (0u32..1 << n)
        .filter_map(|bits| {
            let values: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            checker(inst, &values)
        })
        .min()
}

fn c4_solver_correctness() -> Outcome {
    let mut instances = Vec::new();
    for k in 0..20u64 {
        let n = 8 + (k as usize % 9);
        let inst = if k % 4 == 3 {
            generate::staircase(&StaircaseParams::new(n), k, &format!("stair{k}")).unwrap()
        } else {
            let mut p = RandomWpmsParams::new(n, 3 * n + (k as usize % 3) * n);
            p.max_weight = 20;
            generate::random_wpms(&p, k, &format!("rnd{k}")).unwrap()
        };
        instances.push(inst);
    }
    let mut bad_solutions = 0;
    let mut worst_rate = 1.0f64;
    let mut worst = String::new();
    for inst in &instances {
        let opt = exhaustive_optimum(inst).expect("generated instances are feasible");
        let mut hits = 0;
        for seed in 0..10 {
            let run = solver::solve_with(
                inst,
                &SolverConfig::default().with_seed(seed),
                Budget::Flips(1_000_000),
                SolveOptions {
                    keep_event_assignments: true,
                },
            )
            .unwrap();
            for (e, a) in run.trajectory.events().iter().zip(&run.event_assignments) {
                if checker(inst, a.values()) != Some(e.cost) {
                    bad_solutions += 1;
                }
            }
            match &run.best_assignment {
                Some(a) if checker(inst, a.values()) == run.best_cost => {}
                _ => bad_solutions += 1,
            }
            if run.best_cost == Some(opt) {
                hits += 1;
            }
        }
        let rate = hits as f64 / 10.0;
        if rate < worst_rate {
            worst_rate = rate;
            worst = inst.name().to_string();
        }
    }
    outcome(
        bad_solutions == 0 && worst_rate >= 0.9,
        format!(
            "20 instances x 10 seeds, {bad_solutions} checker failures, worst optimum rate {:.0}%{}",
            worst_rate * 100.0,
            if worst.is_empty() { String::new() } else { format!(" ({worst})") }
        ),
    )
}

fn c5_bookkeeping() -> Outcome {
    let mut discrepancies = 0;
    let mut checks = 0;
    for k in 0..5u64 {
        let mut p = RandomWpmsParams::new(150 + 50 * k as usize, 600 + 200 * k as usize);
        p.max_weight = 50;
        let inst = generate::random_wpms(&p, 500 + k, "b").unwrap();
        let config = SolverConfig {
            smooth_prob: 0.01,
            ..SolverConfig::default().with_seed(k)
        };
        let mut s = Searcher::new(&inst, config).unwrap();
        s.randomize();
        for flip in 1..=100_000u64 {
            if s.step().is_none() {
                s.randomize();
            }
            if flip % 500 == 0 {
                checks += 1;
                if s.verify_bookkeeping().is_err() {
                    discrepancies += 1;
                }
            }
        }
    }
    outcome(
        discrepancies == 0 && checks == 1000,
        format!("{checks} shadow recomputations, {discrepancies} discrepancies"),
    )
}

fn run_from(events: &[(u64, u64)]) -> RunResult {
    let trajectory = Trajectory::from_events(
        events
            .iter()
            .map(|&(flips, cost)| TrajectoryEvent {
                elapsed: flips as f64 * 1e-7,
                flips,
                cost,
            })
            .collect(),
    )
    .unwrap();
    RunResult {
        best_cost: trajectory.final_cost(),
        trajectory,
        best_assignment: None,
        total_flips: 1_000_000,
        total_elapsed: 0.1,
        event_assignments: Vec::new(),
    }
}

fn c6_discrimination() -> Outcome {
    let fast = run_from(&[(0, 120), (200, 60), (1_000, 35)]);
    let slow = run_from(&[(0, 120), (300_000, 80), (900_000, 35)]);
    let grid = hpo::hpo_time_grid(1_000_000.0).unwrap();
    // targets bootstrapped from a default run ending at 40
    let boot = hpo::bootstrap_from_run("i", &run_from(&[(0, 120), (5_000, 40)]));
    let mut store = HpoTargetStore::in_memory();
    store.insert_bootstrap("i", boot).unwrap();
    store.update_targets("i", 35).unwrap();
    let targets = &store.get("i").unwrap().targets;

    let bf = (
        hpo::cost_bestf(&fast, 500).value,
        hpo::cost_bestf(&slow, 500).value,
    );
    let ep = (
        hpo::cost_ecdf_prime(&fast, targets, &grid, Clock::Flips).value,
        hpo::cost_ecdf_prime(&slow, targets, &grid, Clock::Flips).value,
    );
    let synthetic = bf.0 == bf.1 && ep.0 < ep.1;

    // the same comparison on real runs: one instance, a reference run, and
    // the reference trajectory replayed 9e5 flips late
    let inst = generate::staircase(&StaircaseParams::new(60), 6, "s").unwrap();
    let real = solver::solve(
        &inst,
        &SolverConfig::default().with_seed(1),
        Budget::Flips(1_000_000),
    )
    .unwrap();
    let last = real.trajectory.events().last().map_or(0, |e| e.flips);
    let delayed = run_from(
        &real
            .trajectory
            .events()
            .iter()
            .map(|e| {
                if e.flips == last {
                    (900_000, e.cost)
                } else {
                    (e.flips, e.cost)
                }
            })
            .collect::<Vec<_>>(),
    );
    let boot = hpo::bootstrap_from_run("s", &real);
    let real_ok = last <= 1_000
        && hpo::cost_bestf(&real, inst.soft_weight_sum()).value
            == hpo::cost_bestf(&delayed, inst.soft_weight_sum()).value
        && hpo::cost_ecdf_prime(&real, &boot.targets, &grid, Clock::Flips).value
            < hpo::cost_ecdf_prime(&delayed, &boot.targets, &grid, Clock::Flips).value;
    outcome(
        synthetic && real_ok,
        format!(
            "best-f {} vs {}, ecdf' {} vs {}; solver run final event at flip {last}, replay check {}",
            bf.0,
            bf.1,
            ep.0,
            ep.1,
            if real_ok { "ok" } else { "failed" }
        ),
    )
}

/// Aggregated AUC (runs, then instances) per solver over a shared target set.
fn aggregated_auc(runs: &[RunOutcome], budget: u64) -> Vec<(String, f64)> {
    let grid = make_time_grid(1.0, budget as f64, 100, GridScale::Log).unwrap();
    let a = assess::assess(runs, &grid, Clock::Flips).unwrap();
    let track = &a.tracks[0];
    a.solvers
        .iter()
        .cloned()
        .zip(track.auc.iter().map(|x| x.unwrap_or(0.0)))
        .collect()
}

fn c7_tuning_comparison() -> Outcome {
    let size: usize = env_or("ACCEPTANCE_TUNE_SIZE", 1000);
    let budget: u64 = env_or("ACCEPTANCE_TUNE_FLIPS", 60_000);
    let reps: usize = env_or("ACCEPTANCE_TUNE_REPS", 5);
    let replications: usize = env_or("ACCEPTANCE_TUNE_REPLICATIONS", 1);
    let test_seeds: u64 = env_or("ACCEPTANCE_TUNE_TEST_SEEDS", 5);
    let instances: Vec<WcnfInstance> = (0..10)
        .map(|k| {
            generate::staircase(&StaircaseParams::new(size), 700 + k, &format!("stair{k}")).unwrap()
        })
        .collect();
    let training = &instances[..2];
    let mut wins = 0;
    let mut lines = Vec::new();
    for rep in 0..reps {
        let mut chosen = Vec::new();
        for mode in [CostMode::BestF, CostMode::EcdfPrime] {
            let evaluator =
                Evaluator::new(ParamSpace::solver_default(), HpoTargetStore::in_memory());
            let out = hpo::tune(
                &evaluator,
                training,
                &TuneOptions {
                    mode,
                    eval_budget: 30,
                    seed: 9_000 + rep as u64,
                    budget: Budget::Flips(budget / 3),
                    replications,
                    threads: 1,
                },
            )
            .unwrap();
            let config = hpo::to_solver_config(&out.best, &SolverConfig::default()).unwrap();
            chosen.push((mode, out.best_index, config));
        }
        let mut runs = Vec::new();
        for (mode, _, config) in &chosen {
            for inst in &instances {
                for seed in 0..test_seeds {
                    let run =
                        solver::solve(inst, &config.clone().with_seed(seed), Budget::Flips(budget))
                            .unwrap();
                    runs.push(RunOutcome {
                        solver: mode.to_string(),
                        instance: inst.name().to_string(),
                        track: "staircase".into(),
                        trajectory: run.trajectory,
                    });
                }
            }
        }
        let aucs = aggregated_auc(&runs, budget);
        let get = |name: &str| aucs.iter().find(|(s, _)| s == name).unwrap().1;
        let (bf, ep) = (get("best-f"), get("ecdf-prime"));
        if ep >= bf {
            wins += 1;
        }
        lines.push(format!(
            "rep {rep}: candidates {}/{}, AUC best-f {bf:.4} ecdf' {ep:.4}",
            chosen[0].1, chosen[1].1
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    let needed = (reps * 4).div_ceil(5);
    outcome(
        wins >= needed,
        format!(
            "ecdf-prime tuned AUC >= best-f tuned in {wins}/{reps} repetitions (need {needed})"
        ),
    )
}

fn env_or<T: std::str::FromStr>(name: &str, default: T) -> T {
    std::env::var(name)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn c8_pipeline() -> Outcome {
    let seconds: f64 = env_or("ACCEPTANCE_PIPELINE_SECONDS", 10.0);
    let root = tempfile::tempdir().unwrap();
    let inst_dir = root.path().join("instances");
    experiment::cmd_gen(
        GeneratorKind::RandomWpms,
        300,
        Some(1300),
        1,
        5,
        &inst_dir.join("random"),
    )
    .unwrap();
    experiment::cmd_gen(
        GeneratorKind::Staircase,
        2000,
        None,
        1,
        5,
        &inst_dir.join("staircase"),
    )
    .unwrap();
    let mut configs = std::collections::BTreeMap::new();
    configs.insert("default".to_string(), SolverConfig::default());
    configs.insert(
        "walky".to_string(),
        SolverConfig {
            random_walk_prob: 0.4,
            bms_size: 5,
            ..SolverConfig::default()
        },
    );
    let plan = ExperimentPlan {
        configs,
        instances: vec![inst_dir.clone()],
        seeds: (1..=5).collect(),
        budget: Budget::Seconds(seconds),
        output: root.path().join("logs"),
        grid: GridSettings::default(),
        threads: None,
        append: false,
    };
    let summary = experiment::cmd_run(&plan).unwrap();
    let first = root.path().join("reports1");
    let second = root.path().join("reports2");
    let a = experiment::cmd_assess(&plan.output, &GridSettings::default(), &first).unwrap();
    experiment::cmd_assess(&plan.output, &GridSettings::default(), &second).unwrap();

    let expected = [
        "auc.csv",
        "curve_default.csv",
        "curve_walky.csv",
        "heat_auc.csv",
        "heat_scores.csv",
        "scores.csv",
        "wins.csv",
    ];
    let files = dir_bytes(&first);
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    let all_files = expected
        .iter()
        .all(|e| names.contains(e) && fs::metadata(first.join(e)).unwrap().len() > 0);

    let wins = fs::read_to_string(first.join("wins.csv")).unwrap();
    let wins_ok = wins.lines().skip(1).all(|l| {
        let f: Vec<&str> = l.split(',').collect();
        let (b, a): (u32, u32) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        b <= 10 && a <= 10
    });
    let heat = fs::read_to_string(first.join("heat_auc.csv")).unwrap();
    let rows: Vec<Vec<&str>> = heat.lines().map(|l| l.split(',').collect()).collect();
    let dims = (rows.len() - 1, rows[0].len() - 1);
    let identical = files == dir_bytes(&second);
    outcome(
        summary.records == 100
            && summary.failures.is_empty()
            && a.runs == 100
            && all_files
            && wins_ok
            && dims == (2, 10)
            && identical,
        format!(
            "{} runs of {seconds}s, reports {}, wins <= 10 {}, AUC matrix {}x{}, rerun identical {}",
            summary.records,
            if all_files { "complete" } else { "missing" },
            wins_ok,
            dims.0,
            dims.1,
            identical
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 8] = [
        (1, "ecdf oracle equivalence", c1_ecdf_oracle),
        (2, "score checks", c2_scores),
        (3, "curve monotonicity and AUC", c3_curves),
        (4, "solver correctness", c4_solver_correctness),
        (5, "incremental bookkeeping", c5_bookkeeping),
        (6, "tuning cost discrimination", c6_discrimination),
        (7, "tuning comparison", c7_tuning_comparison),
        (8, "end-to-end pipeline", c8_pipeline),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {id} {name}: {} ({}; {:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
