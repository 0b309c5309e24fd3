//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints exactly one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tampa::complaints::{kolmogorov_distance, tv_distance, ComplaintPmf, CountHistogram, EmpiricalEstimator};
use tampa::detector::{dkw_event, dkw_threshold, DistanceForm};
use tampa::engine::report::{run_all, summarize};
use tampa::engine::{Execution, RunConfig, RunOutcome, Strategy};
use tampa::graph::{EdgeWeighting, NodeId, ShortestPaths};
use tampa::scenario::Scenario;
use tampa::traffic::{complaint_pmf, generate_complaints, ComplaintProcessParams};

use common::{floyd, random_graph, random_weights, Instance, C_MAX};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn dp_exactness() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1);
    let mut matched = 0;
    let mut mismatches = Vec::new();
    for i in 0..200 {
        let inst = Instance::random(&mut rng, 5, 4, i % 2 == 0);
        let plan = inst.mdp().solve().unwrap();
        let (value, seq) = inst.window().brute_force();
        if plan.value == value && plan.actions == seq {
            matched += 1;
        } else if mismatches.len() < 3 {
            mismatches.push(format!("#{i}: dp {} {:?} vs {} {:?}", plan.value, plan.actions, value, seq));
        }
    }
    let elapsed = started.elapsed();
    verdict(
        matched == 200 && within(elapsed, 10),
        format!("{matched}/200 instances agree exactly in J and plan, {elapsed:.1?} {}", mismatches.join("; ")),
    )
}

fn blend(p: &ComplaintPmf, q: &ComplaintPmf, eps: f64) -> ComplaintPmf {
    let w: Vec<f64> = p.probs().iter().zip(q.probs()).map(|(a, b)| (1.0 - eps) * a + eps * b).collect();
    ComplaintPmf::from_weights(&w).unwrap()
}

fn value_bound() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    let pairs = 1200;
    for i in 0..pairs {
        let mut p = Instance::random(&mut rng, 5, 4, false);
        // three flavours: independent families, small perturbations, and an
        // estimate against the generator's own pmf
        let other: BTreeMap<_, _> = match i % 3 {
            0 => common::random_pmfs(&mut rng, &p.graph, false),
            1 => p
                .pmfs
                .iter()
                .map(|(&e, x)| {
                    let eps = rng.random_range(0.0..0.1);
                    (e, blend(x, &common::random_pmf(&mut rng, false), eps))
                })
                .collect(),
            _ => {
                let mut estimates = BTreeMap::new();
                let mut truths = BTreeMap::new();
                for e in p.graph.edges() {
                    let truth = complaint_pmf(rng.random_range(0.0..30.0), 0.5, 0.2, C_MAX);
                    let mut est = EmpiricalEstimator::new(ComplaintPmf::uniform(0, C_MAX, C_MAX), 50).unwrap();
                    for _ in 0..rng.random_range(0..300) {
                        est.update(truth.sample(&mut rng));
                    }
                    estimates.insert(e, est.pmf().clone());
                    truths.insert(e, truth);
                }
                p.pmfs = estimates;
                truths
            }
        };
        let q = Instance {
            graph: p.graph.clone(),
            slots: p.slots.clone(),
            pmfs: other,
            ..p
        };
        let jp = p.mdp().solve().unwrap().value;
        let jq = q.mdp().solve().unwrap().value;
        let tv: f64 = q.pmfs.iter().map(|(e, x)| tv_distance(&p.pmfs[e], x).unwrap()).sum();
        let k = q.slots.len() as f64;
        let e_max = q.window().e_max() as f64;
        let bound = (1.0 - q.lambda) * C_MAX as f64 * k * k * f64::from(q.tau) * e_max * tv;
        let gap = (jp - jq).abs();
        if gap > bound + 1e-9 * (1.0 + jp.abs().max(jq.abs())) {
            violations += 1;
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(gap / bound);
        }
    }
    let elapsed = started.elapsed();
    verdict(
        violations == 0 && within(elapsed, 60),
        format!("{violations} violations over {pairs} pairs, largest gap/bound {worst_ratio:.3}, {elapsed:.1?}"),
    )
}

fn dkw_calibration() -> Verdict {
    let started = Instant::now();
    let weights = [4.0, 16.0, 30.0];
    let edges: Vec<_> = (0..weights.len() as u32).map(|i| (NodeId(i), NodeId(i + 1))).collect();
    let params = ComplaintProcessParams::stationary(edges.iter().copied().zip(weights).collect());
    let truth: Vec<ComplaintPmf> = weights.iter().map(|&w| complaint_pmf(w, 0.5, 0.2, C_MAX)).collect();
    let checkpoints = [200u64, 500, 2000];
    let trials = 500;
    let mut fires = vec![[0usize; 3]; weights.len()];
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let mut hist: Vec<CountHistogram> = weights.iter().map(|_| CountHistogram::new(C_MAX)).collect();
        let mut next = 0;
        for t in 1..=2000u64 {
            let counts = generate_complaints(&params, t as u32, &mut rng).unwrap();
            for (h, e) in hist.iter_mut().zip(&edges) {
                h.push(counts[e]);
            }
            if t == checkpoints[next] {
                let q = dkw_threshold(t).unwrap();
                for (i, h) in hist.iter().enumerate() {
                    if dkw_event(&truth[i], &h.to_pmf().unwrap(), q, DistanceForm::Cdf).unwrap() {
                        fires[i][next] += 1;
                    }
                }
                next += 1;
                if next == checkpoints.len() {
                    break;
                }
            }
        }
    }
    let worst = fires.iter().flatten().copied().max().unwrap() as f64 / trials as f64;
    let elapsed = started.elapsed();
    verdict(
        worst <= 0.12 && within(elapsed, 60),
        format!(
            "worst per-edge false-positive rate {:.1}% over {trials} trials at t in {checkpoints:?}, {elapsed:.1?}",
            100.0 * worst
        ),
    )
}

fn estimator_convergence() -> Verdict {
    let truth = complaint_pmf(10.0, 0.5, 0.2, C_MAX);
    let e = (NodeId(0), NodeId(1));
    let params = ComplaintProcessParams::stationary(BTreeMap::from([(e, 10.0)]));
    let mut good = 0;
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + trial);
        let mut est = EmpiricalEstimator::new(ComplaintPmf::uniform(0, C_MAX, C_MAX), 50).unwrap();
        for t in 0..2000 {
            est.update(generate_complaints(&params, t, &mut rng).unwrap()[&e]);
        }
        let d = kolmogorov_distance(est.pmf(), &truth).unwrap();
        worst = worst.max(d);
        if d <= 0.05 {
            good += 1;
        }
    }
    verdict(
        good >= 95,
        format!("{good}/100 trials within 0.05 after 2000 updates from a uniform prior of weight 50, worst {worst:.4}"),
    )
}

fn split_conservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5B);
    let mut failures = Vec::new();
    for i in 0..1000 {
        let n = rng.random_range(2..=7);
        let g = random_graph(&mut rng, n, false);
        let w = random_weights(&mut rng, &g, false);
        let edges: Vec<_> = g.edges().collect();
        let (o, d) = edges[rng.random_range(0..edges.len())];
        let ratio = rng.random_range(0.01..0.99);
        let (h, split) = g.split_edge(o, d, ratio).unwrap();
        let w2 = w.split(&split);
        let v = split.node;
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-300);

        let mut ok = true;
        ok &= rel(h.length(o, v).unwrap() + h.length(v, d).unwrap(), g.length(o, d).unwrap());
        ok &= rel(h.length(d, v).unwrap() + h.length(v, o).unwrap(), g.length(d, o).unwrap());
        ok &= rel(w2.get((o, v)).unwrap() + w2.get((v, d)).unwrap(), w.get((o, d)).unwrap());
        ok &= rel(w2.get((d, v)).unwrap() + w2.get((v, o)).unwrap(), w.get((d, o)).unwrap());
        ok &= h.edges().all(|(a, b)| h.length(a, b).unwrap() == h.length(b, a).unwrap());

        let (a, b, p) = (g.coords(o).unwrap(), g.coords(d).unwrap(), h.coords(v).unwrap());
        let seg = a.distance(b);
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        ok &= cross.abs() <= 1e-9 * seg * seg.max(1.0);
        ok &= (a.distance(p) + p.distance(b) - seg).abs() <= 1e-9 * seg.max(1.0);

        let lengths = EdgeWeighting::from_map(g.lengths().clone());
        let lengths2 = EdgeWeighting::from_map(h.lengths().clone());
        for (before, after) in [(floyd(&g, &w), (&h, &w2)), (floyd(&g, &lengths), (&h, &lengths2))] {
            let sp = ShortestPaths::compute(after.0, after.1).unwrap();
            for (&(x, y), &dist) in &before {
                ok &= rel(sp.distance(x, y).unwrap(), dist) || (dist == 0.0 && sp.distance(x, y).unwrap() == 0.0);
            }
        }
        if !ok && failures.len() < 3 {
            failures.push(format!("#{i} split ({o}, {d}) at {ratio:.3}"));
        }
        if !ok && failures.len() >= 3 {
            break;
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "1000 random splits conserve lengths, travel times and old-node distances; collinear{}",
            if failures.is_empty() { String::new() } else { format!(" except {}", failures.join(", ")) }
        ),
    )
}

struct Reproduction {
    scenario: Scenario,
    outcomes: Vec<RunOutcome>,
    elapsed: Duration,
}

const SEEDS: usize = 20;

fn by_strategy(r: &Reproduction, s: Strategy) -> &[RunOutcome] {
    let i = Strategy::ALL.iter().position(|&x| x == s).unwrap();
    &r.outcomes[i * SEEDS..(i + 1) * SEEDS]
}

fn reproduce() -> Reproduction {
    let scenario = Scenario::flatbush12();
    let seeds: Vec<u64> = (1..=SEEDS as u64).collect();
    let started = Instant::now();
    let outcomes = run_all(&scenario, &RunConfig::default(), &Strategy::ALL, &seeds, Execution::Parallel).unwrap();
    Reproduction {
        scenario,
        outcomes,
        elapsed: started.elapsed(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Paired t statistic of `a - b`.
fn t_stat(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    m / (var / d.len() as f64).sqrt()
}

fn directional(r: &Reproduction) -> Verdict {
    let seeds: Vec<u64> = (1..=SEEDS as u64).collect();
    let report = summarize(&r.scenario, &Strategy::ALL, &seeds, &r.outcomes).unwrap();
    let q = |s| -> Vec<f64> { by_strategy(r, s).iter().map(|o| o.metrics.global_cost).collect() };
    let (qt, qs, qr) = (q(Strategy::Tampa), q(Strategy::Stationary), q(Strategy::Random));
    let (mt, ms, mr) = (mean(&qt), mean(&qs), mean(&qr));
    // two-sided 5% critical value of Student t with 19 degrees of freedom
    let critical = 2.093_024;
    let sig = |a: &[f64], b: &[f64], sa, sb| {
        let t = t_stat(a, b);
        let p = report.pair(sa, sb).unwrap().test.p_value;
        t > critical && p < 0.05
    };
    let ordered = mt > ms && ms > mr;
    let significant = sig(&qt, &qs, Strategy::Tampa, Strategy::Stationary)
        && sig(&qt, &qr, Strategy::Tampa, Strategy::Random)
        && sig(&qs, &qr, Strategy::Stationary, Strategy::Random);
    let over_stationary = 100.0 * (mt - ms) / ms.abs();
    let over_random = 100.0 * (mt - mr) / mr.abs();
    verdict(
        ordered && significant && over_stationary >= 30.0 && over_random >= 50.0 && within(r.elapsed, 300),
        format!(
            "mean Q tampa {mt:.1} > stationary {ms:.1} > random {mr:.1}; improvement {over_stationary:.1}% and {over_random:.1}%; all pairs significant: {significant}; {:.1?} for 60 runs",
            r.elapsed
        ),
    )
}

fn pre_shift(r: &Reproduction) -> Verdict {
    let shift = r.scenario.first_shift().unwrap();
    let (mut eligible, mut identical) = (0, 0);
    for (a, b) in by_strategy(r, Strategy::Tampa).iter().zip(by_strategy(r, Strategy::Stationary)) {
        if a.metrics.trigger_times.iter().any(|&t| t < shift) {
            continue;
        }
        eligible += 1;
        let before = |o: &RunOutcome| o.trajectory.records.iter().filter(|x| x.t < shift).cloned().collect::<Vec<_>>();
        let (ra, rb) = (before(a), before(b));
        if ra == rb && ra.len() > 1 {
            identical += 1;
        }
    }
    verdict(
        eligible > 0 && identical == eligible,
        format!("records before minute {shift} identical in {identical}/{eligible} seeds without an early trigger"),
    )
}

fn near_fraction(o: &RunOutcome, base: &BTreeMap<NodeId, f64>, from: u32, to: u32) -> f64 {
    let mut hops = base.clone();
    for s in &o.metrics.splits {
        if let (Some(a), Some(b)) = (hops.get(&s.origin), hops.get(&s.dest)) {
            let mid = 0.5 * (a + b);
            hops.insert(s.node, mid);
        }
    }
    let near = (from..to)
        .filter(|&m| {
            let v = o.trajectory.node_at(m).unwrap();
            hops.get(&v).is_some_and(|&h| h <= 1.0)
        })
        .count();
    near as f64 / f64::from(to - from)
}

fn hotspot_tracking(r: &Reproduction) -> Verdict {
    let shift = r.scenario.first_shift().unwrap();
    let base = common::hops_from(&r.scenario.graph, NodeId(4));
    let share = |s| {
        mean(
            &by_strategy(r, s)
                .iter()
                .map(|o| near_fraction(o, &base, shift, r.scenario.horizon))
                .collect::<Vec<_>>(),
        )
    };
    let (t, s, x) = (share(Strategy::Tampa), share(Strategy::Stationary), share(Strategy::Random));
    verdict(
        t >= 0.8 && s < 0.5 && x < 0.5,
        format!("post-shift time within one hop of node 4: tampa {t:.3}, stationary {s:.3}, random {x:.3}"),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Verdict {
    let commands: Vec<Vec<String>> = vec![
        "simulate --scenario flatbush12 --seeds 7 --strategy tampa",
        "simulate --scenario flatbush12 --seeds 7 --strategy stationary",
        "simulate --scenario flatbush12 --seeds 7 --strategy random",
        "compare --scenario flatbush12 --seeds 1-3",
        "sweep --scenario flatbush12 --seeds 1-2 --param lambda --values 0,0.5,1",
    ]
    .into_iter()
    .map(|c| c.split(' ').map(String::from).collect())
    .collect();
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (i, cmd) in commands.iter().enumerate() {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let mut args = vec!["tampa".to_string()];
                args.extend(cmd.iter().cloned());
                args.extend(["--out".to_string(), dir.path().display().to_string()]);
                let code = tampa::cli::run_cli(args);
                (code, read_tree(dir.path()))
            })
            .collect();
        files += runs[0].1.len();
        if runs[0].0 != 0 || runs[0] != runs[1] || runs[0].1.is_empty() {
            mismatched.push(i);
        }
    }
    verdict(
        mismatched.is_empty(),
        format!(
            "{} commands run twice, {files} files byte-identical{}",
            commands.len(),
            if mismatched.is_empty() { String::new() } else { format!("; differing commands {mismatched:?}") }
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Verdict)> = vec![
        ("planner agrees with exhaustive enumeration", dp_exactness()),
        ("value gap bounded by total variation", value_bound()),
        ("shift test false-positive rate", dkw_calibration()),
        ("estimator convergence", estimator_convergence()),
        ("split conservation", split_conservation()),
    ];
    let repro = reproduce();
    results.push(("directional strategy ordering on flatbush12", directional(&repro)));
    results.push(("pre-shift coincidence", pre_shift(&repro)));
    results.push(("hotspot tracking", hotspot_tracking(&repro)));
    results.push(("byte-identical reruns", determinism()));

    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("criterion {}: {} [{}] {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, name, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
