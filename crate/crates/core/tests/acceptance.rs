//! Acceptance run over a fixed random suite. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any criterion fails.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use congest_apsp::blocker::{beta_pass, compute_scores, run_blocker, size_bound, v_i, Mode, Params};
use congest_apsp::csssp::{build_csssp, Direction};
use congest_apsp::derand::{find_good_point, PrimeSpace, SampleSpace, Selection, XorSpace};
use congest_apsp::engine::{EngineConfig, Sim};
use congest_apsp::fraction::{big, ceil_root};
use congest_apsp::graph::generate_graph;
use congest_apsp::oracle::{depth_h_paths, dijkstra_apsp, greedy_blocker, uncovered_paths};
use congest_apsp::pipeline::PipelineOutcome;
use congest_apsp::qsink::{BottleneckOutcome, QSinkParams, Schedule};
use congest_apsp::{run_apsp, GenSpec, Graph, NodeId, PipelineConfig};
use num_rational::Rational64;

const SUITE: u64 = 200;
const TIME_LIMIT: Duration = Duration::from_secs(300);

struct Case {
    g: Graph,
    h: u32,
    label: String,
}

fn suite() -> Vec<Case> {
    (0..SUITE)
        .map(|seed| {
            let n = 4 + ((seed * 37 + 11) % 45) as usize;
            let directed = seed % 2 == 1;
            let g = generate_graph(&GenSpec::Gnp { n, p: 0.3, wmax: 8, directed }, seed).expect("generator");
            let h = match seed % 3 {
                0 => 1,
                1 => ceil_root(n as u64, 3) as u32,
                _ => ceil_root(n as u64, 2) as u32,
            }
            .min((n - 1) as u32);
            Case { g, h, label: format!("seed {seed} n {n} h {h}{}", if directed { " directed" } else { "" }) }
        })
        .collect()
}

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, failures: &[String], detail: String) {
        let ok = failures.is_empty();
        let mut line = format!("[{}] {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
            let _ = write!(line, " ({} failures; first: {})", failures.len(), failures[0]);
        }
        println!("{line}");
        self.lines.push(line);
    }
}

fn cfg(h: u32) -> PipelineConfig {
    PipelineConfig { h: Some(h), ..PipelineConfig::default() }
}

fn main() {
    let mut report = Report { lines: Vec::new(), failed: 0 };
    let cases = suite();

    let started = Instant::now();
    let mut runs: Vec<Option<PipelineOutcome>> = Vec::new();
    let mut errors = Vec::new();
    for c in &cases {
        match run_apsp(&c.g, &cfg(c.h)) {
            Ok(out) => {
                if let Some(m) = out.distances.first_mismatch(&dijkstra_apsp(&c.g)) {
                    errors.push(format!("{}: mismatch at {m:?}", c.label));
                }
                runs.push(Some(out));
            }
            Err(e) => {
                errors.push(format!("{}: {e}", c.label));
                runs.push(None);
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > TIME_LIMIT {
        errors.push(format!("suite took {elapsed:?}"));
    }
    let matched = runs.iter().filter(|r| r.is_some()).count() - errors.iter().filter(|e| e.contains("mismatch")).count();
    report.record(1, "end-to-end exactness", &errors, format!("{matched}/{SUITE} graphs equal Dijkstra in {:.1}s", elapsed.as_secs_f64()));

    // 2 and 3: rebuild the step-1 trees independently and check the blocker set
    let mut uncovered = Vec::new();
    let mut oversized = Vec::new();
    let mut ratios = Vec::new();
    let mut sampled_ratios: Vec<f64> = Vec::new();
    let mut envelope = Vec::new();
    let mut max_steps_ratio = 0f64;
    for (c, out) in cases.iter().zip(&runs) {
        let Some(out) = out else { continue };
        let Some(b) = &out.blocker else { continue };
        let mut sim = Sim::new(&c.g, EngineConfig::default());
        let all: Vec<NodeId> = c.g.nodes().collect();
        let trees = build_csssp(&mut sim, &all, c.h, Direction::Out).expect("trees");
        let missed = uncovered_paths(&trees, c.h, &out.q);
        if missed > 0 {
            uncovered.push(format!("{}: {missed} paths uncovered", c.label));
        }
        let bound = size_bound(c.g.n(), c.h) + b.heavy_selections;
        if out.q.len() as u64 > bound {
            oversized.push(format!("{}: |Q| = {} > {bound}", c.label, out.q.len()));
        }
        let greedy = greedy_blocker(&trees, c.h).len();
        if greedy > 0 {
            ratios.push(out.q.len() as f64 / greedy as f64);
        }
        if b.selection_steps > b.envelope {
            envelope.push(format!("{}: {} selection steps > {}", c.label, b.selection_steps, b.envelope));
        }
        max_steps_ratio = max_steps_ratio.max(b.selection_steps as f64 / b.envelope.max(1) as f64);
    }
    // the heavy branch fires on every step at this scale; rerun part of the
    // suite with it disabled so the sampling branch carries the size bound
    let mut sampled = 0;
    for (k, c) in cases.iter().enumerate().take(60) {
        let mut sim = Sim::new(&c.g, EngineConfig::default());
        let all: Vec<NodeId> = c.g.nodes().collect();
        let trees = build_csssp(&mut sim, &all, c.h, Direction::Out).expect("trees");
        let params = Params { heavy_check: false, ..Params::default() };
        let mode = if k % 3 == 0 { Mode::Randomized { seed: k as u64 } } else { Mode::Deterministic };
        match run_blocker(&mut sim, &trees, &params, mode) {
            Ok(b) => {
                sampled += 1;
                if uncovered_paths(&trees, c.h, &b.q) > 0 {
                    uncovered.push(format!("{} (sampling only): paths uncovered", c.label));
                }
                let bound = size_bound(c.g.n(), c.h);
                if b.q.len() as u64 > bound {
                    oversized.push(format!("{} (sampling only): |Q| = {} > {bound}", c.label, b.q.len()));
                }
                if b.selection_steps > b.envelope {
                    envelope.push(format!("{} (sampling only): {} steps > {}", c.label, b.selection_steps, b.envelope));
                }
                let greedy = greedy_blocker(&trees, c.h).len();
                if greedy > 0 {
                    sampled_ratios.push(b.q.len() as f64 / greedy as f64);
                }
            }
            Err(e) => uncovered.push(format!("{} (sampling only): {e}", c.label)),
        }
    }
    let checked = runs.iter().flatten().filter(|o| o.blocker.is_some()).count();
    report.record(
        2,
        "blocker validity",
        &uncovered,
        format!("{checked} pipeline blocker sets and {sampled} sampling-only sets cover every depth-h path"),
    );
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let max = ratios.iter().cloned().fold(0f64, f64::max);
    report.record(
        3,
        "blocker size",
        &oversized,
        format!(
            "|Q| within 3·⌈(n/h)·ln(n²+1)⌉ + heavy picks; |Q|/|greedy| mean {mean:.2}, max {max:.2}; sampling only mean {:.2}, max {:.2}",
            sampled_ratios.iter().sum::<f64>() / sampled_ratios.len().max(1) as f64,
            sampled_ratios.iter().cloned().fold(0f64, f64::max)
        ),
    );
    report.record(4, "selection-step envelope", &envelope, format!("largest steps/envelope ratio {max_steps_ratio:.4}"));

    // 5: exhaustive pairwise independence
    let mut dependent = Vec::new();
    for n in 2..=8u32 {
        let mut spaces: Vec<Box<dyn SampleSpace>> = vec![Box::new(XorSpace::new(n as usize))];
        for p in [Rational64::new(1, 2), Rational64::new(1, 5), Rational64::new(1, 12), Rational64::new(12, 169)] {
            spaces.push(Box::new(PrimeSpace::new(n as usize, &big(&p)).expect("space")));
        }
        for s in &spaces {
            if let Some(bad) = pairwise_violation(s.as_ref(), n) {
                dependent.push(format!("{:?} size {} n {n}: {bad}", s.kind(), s.size()));
            }
        }
    }
    report.record(5, "pairwise independence", &dependent, "xor and prime spaces, n = 2..8, exact joint counts".into());

    // 6: leader totals against brute-force coverage
    let mut nu_errors = Vec::new();
    let mut points = 0u64;
    for seed in 0..20u64 {
        let n = 5 + (seed % 8) as usize;
        let g = generate_graph(&GenSpec::Gnp { n, p: 0.35, wmax: 4, directed: seed % 2 == 0 }, 1000 + seed).expect("gen");
        match nu_check(&g, 1 + (seed % 2) as u32, seed % 3 == 0) {
            Ok(k) => points += k,
            Err(e) => nu_errors.push(format!("seed {seed}: {e}")),
        }
    }
    report.record(6, "nu-aggregation equivalence", &nu_errors, format!("20 instances, {points} sample points exact"));

    // 7: progress is asserted inside every staged run; compare with plain
    let mut schedule_diff = Vec::new();
    let mut staged_runs = 0;
    for (c, out) in cases.iter().zip(&runs) {
        let Some(Some(staged)) = out.as_ref().map(|o| o.qsink.as_ref()) else { continue };
        staged_runs += 1;
        let plain_cfg = PipelineConfig { schedule: Schedule::Plain, ..cfg(c.h) };
        match run_apsp(&c.g, &plain_cfg) {
            Ok(p) => {
                let plain = p.qsink.expect("same path as staged");
                if plain.delivery.received != staged.delivery.received {
                    schedule_diff.push(format!("{}: delivered sets differ", c.label));
                }
            }
            Err(e) => schedule_diff.push(format!("{}: plain run failed: {e}", c.label)),
        }
    }
    let mut extra = 0;
    for seed in 0..24u64 {
        let n = 20 + (seed % 20) as usize;
        let g = generate_graph(&GenSpec::Gnp { n, p: 0.3, wmax: 8, directed: seed % 2 == 1 }, 5000 + seed).expect("gen");
        let qs = QSinkParams { hops: Some(2 + (seed % 3) as u32), threshold: Some(n as u64 / 2), log: Some(1 + seed % 2) };
        let mut got = Vec::new();
        for schedule in [Schedule::Staged, Schedule::Plain] {
            let c = PipelineConfig { h: Some(2), qsink: qs.clone(), schedule, ..PipelineConfig::default() };
            match run_apsp(&g, &c) {
                Ok(o) => got.push(o.qsink.map(|q| (q.delivery.received, q.delivery.stages.len(), q.bottleneck))),
                Err(e) => schedule_diff.push(format!("tight seed {seed}: {e}")),
            }
        }
        if got.len() == 2 {
            extra += got[0].as_ref().map_or(0, |x| x.1);
            if got[0].as_ref().map(|x| &x.0) != got[1].as_ref().map(|x| &x.0) {
                schedule_diff.push(format!("tight seed {seed}: delivered sets differ"));
            }
        }
    }
    report.record(
        7,
        "frame progress and schedule agreement",
        &schedule_diff,
        format!("{staged_runs} suite runs + 24 tight-threshold runs ({extra} stages) checked every frame; plain = staged"),
    );

    // 8: bottleneck postconditions, suite plus tight thresholds
    let mut bottleneck = Vec::new();
    let mut picked = 0;
    let mut check_b = |label: &str, t: u64, b: &BottleneckOutcome, failures: &mut Vec<String>| {
        picked += b.nodes.len();
        if b.max_total_after > t || b.nodes.len() as u64 > b.initial_total.div_ceil(t) {
            failures.push(format!("{label}: max {} (T {t}), |B| {} (N {})", b.max_total_after, b.nodes.len(), b.initial_total));
        }
    };
    for (c, out) in cases.iter().zip(&runs) {
        if let Some(Some(s)) = out.as_ref().map(|o| o.qsink.as_ref()) {
            check_b(&c.label, s.params.threshold, &s.bottleneck, &mut bottleneck);
        }
    }
    for seed in 0..24u64 {
        let n = 20 + (seed % 20) as usize;
        let g = generate_graph(&GenSpec::Gnp { n, p: 0.3, wmax: 8, directed: seed % 2 == 0 }, 7000 + seed).expect("gen");
        let t = 2 + seed % 7;
        let c = PipelineConfig { h: Some(2), qsink: QSinkParams { threshold: Some(t), ..QSinkParams::default() }, ..PipelineConfig::default() };
        match run_apsp(&g, &c) {
            Ok(o) => {
                if let Some(s) = &o.qsink {
                    check_b(&format!("tight seed {seed}"), t, &s.bottleneck, &mut bottleneck);
                }
            }
            Err(e) => bottleneck.push(format!("tight seed {seed}: {e}")),
        }
    }
    report.record(8, "bottleneck postconditions", &bottleneck, format!("{picked} bottleneck nodes picked in total"));

    // 9: exact per-phase round counts, read back from the metrics
    let mut accounting = Vec::new();
    for (c, out) in cases.iter().zip(&runs) {
        let Some(out) = out else { continue };
        let n = c.g.n() as u64;
        let h = c.h as u64;
        let phase = |name: &str| out.metrics.phase(name).map(|p| (p.rounds, p.runs));
        if phase("step1/bellman-ford") != Some((2 * h * n, n)) {
            accounting.push(format!("{}: step 1 bellman-ford {:?}", c.label, phase("step1/bellman-ford")));
        }
        if let Some(s) = &out.qsink {
            let q = out.q.len() as u64;
            if out.step(3).rounds != (h + 1) * q || out.step(7).rounds != h * n {
                accounting.push(format!("{}: steps 3/7 rounds {} / {}", c.label, out.step(3).rounds, out.step(7).rounds));
            }
            if let Some((rounds, runs)) = phase("step6/compute-count") {
                if rounds != (s.params.hops as u64 + 1) * runs {
                    accounting.push(format!("{}: compute-count {rounds} rounds over {runs} runs", c.label));
                }
            }
        }
    }
    report.record(
        9,
        "round accounting",
        &accounting,
        "bellman-ford, compute-count, broadcast, all-to-all and nu bounds asserted on every invocation; step totals re-checked".into(),
    );

    // 10: byte-identical output for identical input
    let mut nondet = Vec::new();
    for seed in 0..6u64 {
        let g = generate_graph(&GenSpec::Gnp { n: 24, p: 0.3, wmax: 8, directed: seed % 2 == 0 }, seed).expect("gen");
        let mode = if seed % 3 == 0 { Mode::Randomized { seed } } else { Mode::Deterministic };
        let c = PipelineConfig { h: Some(2), mode, blocker: Params { heavy_check: seed % 2 == 1, ..Params::default() }, ..PipelineConfig::default() };
        let render = || {
            run_apsp(&g, &c).map(|o| (o.distances.to_csv(), serde_json::to_string(&o.metrics_json(&c)).expect("json")))
        };
        match (render(), render()) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => nondet.push(format!("seed {seed}: outputs differ")),
            (Err(e), _) | (_, Err(e)) => nondet.push(format!("seed {seed}: {e}")),
        }
    }
    report.record(10, "determinism", &nondet, "6 configurations rendered twice, byte-identical".into());

    // 11: scaling report
    let mut csv = String::from("n,total_rounds,q,b,step1,step2,step6\n");
    let mut scaling = Vec::new();
    for n in [16usize, 32, 64, 128] {
        let g = generate_graph(&GenSpec::Gnp { n, p: 0.3, wmax: 8, directed: false }, 1).expect("gen");
        match run_apsp(&g, &PipelineConfig::default()) {
            Ok(o) => {
                let b = o.qsink.as_ref().map_or(0, |s| s.bottleneck.nodes.len());
                let _ = writeln!(
                    csv,
                    "{n},{},{},{b},{},{},{}",
                    o.metrics.total_rounds(),
                    o.q.len(),
                    o.step(1).rounds,
                    o.step(2).rounds,
                    o.step(6).rounds
                );
            }
            Err(e) => scaling.push(format!("n {n}: {e}")),
        }
    }
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("scaling.csv");
    let _ = std::fs::write(&path, &csv);
    report.record(11, "scaling report", &scaling, format!("written to {} (not asserted)", path.display()));
    for line in csv.lines() {
        println!("     {line}");
    }

    println!("acceptance: {} of {} criteria passed", report.lines.len() - report.failed, report.lines.len());
    if report.failed > 0 {
        std::process::exit(1);
    }
}

fn pairwise_violation(space: &dyn SampleSpace, n: u32) -> Option<String> {
    let m = space.size();
    for u in 1..=n {
        for v in (u + 1)..=n {
            let mut joint = [[0u64; 2]; 2];
            for mu in 0..m {
                joint[space.indicator(mu, NodeId(u)) as usize][space.indicator(mu, NodeId(v)) as usize] += 1;
            }
            for a in 0..2 {
                for b in 0..2 {
                    let pu = joint[a][0] + joint[a][1];
                    let pv = joint[0][b] + joint[1][b];
                    if joint[a][b] * m != pu * pv {
                        return Some(format!("ids {u},{v}"));
                    }
                }
            }
        }
    }
    None
}

fn nu_check(g: &Graph, h: u32, xor: bool) -> Result<u64, String> {
    let mut sim = Sim::new(g, EngineConfig::default());
    let all: Vec<NodeId> = g.nodes().collect();
    let trees = build_csssp(&mut sim, &all, h, Direction::Out).map_err(|e| e.to_string())?;
    let params = Params::default();
    let scores = compute_scores(&mut sim, &trees).map_err(|e| e.to_string())?;
    let members = v_i(&scores, 1, &params);
    let beta = beta_pass(&mut sim, &trees, &members).map_err(|e| e.to_string())?;
    let paths = depth_h_paths(&trees, h);
    let meets = |p: &Vec<NodeId>| p.iter().filter(|v| members.contains(v)).count() as u64;
    let pi: Vec<&Vec<NodeId>> = paths.iter().filter(|p| meets(p) >= 1).collect();
    let pij: Vec<&Vec<NodeId>> = paths.iter().filter(|p| meets(p) >= 2).collect();
    let sel = Selection {
        trees: &trees,
        beta: &beta,
        pij_min: 2,
        v_i: &members,
        i: 1,
        j: 2,
        pi_size: pi.len() as u64,
        pij_size: pij.len() as u64,
        params: &params,
    };
    let space: Box<dyn SampleSpace> = if xor {
        Box::new(XorSpace::new(g.n()))
    } else {
        Box::new(PrimeSpace::new(g.n(), &big(&Rational64::new(1, 3))).map_err(|e| e.to_string())?)
    };
    let point = find_good_point(&mut sim, space.as_ref(), &sel).map_err(|e| e.to_string())?;
    for (mu, &(nu_pi, nu_pij)) in point.nu.iter().enumerate() {
        let hit = |p: &&&Vec<NodeId>| p.iter().any(|v| members.contains(v) && space.indicator(mu as u64, *v));
        let want = (pi.iter().filter(hit).count() as u64, pij.iter().filter(hit).count() as u64);
        if (nu_pi, nu_pij) != want {
            return Err(format!("point {mu}: leader has {:?}, brute force {want:?}", (nu_pi, nu_pij)));
        }
    }
    Ok(point.nu.len() as u64)
}
