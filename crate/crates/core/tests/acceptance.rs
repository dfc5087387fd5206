//! Acceptance criteria, one PASS/FAIL line each (plus one per sub-check).
//!
//! All criteria run sequentially inside a single test so that the wall-clock
//! budgets are measured without other tests competing for the CPU.

use std::time::{Duration, Instant};

use hybridnas::blocks::{build_graph, cost, cost_full_model, ComputeGraph, RecurrentState, Trace};
use hybridnas::events::{
    encode_mdes, encode_shist, encode_vtei, mdes_stack_lengths, read_events, write_events, EventFormat, EventRecord,
    EventWindow, Polarity, TafEncoder,
};
use hybridnas::genome::{derive_channels, scale_channels, BlockKind, DesignSpace, Genome, MULTIPLIERS};
use hybridnas::proxies::{
    diversity_index, gram, jacobian, ntk_cond_of, profile_many, zen_score, zen_score_single, LinearProbe, ScoreConfig,
};
use hybridnas::search::{evolve_with_cache, Normalization, ProfileCache, SearchConfig, SearchResult};
use hybridnas::stats::{kendall_tau, proxy_report, spearman_r, synthetic_table, weight_sweep, Proxy, SyntheticSpec};
use hybridnas::tensor::{Rng, Tensor};

const FIXTURE_3M: &str = "SHIST|Ch16|L1:maxvit,m2.00,r1|L2:mamba,m1.50,h1,hm1.0|L3:c2f,m1.75,r3|L4:wavemlp,m1.33,r3";
const FIXTURE_5M: &str = "SHIST|Ch24|L1:maxvit,m1.66,r1|L2:c2f,m1.75,r3|L3:mamba,m1.00,h2,hm1.0|L4:wavemlp,m2.00,r3";
const FIXTURE_10M: &str = "SHIST|Ch24|L1:mamba,m2.00,h2,hm1.0|L2:c2f,m1.75,r3|L3:wavemlp,m1.75,r3|L4:maxvit,m1.25,r1";

#[derive(Default)]
struct Criterion {
    checks: Vec<(String, bool, String)>,
}

impl Criterion {
    fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push((name.to_string(), ok, detail.into()));
    }

    fn budget(&mut self, start: Instant, limit: Duration) {
        let t = start.elapsed();
        self.check(
            &format!("runtime under {}s", limit.as_secs()),
            t < limit,
            format!("{:.1}s", t.as_secs_f64()),
        );
    }
}

struct Suite {
    lines: Vec<String>,
    failed: Vec<String>,
}

impl Suite {
    fn run(&mut self, id: usize, title: &str, f: impl FnOnce(&mut Criterion)) {
        let start = Instant::now();
        let mut c = Criterion::default();
        f(&mut c);
        let ok = c.checks.iter().all(|(_, ok, _)| *ok);
        let line = format!(
            "{} criterion {id}: {title} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        for (name, ok, detail) in &c.checks {
            println!("    {} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        }
        self.lines.push(line);
        if !ok {
            self.failed.push(format!("criterion {id}"));
        }
    }
}

fn genome(s: &str) -> Genome {
    s.parse().unwrap()
}

fn layout_genome(kinds: [BlockKind; 4]) -> Genome {
    let layer = |i: usize, k: BlockKind| match k {
        BlockKind::Mamba => format!("L{}:mamba,m1.00,h1,hm1.0", i + 1),
        _ => format!("L{}:{},m1.00,r1", i + 1, k.token()),
    };
    let layers: Vec<String> = kinds.iter().enumerate().map(|(i, &k)| layer(i, k)).collect();
    genome(&format!("SHIST|Ch16|{}", layers.join("|")))
}

fn all_layouts() -> Vec<[BlockKind; 4]> {
    let mut out = Vec::new();
    for a in BlockKind::ALL {
        for b in BlockKind::ALL {
            for c in BlockKind::ALL {
                for d in BlockKind::ALL {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

fn criterion_1(c: &mut Criterion) {
    let start = Instant::now();
    let (mut homogeneous, mut distinct, mut mismatches) = (0, 0, 0);
    for kinds in all_layouts() {
        let d = diversity_index(&layout_genome(kinds));
        // Oracle: count each type, then sum the differences over all unordered type pairs.
        let counts: Vec<i64> = BlockKind::ALL
            .iter()
            .map(|t| kinds.iter().filter(|k| *k == t).count() as i64)
            .collect();
        let mut pair_sum = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                pair_sum += (counts[i] - counts[j]).abs();
            }
        }
        let oracle = 1.0 - pair_sum as f64 / 12.0;
        if d.to_bits() != oracle.to_bits() {
            mismatches += 1;
        }
        if kinds.iter().all(|k| *k == kinds[0]) {
            homogeneous += (d == 0.0) as usize;
        }
        if counts.iter().all(|&n| n == 1) {
            distinct += (d == 1.0) as usize;
        }
    }
    c.check(
        "homogeneous layouts score 0",
        homogeneous == 4,
        format!("{homogeneous}/4"),
    );
    c.check("all-distinct layouts score 1", distinct == 24, format!("{distinct}/24"));
    c.check(
        "256 layouts match pairwise oracle bit-exactly",
        mismatches == 0,
        format!("{mismatches} mismatches"),
    );
    c.budget(start, Duration::from_secs(1));
}

fn criterion_2(c: &mut Criterion) {
    let l3 = derive_channels(&genome(FIXTURE_3M), 5).ladder();
    c.check(
        "3M ladder 16-32-48-88-120",
        l3 == [16, 32, 48, 88, 120],
        format!("{l3:?}"),
    );
    let l10 = derive_channels(&genome(FIXTURE_10M), 5).ladder();
    c.check(
        "10M ladder 24-48-88-152",
        l10[..4] == [24, 48, 88, 152],
        format!("{l10:?}"),
    );
    let reachable: Vec<usize> = MULTIPLIERS.iter().map(|&m| scale_channels(72, m)).collect();
    c.check(
        "5M step 72->152 unreachable under every multiplier (excluded)",
        !reachable.contains(&152),
        format!("72 maps to {reachable:?}"),
    );
}

fn criterion_3(c: &mut Criterion) {
    let start = Instant::now();
    for (name, g, target) in [
        ("3M", FIXTURE_3M, 3.0e6),
        ("5M", FIXTURE_5M, 4.9e6),
        ("10M", FIXTURE_10M, 7.2e6),
    ] {
        let p = cost_full_model(&genome(g), 64, 64).unwrap().params as f64;
        let rel = p / target - 1.0;
        c.check(
            &format!("{name} fixture within 15% of {:.1}M", target / 1e6),
            rel.abs() <= 0.15,
            format!("{p} params ({:+.1}%)", rel * 100.0),
        );
    }
    let space = DesignSpace::default();
    let mut rng = Rng::new(2024);
    let (mut param_bad, mut mac_bad) = (0, 0);
    for _ in 0..50 {
        let g = space.sample(&mut rng).unwrap();
        let graph = build_graph(&g, 64, 64, 1).unwrap();
        let analytic = cost(&graph);
        let enumerated: usize = graph.param_tensors().iter().map(|t| t.len()).sum();
        param_bad += (enumerated as u64 != analytic.params) as usize;
        let x = Tensor::randn(&[2, graph.input_channels(), 64, 64], 1.0, &mut rng);
        let mut trace = Trace::default();
        graph.forward_traced(&x, RecurrentState::new(), &mut trace).unwrap();
        mac_bad += (trace.macs_per_image() != analytic.macs) as usize;
    }
    c.check(
        "params equal enumerated weights on 50 genomes",
        param_bad == 0,
        format!("{param_bad} mismatches"),
    );
    c.check(
        "MACs equal instrumented multiplies on 50 genomes",
        mac_bad == 0,
        format!("{mac_bad} mismatches"),
    );
    c.budget(start, Duration::from_secs(120));
}

fn brute_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as u64;
    let (mut nc, mut nd, mut tx, mut ty) = (0i64, 0i64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
            let dy = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
            tx += (dx == 0.0) as u64;
            ty += (dy == 0.0) as u64;
            if dx * dy > 0.0 {
                nc += 1;
            } else if dx * dy < 0.0 {
                nd += 1;
            }
        }
    }
    let n0 = n * (n - 1) / 2;
    (nc - nd) as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt()
}

fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn criterion_4(c: &mut Criterion) {
    let start = Instant::now();
    let mut rng = Rng::new(4);
    let (mut tau_bad, mut rho_err, mut cases) = (0, 0.0f64, 0);
    while cases < 100 {
        let n = 2 + rng.below(499);
        let levels = 1 + rng.below(40);
        let x: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64).collect();
        let (Ok(t), Ok(r)) = (kendall_tau(&x, &y), spearman_r(&x, &y)) else {
            continue;
        };
        cases += 1;
        tau_bad += (t.to_bits() != brute_kendall(&x, &y).to_bits()) as usize;
        rho_err = rho_err.max((r - brute_spearman(&x, &y)).abs());
    }
    c.check(
        "kendall_tau equals O(n^2) oracle on 100 tied vectors",
        tau_bad == 0,
        format!("{tau_bad} mismatches"),
    );
    c.check(
        "spearman_r within 1e-12 of mid-rank oracle",
        rho_err <= 1e-12,
        format!("max error {rho_err:.2e}"),
    );

    let mut hits = 0;
    for seed in 0..100 {
        let table = synthetic_table(&SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let sweep = weight_sweep(&table, 0.1).unwrap();
        let w = sweep.best_row().w_zen;
        hits += (sweep.rows.len() == 11 && (0.5 - 1e-9..=0.7 + 1e-9).contains(&w)) as usize;
    }
    c.check(
        "planted 0.6/0.4 sweep argmax in [0.5, 0.7]",
        hits >= 95,
        format!("{hits}/100 repetitions"),
    );
    c.budget(start, Duration::from_secs(60));
}

fn criterion_5(c: &mut Criterion) {
    let start = Instant::now();
    let cfg = ScoreConfig::default();
    let g = genome(FIXTURE_3M);
    let a = zen_score(&build_graph(&g, 64, 64, 0).unwrap(), &cfg).unwrap().value;
    let b = zen_score(&build_graph(&g, 64, 64, 0).unwrap(), &cfg).unwrap().value;
    c.check(
        "bit-deterministic given seed",
        a.to_bits() == b.to_bits(),
        format!("{a}"),
    );

    // Without batch norm or activations the network is affine, so the response to a
    // fixed perturbation does not depend on where it is applied.
    let linear = ComputeGraph::plain_conv(3, 16, 3, 32, 32, false, false, 5).unwrap();
    let mut rng = Rng::new(9);
    let eps = Tensor::randn(&[4, 3, 32, 32], 1.0, &mut rng);
    let x1 = Tensor::randn(&[4, 3, 32, 32], 1.0, &mut rng);
    let x2 = Tensor::randn(&[4, 3, 32, 32], 3.0, &mut rng);
    let s1 = zen_score_single(&linear, &x1, &eps, 0.01).unwrap();
    let s2 = zen_score_single(&linear, &x2, &eps, 0.01).unwrap();
    c.check(
        "linear network independent of base input",
        (s1 - s2).abs() <= 1e-5,
        format!("|diff| {:.2e}", (s1 - s2).abs()),
    );

    let eight = ScoreConfig {
        seeds: (0..8).collect(),
        ..ScoreConfig::default()
    };
    let narrow = zen_score(
        &ComputeGraph::plain_conv(3, 16, 4, 64, 64, true, true, 0).unwrap(),
        &eight,
    )
    .unwrap()
    .value;
    let wide = zen_score(
        &ComputeGraph::plain_conv(3, 64, 4, 64, 64, true, true, 0).unwrap(),
        &eight,
    )
    .unwrap()
    .value;
    c.check(
        "64 channels score above 16 channels",
        wide > narrow,
        format!("{wide:.3} vs {narrow:.3}"),
    );

    let batch4 = ScoreConfig {
        batch: 4,
        ..ScoreConfig::default()
    };
    let space = DesignSpace::default();
    let mut rng = Rng::new(5);
    let mut failures = 0;
    for _ in 0..200 {
        let g = space.sample(&mut rng).unwrap();
        let ok = build_graph(&g, 64, 64, 0)
            .and_then(|graph| zen_score(&graph, &batch4))
            .map(|z| z.value.is_finite())
            .unwrap_or(false);
        failures += (!ok) as usize;
    }
    c.check(
        "200 random genomes give finite scores",
        failures == 0,
        format!("{failures} failures"),
    );
    c.budget(start, Duration::from_secs(600));
}

fn criterion_6(c: &mut Criterion) {
    let mut rng = Rng::new(6);
    let probes: Vec<Tensor> = (0..5).map(|_| Tensor::randn(&[7], 1.0, &mut rng)).collect();
    let mut f = LinearProbe {
        w: (0..7).map(|_| rng.normal()).collect(),
    };
    let theta = gram(&jacobian(&mut f, &probes, 1e-3).unwrap());
    let mut err = 0.0f64;
    for a in 0..5 {
        for b in 0..5 {
            let exact: f64 = probes[a]
                .data()
                .iter()
                .zip(probes[b].data())
                .map(|(p, q)| *p as f64 * *q as f64)
                .sum();
            err = err.max((theta[a * 5 + b] - exact).abs());
        }
    }
    c.check(
        "finite-difference kernel equals probe Gram matrix",
        err <= 1e-6,
        format!("max error {err:.2e}"),
    );

    let fixture = [
        Tensor::new(vec![2], vec![1.0, 0.0]).unwrap(),
        Tensor::new(vec![2], vec![0.0, 2.0]).unwrap(),
    ];
    let mut f = LinearProbe { w: vec![0.5, -0.5] };
    let r = ntk_cond_of(&mut f, &fixture, 1e-3, false).unwrap();
    c.check(
        "ratio 0.25 on (1,0)/(0,2) probes",
        (r - 0.25).abs() <= 1e-6,
        format!("{r}"),
    );

    let table = synthetic_table(&SyntheticSpec {
        weights: [0.0, 0.0, -1.0],
        seed: 6,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let tau = proxy_report(&table).cell(Proxy::NtkCond, "ALL").and_then(|c| c.tau);
    c.check(
        "planted anti-correlated NTK gives negative tau",
        tau.is_some_and(|t| t < 0.0),
        format!("{tau:?}"),
    );
}

fn search_config(seed: u64, alpha: f64) -> SearchConfig {
    SearchConfig {
        population: 8,
        iterations: 200,
        max_params: 3_000_000,
        alpha,
        seed,
        score: ScoreConfig {
            batch: 2,
            seeds: vec![0],
            ..ScoreConfig::default()
        },
        ..SearchConfig::default()
    }
}

fn persisted(r: &SearchResult, dir: &std::path::Path, tag: &str) -> Vec<u8> {
    let pop = dir.join(format!("{tag}-population.csv"));
    let ev = dir.join(format!("{tag}-events.csv"));
    r.write_population(&pop).unwrap();
    r.write_events(&ev).unwrap();
    let mut bytes = std::fs::read(pop).unwrap();
    bytes.extend(std::fs::read(ev).unwrap());
    bytes
}

fn criterion_7(c: &mut Criterion) {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (mut size_bad, mut infeasible, mut nondeterministic, mut dominance_bad, mut decreases) = (0, 0, 0, 0, 0);
    let mut seeds_with_decrease = Vec::new();
    for seed in 1..=10u64 {
        let cfg = search_config(seed, 0.05);
        let cache = ProfileCache::new();
        let r = evolve_with_cache(&cfg, &cache).unwrap();
        let again = evolve_with_cache(&cfg, &ProfileCache::new()).unwrap();
        nondeterministic +=
            (r != again || persisted(&r, dir.path(), "a") != persisted(&again, dir.path(), "b")) as usize;

        let states = r.replay();
        size_bad += (r.population.len() != 8 || r.history.len() != 201 || states.iter().any(|s| s.len() != 8)) as usize;
        infeasible += states
            .iter()
            .flatten()
            .filter(|&&i| r.archive[i].proxies.params > cfg.max_params)
            .count();

        let finals: Vec<_> = r.population.iter().map(|i| &i.proxies).collect();
        let frozen = Normalization::of(&finals);
        let mut prev = f64::NEG_INFINITY;
        let mut drops = 0;
        for s in &states {
            let min = s
                .iter()
                .map(|&i| frozen.fitness(&r.archive[i].proxies, &cfg.weights, cfg.alpha))
                .fold(f64::INFINITY, f64::min);
            drops += (min < prev) as usize;
            prev = min;
        }
        if drops > 0 {
            seeds_with_decrease.push(seed);
        }
        decreases += drops;

        let cfg0 = search_config(seed, 0.0);
        let r0 = evolve_with_cache(&cfg0, &cache).unwrap();
        let states0 = r0.replay();
        for (e, before) in r0.events.iter().filter(|e| e.accepted).zip(&states0) {
            let out = e.evicted.unwrap();
            let repeated_left = before
                .iter()
                .chain(e.child_id.as_ref())
                .any(|&i| i != out && r0.archive[i].proxies.diversity < 1.0);
            if r0.archive[out].proxies.diversity == 1.0 && repeated_left {
                dominance_bad += 1;
            }
        }
    }
    c.check(
        "population size constant",
        size_bad == 0,
        format!("{size_bad} runs off"),
    );
    c.check(
        "every survivor within the parameter budget",
        infeasible == 0,
        format!("{infeasible} violations"),
    );
    c.check(
        "full runs byte-identical",
        nondeterministic == 0,
        format!("{nondeterministic} runs differ"),
    );
    c.check(
        "alpha=0 never evicts an all-distinct genome first",
        dominance_bad == 0,
        format!("{dominance_bad} violations"),
    );
    c.check(
        "min fitness non-decreasing under frozen final normalization",
        decreases == 0,
        format!("{decreases} decreases, seeds {seeds_with_decrease:?}"),
    );
    c.budget(start, Duration::from_secs(900));
}

fn ev(t: u64, x: u16, y: u16, p: i64) -> EventRecord {
    EventRecord::new(t, x, y, Polarity::from_sign(p).unwrap())
}

fn cells(t: &Tensor) -> Vec<((usize, usize, usize), f32)> {
    let (h, w) = (t.dim(1), t.dim(2));
    t.data()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| ((i / (h * w), i / w % h, i % w), *v))
        .collect()
}

fn criterion_8(c: &mut Criterion) {
    let start = Instant::now();
    let w = EventWindow::new(
        vec![ev(0, 1, 1, 1), ev(1, 1, 1, 1), ev(39_999, 2, 3, -1)],
        0,
        40_000,
        4,
        4,
    )
    .unwrap();
    let vtei = cells(&encode_vtei(&w, 5).unwrap().tensor);
    c.check(
        "VTEI fixture",
        vtei == [((0, 1, 1), 1.0), ((4, 3, 2), -1.0)],
        format!("{vtei:?}"),
    );
    let shist = cells(&encode_shist(&w, 5).unwrap().tensor);
    c.check(
        "SHIST fixture",
        shist == [((4, 3, 2), 1.0), ((5, 1, 1), 2.0)],
        format!("{shist:?}"),
    );
    let stacks = mdes_stack_lengths(16, 5);
    c.check(
        "MDES stack lengths for N=16, B=5",
        stacks == [16, 8, 4, 2, 1],
        format!("{stacks:?}"),
    );
    let sixteen: Vec<EventRecord> = (0..16).map(|i| ev(i * 100, (i % 3) as u16, 0, 1)).collect();
    let mdes = encode_mdes(&EventWindow::new(sixteen, 0, 40_000, 3, 1).unwrap(), 5)
        .unwrap()
        .tensor;
    let lit: Vec<usize> = (0..5)
        .map(|b| mdes.data()[b * 3..b * 3 + 3].iter().filter(|v| **v != 0.0).count())
        .collect();
    c.check(
        "MDES stacks keep the last n_b events",
        lit == [3, 3, 3, 2, 1],
        format!("pixels lit per stack {lit:?}"),
    );

    // TAF against a replay that keeps every timestamp ever seen.
    let (width, height) = (3usize, 2usize);
    let mut rng = Rng::new(8);
    let mut bad = 0;
    for depth in [1usize, 2, 5] {
        let mut enc = TafEncoder::new(width, height, depth).unwrap();
        let mut history = vec![Vec::<u64>::new(); 2 * width * height];
        let mut t_a = 0u64;
        for _ in 0..40 {
            let span = 100 + rng.below(1000) as u64;
            let mut ts: Vec<u64> = (0..rng.below(12))
                .map(|_| t_a + rng.below(span as usize) as u64)
                .collect();
            ts.sort();
            let events: Vec<EventRecord> = ts
                .iter()
                .map(|&t| {
                    ev(
                        t,
                        rng.below(width) as u16,
                        rng.below(height) as u16,
                        if rng.below(2) == 0 { -1 } else { 1 },
                    )
                })
                .collect();
            for e in &events {
                history[(e.p.index() * height + e.y as usize) * width + e.x as usize].push(e.t_us);
            }
            let t_b = t_a + span;
            let out = enc
                .push_window(&EventWindow::new(events, t_a, t_b, width, height).unwrap())
                .unwrap()
                .tensor;
            for p in [Polarity::Negative, Polarity::Positive] {
                for y in 0..height {
                    for x in 0..width {
                        let hist = &history[(p.index() * height + y) * width + x];
                        bad += (enc.queue_len(p, x, y) != hist.len().min(depth)) as usize;
                        for j in 0..depth {
                            let want = match hist.iter().rev().nth(j) {
                                Some(&t) if t >= t_a => ((t_b - t) as f64 / (t_b - t_a + 1) as f64) as f32,
                                _ => -1.0,
                            };
                            let got = out.data()[((p.index() * depth + j) * height + y) * width + x];
                            bad += (got != want || !(got == -1.0 || (0.0..1.0).contains(&got))) as usize;
                        }
                    }
                }
            }
            t_a = t_b + rng.below(3) as u64 * span;
        }
    }
    c.check(
        "TAF FIFO depth and age domain over randomized replays",
        bad == 0,
        format!("{bad} mismatches"),
    );

    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(10);
    let mut t = 0;
    let records: Vec<EventRecord> = (0..10_000)
        .map(|_| {
            t += rng.below(50) as u64;
            ev(
                t,
                rng.below(640) as u16,
                rng.below(480) as u16,
                if rng.below(2) == 0 { -1 } else { 1 },
            )
        })
        .collect();
    for fmt in [EventFormat::Evt, EventFormat::Csv] {
        let path = dir.path().join(format!("events.{fmt:?}"));
        write_events(records.iter().copied(), &path, fmt).unwrap();
        let back: Vec<EventRecord> = read_events(&path, fmt).unwrap().collect::<Result<_, _>>().unwrap();
        c.check(
            &format!("{fmt:?} round trip of 10k records"),
            back == records,
            format!("{} records", back.len()),
        );
    }
    c.budget(start, Duration::from_secs(30));
}

fn criterion_9(c: &mut Criterion) {
    let cfg = ScoreConfig::default();
    let space = DesignSpace::default();
    let mut rng = Rng::new(9);
    let genomes: Vec<Genome> = (0..200).map(|_| space.sample(&mut rng).unwrap()).collect();

    let start = Instant::now();
    let single = profile_many(&genomes, &cfg, 1).unwrap();
    let t1 = start.elapsed();
    let failures = single.iter().filter(|r| r.is_err()).count();
    c.check(
        "200 genomes profiled without failure",
        failures == 0,
        format!("{failures} failures"),
    );
    c.check(
        "single-threaded under 10 minutes",
        t1 < Duration::from_secs(600),
        format!("{:.1}s", t1.as_secs_f64()),
    );

    let start = Instant::now();
    let parallel = profile_many(&genomes, &cfg, 4).unwrap();
    let t4 = start.elapsed();
    let same = single.iter().zip(&parallel).all(|(a, b)| match (a, b) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    });
    c.check("4 jobs give identical, input-ordered results", same, "");
    let speedup = t1.as_secs_f64() / t4.as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    c.check(
        "4 jobs at least 2.5x faster",
        speedup >= 2.5,
        format!(
            "{speedup:.2}x ({:.1}s vs {:.1}s, {cores} cores available)",
            t1.as_secs_f64(),
            t4.as_secs_f64()
        ),
    );
}

#[test]
fn acceptance_criteria() {
    let mut suite = Suite {
        lines: Vec::new(),
        failed: Vec::new(),
    };
    suite.run(1, "diversity index exactness", criterion_1);
    suite.run(2, "channel ladder reproduction", criterion_2);
    suite.run(3, "parameter and MAC counts", criterion_3);
    suite.run(4, "correlation machinery and weight sweep", criterion_4);
    suite.run(5, "zen score properties", criterion_5);
    suite.run(6, "NTK oracle", criterion_6);
    suite.run(7, "search invariants", criterion_7);
    suite.run(8, "encoding golden tests", criterion_8);
    suite.run(9, "profiling throughput", criterion_9);
    println!();
    for l in &suite.lines {
        println!("{l}");
    }
    assert!(suite.failed.is_empty(), "failed: {}", suite.failed.join(", "));
}
