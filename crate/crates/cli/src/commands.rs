use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hybridnas::blocks::{build_graph_with_bins, cost_full_model_with_bins};
use hybridnas::events::{
    encode_mdes, encode_shist, encode_vtei, read_events, write_ten, Encoding, EventFormat, TafEncoder, WindowSplitter,
};
use hybridnas::genome::{DesignSpace, Genome};
use hybridnas::proxies::{profile_many, ScoreConfig};
use hybridnas::search::{evolve, SearchConfig};
use hybridnas::stats::{proxy_report, read_benchmark, synthetic_table, weight_sweep, write_benchmark, SyntheticSpec};

use crate::config::{parse_list, parse_res, usage, write_resolved, RunConfig};
use crate::Command;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Encode {
            input,
            format,
            bins,
            window_us,
            width,
            height,
            input_format,
            out,
        } => encode(
            &input,
            format.into(),
            bins,
            window_us,
            (width, height),
            input_format.as_deref(),
            &out,
        ),
        Command::Profile {
            genomes,
            seed,
            res,
            batch,
            score_seeds,
            bins,
            jobs,
            keep_going,
            out,
        } => {
            let (height, width) = parse_res(&res)?;
            let cfg = ScoreConfig {
                batch,
                height,
                width,
                seeds: (seed..seed + score_seeds).collect(),
                weight_seed: seed,
                bins,
                ..ScoreConfig::default()
            };
            profile(&genomes, &cfg, jobs, keep_going, &out)
        }
        Command::Search { config, overrides, out } => {
            let mut rc = match &config {
                Some(p) => RunConfig::load(p, SEARCH_KEYS)?,
                None => RunConfig::new(SEARCH_KEYS),
            };
            for o in &overrides {
                rc.set_pair(o)?;
            }
            search(&rc, &out)
        }
        Command::SweepWeights { benchmark, step, out } => sweep(&benchmark, step, &out),
        Command::Correlate { benchmark, out } => correlate(&benchmark, &out),
        Command::SynthBenchmark {
            rows,
            w_zen,
            w_macs,
            w_ntk,
            noise,
            seed,
            encodings,
            out,
        } => {
            let spec = SyntheticSpec {
                rows,
                weights: [w_zen, w_macs, w_ntk],
                noise,
                seed,
                encodings: parse_list(&encodings)?,
            };
            let table = synthetic_table(&spec)?;
            write_benchmark(&table, &out).with_context(|| format!("writing {}", out.display()))?;
            write_resolved(
                &sidecar(&out),
                &[
                    ("rows", rows.to_string()),
                    ("w_zen", w_zen.to_string()),
                    ("w_macs", w_macs.to_string()),
                    ("w_ntk", w_ntk.to_string()),
                    ("noise", noise.to_string()),
                    ("seed", seed.to_string()),
                    ("encodings", encodings),
                ],
            )
        }
        Command::Summary { genome, res, bins } => {
            let g: Genome = genome.parse().map_err(|e| crate::config::UsageError(format!("{e}")))?;
            let (h, w) = parse_res(&res)?;
            let graph = build_graph_with_bins(&g, bins, h, w, 0)?;
            let full = cost_full_model_with_bins(&g, bins, h, w)?;
            print!("{}", graph.summary());
            println!();
            println!("backbone params {}", graph.num_params());
            println!("full model params {}  MACs at {h}x{w} {}", full.params, full.macs);
            Ok(())
        }
    }
}

/// `out.csv` -> `out.resolved.cfg`, beside a single-file output.
fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("resolved.cfg")
}

fn encode(
    input: &Path,
    format: Encoding,
    bins: usize,
    window_us: u64,
    (width, height): (usize, usize),
    input_format: Option<&str>,
    out: &Path,
) -> Result<()> {
    if bins == 0 || width == 0 || height == 0 {
        return usage("bins, width and height must be positive");
    }
    let fmt = match input_format {
        Some(f) => f.parse::<EventFormat>()?,
        None => match EventFormat::from_path(input) {
            Some(f) => f,
            None => {
                return usage(format!(
                    "cannot infer event format of {}; pass --input-format",
                    input.display()
                ))
            }
        },
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let events = read_events(input, fmt).with_context(|| format!("reading {}", input.display()))?;
    let windows = WindowSplitter::new(events, window_us, width, height)?;
    let mut taf = match format {
        Encoding::Taf => Some(TafEncoder::new(width, height, bins)?),
        _ => None,
    };
    let mut manifest = csv::Writer::from_path(out.join("manifest.csv"))?;
    manifest.write_record(["index", "t_a", "t_b", "events", "file"])?;
    for (i, w) in windows.enumerate() {
        let w = w.with_context(|| format!("reading {}", input.display()))?;
        let enc = match (&mut taf, format) {
            (Some(t), _) => t.push_window(&w)?,
            (None, Encoding::Vtei) => encode_vtei(&w, bins)?,
            (None, Encoding::Mdes) => encode_mdes(&w, bins)?,
            (None, _) => encode_shist(&w, bins)?,
        };
        let name = format!("window_{i:06}.ten");
        write_ten(&enc.tensor, &out.join(&name))?;
        manifest.write_record([
            i.to_string(),
            w.t_a().to_string(),
            w.t_b().to_string(),
            w.len().to_string(),
            name,
        ])?;
    }
    manifest.flush()?;
    write_resolved(
        &out.join("resolved.cfg"),
        &[
            ("input", input.display().to_string()),
            ("input_format", format!("{fmt:?}").to_lowercase()),
            ("format", format.to_string()),
            ("bins", bins.to_string()),
            ("window_us", window_us.to_string()),
            ("width", width.to_string()),
            ("height", height.to_string()),
        ],
    )
}

fn profile(genomes: &Path, cfg: &ScoreConfig, jobs: usize, keep_going: bool, out: &Path) -> Result<()> {
    cfg.validate()?;
    let text = fs::read_to_string(genomes).with_context(|| format!("reading {}", genomes.display()))?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let parsed: Vec<Result<Genome, String>> = lines
        .iter()
        .map(|(_, l)| l.parse::<Genome>().map_err(|e| e.to_string()))
        .collect();
    let valid: Vec<Genome> = parsed.iter().filter_map(|p| p.as_ref().ok().cloned()).collect();
    let mut scores = profile_many(&valid, cfg, jobs.max(1))?.into_iter();

    let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record([
        "line",
        "genome",
        "zen",
        "macs",
        "params",
        "ntk_cond",
        "diversity",
        "error",
    ])?;
    let mut failed = 0;
    for ((line, raw), p) in lines.iter().zip(&parsed) {
        let result = match p {
            Ok(_) => scores
                .next()
                .expect("one score per valid genome")
                .map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        match result {
            Ok(v) => w.write_record([
                line.to_string(),
                raw.to_string(),
                v.zen.to_string(),
                v.macs.to_string(),
                v.params.to_string(),
                v.ntk_cond.map(|x| x.to_string()).unwrap_or_default(),
                v.diversity.to_string(),
                String::new(),
            ])?,
            Err(e) => {
                failed += 1;
                w.write_record([
                    line.to_string(),
                    raw.to_string(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    e,
                ])?;
            }
        }
    }
    w.flush()?;
    write_resolved(
        &sidecar(out),
        &[
            ("genomes", genomes.display().to_string()),
            ("seed", cfg.weight_seed.to_string()),
            ("res", format!("{}x{}", cfg.height, cfg.width)),
            ("batch", cfg.batch.to_string()),
            ("score_seeds", join(&cfg.seeds)),
            ("bins", cfg.bins.to_string()),
            ("noise_alpha", cfg.noise_alpha.to_string()),
            ("jobs", jobs.to_string()),
            ("keep_going", keep_going.to_string()),
        ],
    )?;
    eprintln!("profiled {} genomes, {failed} failed", lines.len());
    if failed > 0 && !keep_going {
        bail!(
            "{failed} of {} rows failed (see the error column; --keep-going accepts this)",
            lines.len()
        );
    }
    Ok(())
}

pub const SEARCH_KEYS: &[&str] = &[
    "population",
    "iterations",
    "max_params",
    "w_zen",
    "w_macs",
    "w_ntk",
    "alpha",
    "seed",
    "encoding",
    "init_attempts",
    "max_retries",
    "jobs",
    "top_k",
    "score_batch",
    "score_res",
    "score_seeds",
    "weight_seed",
    "bins",
    "noise_alpha",
    "ntk_probes",
    "ntk_fd_step",
    "ntk_max_params",
    "ntk_reciprocal",
];

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Accepts plain integers and exact scientific notation such as `3e6`.
fn parse_count(key: &str, s: &str) -> Result<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 => Ok(f as u64),
        _ => usage(format!("{key} = {s}: not a non-negative integer")),
    }
}

fn search_config(rc: &RunConfig) -> Result<(SearchConfig, usize)> {
    let d = SearchConfig::default();
    let ds = ScoreConfig::default();
    let space = match rc.get_str("encoding") {
        None => d.space.clone(),
        Some(s) if s.eq_ignore_ascii_case("all") => DesignSpace::default(),
        Some(s) => DesignSpace::frozen(s.parse::<Encoding>()?),
    };
    let (height, width) = match rc.get_str("score_res") {
        Some(r) => parse_res(r)?,
        None => (ds.height, ds.width),
    };
    let score = ScoreConfig {
        batch: rc.get("score_batch", ds.batch)?,
        height,
        width,
        seeds: match rc.get_str("score_seeds") {
            Some(s) => parse_list(s)?,
            None => ds.seeds.clone(),
        },
        weight_seed: rc.get("weight_seed", ds.weight_seed)?,
        bins: rc.get("bins", ds.bins)?,
        noise_alpha: rc.get("noise_alpha", ds.noise_alpha)?,
        ntk_probe_count: rc.get("ntk_probes", ds.ntk_probe_count)?,
        ntk_fd_step: rc.get("ntk_fd_step", ds.ntk_fd_step)?,
        ntk_max_params: rc.get("ntk_max_params", ds.ntk_max_params)?,
        ntk_reciprocal: rc.get("ntk_reciprocal", ds.ntk_reciprocal)?,
    };
    let cfg = SearchConfig {
        population: rc.get("population", d.population)?,
        iterations: rc.get("iterations", d.iterations)?,
        max_params: match rc.get_str("max_params") {
            Some(s) => parse_count("max_params", s)?,
            None => d.max_params,
        },
        weights: [
            rc.get("w_zen", d.weights[0])?,
            rc.get("w_macs", d.weights[1])?,
            rc.get("w_ntk", d.weights[2])?,
        ],
        alpha: rc.get("alpha", d.alpha)?,
        space,
        seed: rc.get("seed", d.seed)?,
        score,
        init_attempts: rc.get("init_attempts", d.init_attempts)?,
        max_retries: rc.get("max_retries", d.max_retries)?,
        jobs: rc.get("jobs", d.jobs)?,
    };
    let k = rc.get("top_k", 5usize)?;
    cfg.validate()?;
    if k > cfg.population {
        return usage(format!("top_k {k} exceeds population {}", cfg.population));
    }
    Ok((cfg, k))
}

fn resolved_search(cfg: &SearchConfig, k: usize) -> Vec<(&'static str, String)> {
    let s = &cfg.score;
    let encoding = if cfg.space.encodings.len() == 1 {
        cfg.space.encodings[0].to_string()
    } else {
        "all".to_string()
    };
    vec![
        ("population", cfg.population.to_string()),
        ("iterations", cfg.iterations.to_string()),
        ("max_params", cfg.max_params.to_string()),
        ("w_zen", cfg.weights[0].to_string()),
        ("w_macs", cfg.weights[1].to_string()),
        ("w_ntk", cfg.weights[2].to_string()),
        ("alpha", cfg.alpha.to_string()),
        ("seed", cfg.seed.to_string()),
        ("encoding", encoding),
        ("init_attempts", cfg.init_attempts.to_string()),
        ("max_retries", cfg.max_retries.to_string()),
        ("jobs", cfg.jobs.to_string()),
        ("top_k", k.to_string()),
        ("score_batch", s.batch.to_string()),
        ("score_res", format!("{}x{}", s.height, s.width)),
        ("score_seeds", join(&s.seeds)),
        ("weight_seed", s.weight_seed.to_string()),
        ("bins", s.bins.to_string()),
        ("noise_alpha", s.noise_alpha.to_string()),
        ("ntk_probes", s.ntk_probe_count.to_string()),
        ("ntk_fd_step", s.ntk_fd_step.to_string()),
        ("ntk_max_params", s.ntk_max_params.to_string()),
        ("ntk_reciprocal", s.ntk_reciprocal.to_string()),
    ]
}

fn search(rc: &RunConfig, out: &Path) -> Result<()> {
    let (cfg, k) = search_config(rc)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_resolved(&out.join("resolved.cfg"), &resolved_search(&cfg, k))?;
    let result = evolve(&cfg)?;
    result.write_population(&out.join("population.csv"))?;
    result.write_events(&out.join("events.csv"))?;
    result.write_top_k(k, &out.join("top_k.txt"))?;
    let mut h = csv::Writer::from_path(out.join("history.csv"))?;
    h.write_record(["iteration", "best", "mean", "worst"])?;
    for s in &result.history {
        h.write_record([
            s.iteration.to_string(),
            s.best.to_string(),
            s.mean.to_string(),
            s.worst.to_string(),
        ])?;
    }
    h.flush()?;
    let report = result.report(&cfg);
    fs::write(out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn sweep(benchmark: &Path, step: f64, out: &Path) -> Result<()> {
    let table = read_benchmark(benchmark).with_context(|| format!("reading {}", benchmark.display()))?;
    let s = weight_sweep(&table, step)?;
    s.write_csv(out).with_context(|| format!("writing {}", out.display()))?;
    write_resolved(
        &sidecar(out),
        &[
            ("benchmark", benchmark.display().to_string()),
            ("step", step.to_string()),
        ],
    )?;
    println!("{:>6} {:>6} {:>8} {:>8}", "w_zen", "w_macs", "tau", "rho");
    for (i, r) in s.rows.iter().enumerate() {
        let mark = if i == s.best { "  <- best" } else { "" };
        println!("{:>6.2} {:>6.2} {:>8.4} {:>8.4}{mark}", r.w_zen, r.w_macs, r.tau, r.rho);
    }
    Ok(())
}

fn correlate(benchmark: &Path, out: &Path) -> Result<()> {
    let table = read_benchmark(benchmark).with_context(|| format!("reading {}", benchmark.display()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report = proxy_report(&table);
    report.write_csv(&out.join("proxy_report.csv"))?;
    let text = report.to_text();
    fs::write(out.join("proxy_report.txt"), &text)?;
    write_resolved(
        &out.join("resolved.cfg"),
        &[("benchmark", benchmark.display().to_string())],
    )?;
    print!("{text}");
    Ok(())
}
