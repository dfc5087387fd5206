//! Constrained evolutionary search.
//!
//! Each iteration mutates a uniformly chosen parent. A child over the parameter
//! budget is discarded and the iteration retries with a new parent. An admitted
//! child joins the population, fitness is recomputed over all `N + 1`
//! individuals, and the lowest-fitness individual is evicted (the older one on ties).
//!
//! Fitness is `alpha * (W . Z) + (1 - alpha) * D`, where `Z` holds the
//! (zen, MACs, NTK) proxies min-max normalized over the current population and `D`
//! is the diversity index.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::blocks::cost_full_model_with_bins;
use crate::error::{Error, Result};
use crate::events::Encoding;
use crate::genome::{DesignSpace, Genome};
use crate::proxies::{profile, profile_many, ProxyVector, ScoreConfig};
use crate::tensor::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub population: usize,
    pub iterations: usize,
    pub max_params: u64,
    /// Weights of (zen, MACs, NTK).
    pub weights: [f64; 3],
    pub alpha: f64,
    pub space: DesignSpace,
    pub seed: u64,
    pub score: ScoreConfig,
    /// Samples drawn per initial slot before giving up as infeasible.
    pub init_attempts: usize,
    /// Rejected children tolerated in one iteration before it is skipped.
    pub max_retries: usize,
    pub jobs: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 50,
            iterations: 1000,
            max_params: 3_000_000,
            weights: [0.6, 0.4, 0.0],
            alpha: 0.05,
            space: DesignSpace::frozen(Encoding::Shist),
            seed: 0,
            score: ScoreConfig::default(),
            init_attempts: 10_000,
            max_retries: 1_000,
            jobs: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("proxy weights must be finite and non-negative".into()));
        }
        if self.init_attempts == 0 || self.max_retries == 0 {
            return Err(Error::Config("attempt caps must be positive".into()));
        }
        self.score.validate()
    }
}

/// Min-max normalize to `[0, 1]`; a constant vector maps to 0.5, missing values to 0.
pub fn normalize(values: &[Option<f64>]) -> Vec<f64> {
    let present = values.iter().flatten();
    let lo = present.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = present.copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| match v {
            None => 0.0,
            Some(_) if hi <= lo => 0.5,
            Some(x) => (x - lo) / (hi - lo),
        })
        .collect()
}

/// Per-proxy bounds used to normalize; frozen bounds let fitness be compared across populations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

fn proxy_columns(p: &ProxyVector) -> [Option<f64>; 3] {
    [Some(p.zen), Some(p.macs as f64), p.ntk_cond]
}

impl Normalization {
    pub fn of(pop: &[&ProxyVector]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in pop {
            for (k, v) in proxy_columns(p).into_iter().enumerate() {
                if let Some(v) = v {
                    lo[k] = lo[k].min(v);
                    hi[k] = hi[k].max(v);
                }
            }
        }
        Normalization { lo, hi }
    }

    pub fn fitness(&self, p: &ProxyVector, weights: &[f64; 3], alpha: f64) -> f64 {
        let mut wz = 0.0;
        for (k, v) in proxy_columns(p).into_iter().enumerate() {
            let z = match v {
                None => 0.0,
                Some(_) if self.hi[k] <= self.lo[k] => 0.5,
                Some(x) => (x - self.lo[k]) / (self.hi[k] - self.lo[k]),
            };
            wz += weights[k] * z;
        }
        alpha * wz + (1.0 - alpha) * p.diversity
    }
}

/// Fitness of every individual under the population's own normalization.
pub fn fitness_all(pop: &[&ProxyVector], weights: &[f64; 3], alpha: f64) -> Vec<f64> {
    let norm = Normalization::of(pop);
    pop.iter().map(|p| norm.fitness(p, weights, alpha)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    /// Admission order; also the index into [`SearchResult::archive`].
    pub id: usize,
    pub genome: Genome,
    pub proxies: ProxyVector,
    pub fitness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchEvent {
    pub iteration: usize,
    pub parent: usize,
    pub child: Genome,
    /// Archive id of the child when it was admitted.
    pub child_id: Option<usize>,
    pub accepted: bool,
    pub evicted: Option<usize>,
    pub note: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessStats {
    pub iteration: usize,
    pub best: f64,
    pub mean: f64,
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub genome: Genome,
    pub proxies: ProxyVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Final population by descending fitness, ties by genome string.
    pub population: Vec<Individual>,
    /// One entry for the initial population and one per iteration.
    pub history: Vec<FitnessStats>,
    pub events: Vec<SearchEvent>,
    /// Every individual ever admitted, indexed by id.
    pub archive: Vec<ArchiveEntry>,
    pub initial: Vec<usize>,
}

/// Profiles keyed by genome string, shareable between runs with the same score config.
#[derive(Clone, Default)]
pub struct ProfileCache {
    inner: Arc<Mutex<HashMap<String, ProxyVector>>>,
}

impl ProfileCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &str) -> Option<ProxyVector> {
        self.inner.lock().unwrap().get(key).cloned()
    }

    fn put(&self, key: String, p: ProxyVector) {
        self.inner.lock().unwrap().insert(key, p);
    }
}

struct Profiler<'a> {
    cfg: &'a SearchConfig,
    /// `cfg.score`, with the NTK switched off when its weight is zero.
    score: ScoreConfig,
    cache: ProfileCache,
}

impl Profiler<'_> {
    fn fits(&self, g: &Genome) -> Result<bool> {
        let c = cost_full_model_with_bins(g, self.cfg.score.bins, self.cfg.score.height, self.cfg.score.width)?;
        Ok(c.params <= self.cfg.max_params)
    }

    fn profile(&self, g: &Genome) -> Result<ProxyVector> {
        let key = g.to_string();
        if let Some(p) = self.cache.get(&key) {
            return Ok(p);
        }
        let p = profile(g, &self.score)?;
        self.cache.put(key, p.clone());
        Ok(p)
    }

    fn profile_batch(&self, genomes: &[Genome]) -> Result<Vec<Result<ProxyVector>>> {
        let missing: Vec<Genome> = genomes
            .iter()
            .filter(|g| self.cache.get(&g.to_string()).is_none())
            .cloned()
            .collect();
        for (g, r) in missing.iter().zip(profile_many(&missing, &self.score, self.cfg.jobs)?) {
            if let Ok(p) = r {
                self.cache.put(g.to_string(), p);
            }
        }
        Ok(genomes.iter().map(|g| self.profile(g)).collect())
    }
}

fn stats(iteration: usize, f: &[f64]) -> FitnessStats {
    FitnessStats {
        iteration,
        best: f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: f.iter().sum::<f64>() / f.len() as f64,
        worst: f.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

pub fn evolve(cfg: &SearchConfig) -> Result<SearchResult> {
    evolve_with_cache(cfg, &ProfileCache::new())
}

/// [`evolve`] reusing profiles from earlier runs. The cache must only be shared
/// between runs with the same [`ScoreConfig`] and NTK weight. The NTK is only
/// computed when its weight is nonzero.
pub fn evolve_with_cache(cfg: &SearchConfig, cache: &ProfileCache) -> Result<SearchResult> {
    cfg.validate()?;
    let mut score = cfg.score.clone();
    if cfg.weights[2] == 0.0 {
        score.ntk_max_params = 0;
    }
    let profiler = Profiler {
        cfg,
        score,
        cache: cache.clone(),
    };
    let mut rng = Rng::new(cfg.seed);
    let n = cfg.population;

    // Fill the population with feasible genomes. Sampling happens on the main
    // sequence; only scoring may be spread over threads.
    let mut archive: Vec<ArchiveEntry> = Vec::new();
    let mut attempts = 0;
    while archive.len() < n {
        let mut batch = Vec::new();
        while batch.len() < n - archive.len() {
            if attempts >= cfg.init_attempts * n {
                return Err(Error::Infeasible {
                    max_params: cfg.max_params,
                    attempts,
                });
            }
            attempts += 1;
            let g = cfg.space.sample(&mut rng)?;
            if profiler.fits(&g)? {
                batch.push(g);
            }
        }
        for (g, r) in batch.iter().zip(profiler.profile_batch(&batch)?) {
            if let Ok(p) = r {
                archive.push(ArchiveEntry {
                    genome: g.clone(),
                    proxies: p,
                });
            }
        }
    }
    let initial: Vec<usize> = (0..n).collect();
    let mut pop = initial.clone();
    let fitness_of = |ids: &[usize], archive: &[ArchiveEntry]| {
        let ps: Vec<&ProxyVector> = ids.iter().map(|&i| &archive[i].proxies).collect();
        fitness_all(&ps, &cfg.weights, cfg.alpha)
    };
    let mut history = vec![stats(0, &fitness_of(&pop, &archive))];
    let mut events = Vec::new();

    for iteration in 1..=cfg.iterations {
        for _ in 0..cfg.max_retries {
            let parent = pop[rng.below(pop.len())];
            let child = cfg.space.mutate(&archive[parent].genome, &mut rng);
            let mut event = SearchEvent {
                iteration,
                parent,
                child: child.clone(),
                child_id: None,
                accepted: false,
                evicted: None,
                note: "",
            };
            if !profiler.fits(&child)? {
                event.note = "over parameter budget";
                events.push(event);
                continue;
            }
            let proxies = match profiler.profile(&child) {
                Ok(p) => p,
                Err(_) => {
                    event.note = "scoring failed";
                    events.push(event);
                    continue;
                }
            };
            let id = archive.len();
            archive.push(ArchiveEntry { genome: child, proxies });
            pop.push(id);
            let f = fitness_of(&pop, &archive);
            // Lowest fitness leaves; among equals the oldest (smallest id) goes.
            let worst = (0..pop.len())
                .min_by(|&a, &b| f[a].total_cmp(&f[b]).then(pop[a].cmp(&pop[b])))
                .unwrap();
            let evicted = pop.remove(worst);
            event.child_id = Some(id);
            event.accepted = true;
            event.evicted = Some(evicted);
            events.push(event);
            break;
        }
        history.push(stats(iteration, &fitness_of(&pop, &archive)));
    }

    let f = fitness_of(&pop, &archive);
    let mut population: Vec<Individual> = pop
        .iter()
        .zip(f)
        .map(|(&id, fitness)| Individual {
            id,
            genome: archive[id].genome.clone(),
            proxies: archive[id].proxies.clone(),
            fitness,
        })
        .collect();
    population.sort_by(|a, b| {
        b.fitness
            .total_cmp(&a.fitness)
            .then_with(|| a.genome.to_string().cmp(&b.genome.to_string()))
    });
    Ok(SearchResult {
        population,
        history,
        events,
        archive,
        initial,
    })
}

/// The `k` fittest genomes of the final population.
pub fn top_k(result: &SearchResult, k: usize) -> Vec<Genome> {
    result.population.iter().take(k).map(|i| i.genome.clone()).collect()
}

impl SearchResult {
    /// Population ids after the initial fill and after every admitted child, rebuilt
    /// from the event log.
    pub fn replay(&self) -> Vec<Vec<usize>> {
        let mut pop = self.initial.clone();
        let mut states = vec![pop.clone()];
        for e in self.events.iter().filter(|e| e.accepted) {
            pop.push(e.child_id.expect("accepted child has an id"));
            let out = e.evicted.expect("accepted child evicts");
            pop.retain(|&i| i != out);
            states.push(pop.clone());
        }
        states
    }

    pub fn write_population(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "rank",
            "genome",
            "zen",
            "macs",
            "params",
            "ntk_cond",
            "diversity",
            "fitness",
        ])?;
        for (r, i) in self.population.iter().enumerate() {
            let p = &i.proxies;
            w.write_record([
                (r + 1).to_string(),
                i.genome.to_string(),
                p.zen.to_string(),
                p.macs.to_string(),
                p.params.to_string(),
                p.ntk_cond.map(|v| v.to_string()).unwrap_or_default(),
                p.diversity.to_string(),
                i.fitness.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_events(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "iteration",
            "parent",
            "child",
            "accepted",
            "evicted",
            "parent_id",
            "child_id",
            "evicted_id",
            "note",
        ])?;
        let id = |v: Option<usize>| v.map(|i| i.to_string()).unwrap_or_default();
        for e in &self.events {
            w.write_record([
                e.iteration.to_string(),
                self.archive[e.parent].genome.to_string(),
                e.child.to_string(),
                e.accepted.to_string(),
                e.evicted
                    .map(|i| self.archive[i].genome.to_string())
                    .unwrap_or_default(),
                e.parent.to_string(),
                id(e.child_id),
                id(e.evicted),
                e.note.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_top_k(&self, k: usize, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for g in top_k(self, k) {
            writeln!(f, "{g}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn report(&self, cfg: &SearchConfig) -> String {
        let mut s = String::new();
        let accepted = self.events.iter().filter(|e| e.accepted).count();
        let _ = writeln!(
            s,
            "population {}  iterations {}  seed {}",
            cfg.population, cfg.iterations, cfg.seed
        );
        let _ = writeln!(
            s,
            "max params {}  weights {:?}  alpha {}",
            cfg.max_params, cfg.weights, cfg.alpha
        );
        let _ = writeln!(
            s,
            "children proposed {}  admitted {}  individuals scored {}",
            self.events.len(),
            accepted,
            self.archive.len()
        );
        if let (Some(first), Some(last)) = (self.history.first(), self.history.last()) {
            let _ = writeln!(
                s,
                "fitness best/mean/worst: start {:.4}/{:.4}/{:.4}  end {:.4}/{:.4}/{:.4}",
                first.best, first.mean, first.worst, last.best, last.mean, last.worst
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>4}  {:>8}  {:>10}  {:>12}  {:>9}  genome",
            "rank", "fitness", "zen", "params", "diversity"
        );
        for (r, i) in self.population.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>4}  {:>8.4}  {:>10.4}  {:>12}  {:>9.4}  {}",
                r + 1,
                i.fitness,
                i.proxies.zen,
                i.proxies.params,
                i.proxies.diversity,
                i.genome
            );
        }
        s
    }
}
