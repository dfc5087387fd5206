use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::events::Encoding;
use crate::genome::{DesignSpace, Genome};
use crate::tensor::Rng;

pub const BENCHMARK_HEADER: [&str; 7] = ["genome", "encoding", "zen", "macs", "params", "ntk_cond", "map50"];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub genome: Genome,
    pub encoding: Encoding,
    pub zen: f64,
    pub macs: u64,
    pub params: u64,
    pub ntk_cond: Option<f64>,
    pub map50: f64,
}

/// Proxy values and measured accuracy of a set of models, keyed by (genome, encoding).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkTable {
    rows: Vec<BenchmarkRow>,
    keys: HashSet<(String, Encoding)>,
}

impl BenchmarkTable {
    pub fn new(rows: Vec<BenchmarkRow>) -> Result<Self> {
        let mut t = BenchmarkTable::default();
        for (i, r) in rows.into_iter().enumerate() {
            t.push(r).map_err(|m| Error::parse(format!("row {}", i + 1), m))?;
        }
        Ok(t)
    }

    fn push(&mut self, row: BenchmarkRow) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&row.map50) {
            return Err(format!("map50 {} outside [0, 1]", row.map50));
        }
        if !row.zen.is_finite() {
            return Err(format!("zen {} is not finite", row.zen));
        }
        if !self.keys.insert((row.genome.to_string(), row.encoding)) {
            return Err(format!("duplicate key ({}, {})", row.genome, row.encoding));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[BenchmarkRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Encodings present, in canonical order.
    pub fn encodings(&self) -> Vec<Encoding> {
        Encoding::ALL
            .into_iter()
            .filter(|e| self.rows.iter().any(|r| r.encoding == *e))
            .collect()
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, line: u64) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    rec[col]
        .parse()
        .map_err(|e| Error::parse(format!("line {line}"), format!("{}: {e}", BENCHMARK_HEADER[col])))
}

pub fn read_benchmark(path: &Path) -> Result<BenchmarkTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(File::open(path)?);
    let mut rec = csv::StringRecord::new();
    if !rdr.read_record(&mut rec)? || rec.iter().ne(BENCHMARK_HEADER) {
        return Err(Error::parse(
            "line 1",
            format!("header must be exactly {}", BENCHMARK_HEADER.join(",")),
        ));
    }
    let mut table = BenchmarkTable::default();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != BENCHMARK_HEADER.len() {
            return Err(Error::parse(
                format!("line {line}"),
                format!("expected {} columns, found {}", BENCHMARK_HEADER.len(), rec.len()),
            ));
        }
        let genome: Genome = field(&rec, 0, line)?;
        let encoding: Encoding = field(&rec, 1, line)?;
        let ntk_cond = if rec[5].is_empty() {
            None
        } else {
            Some(field(&rec, 5, line)?)
        };
        let row = BenchmarkRow {
            genome,
            encoding,
            zen: field(&rec, 2, line)?,
            macs: field(&rec, 3, line)?,
            params: field(&rec, 4, line)?,
            ntk_cond,
            map50: field(&rec, 6, line)?,
        };
        table.push(row).map_err(|m| Error::parse(format!("line {line}"), m))?;
    }
    Ok(table)
}

pub fn write_benchmark(table: &BenchmarkTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BENCHMARK_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.genome.to_string(),
            r.encoding.to_string(),
            r.zen.to_string(),
            r.macs.to_string(),
            r.params.to_string(),
            r.ntk_cond.map(|v| v.to_string()).unwrap_or_default(),
            r.map50.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of a synthetic table whose accuracy column is a planted linear
/// function of the normalized proxies plus Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    /// Planted coefficients of normalized (zen, MACs, NTK).
    pub weights: [f64; 3],
    pub noise: f64,
    pub seed: u64,
    /// Rows are spread round-robin over these encodings.
    pub encodings: Vec<Encoding>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            rows: 250,
            weights: [0.6, 0.4, 0.0],
            noise: 0.02,
            seed: 0,
            encodings: vec![Encoding::Shist],
        }
    }
}

fn minmax(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter()
        .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 })
        .collect()
}

/// Proxies are drawn independently and uniformly; genomes are random distinct
/// members of each encoding's design space. The planted score is min-max
/// rescaled onto `[0, 1]`, which leaves every rank statistic unchanged.
pub fn synthetic_table(spec: &SyntheticSpec) -> Result<BenchmarkTable> {
    if spec.encodings.is_empty() {
        return Err(Error::Config("synthetic table needs at least one encoding".into()));
    }
    if !spec.noise.is_finite() || spec.noise < 0.0 {
        return Err(Error::Config("noise must be non-negative".into()));
    }
    let mut rng = Rng::new(spec.seed);
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(spec.rows);
    while rows.len() < spec.rows {
        let enc = spec.encodings[rows.len() % spec.encodings.len()];
        let genome = DesignSpace::frozen(enc).sample(&mut rng)?;
        if !seen.insert(genome.to_string()) {
            continue;
        }
        rows.push(BenchmarkRow {
            genome,
            encoding: enc,
            zen: 20.0 + 80.0 * rng.uniform(),
            macs: 10_000_000 + (rng.uniform() * 9.99e9) as u64,
            params: 500_000 + (rng.uniform() * 9.5e6) as u64,
            ntk_cond: Some(1e-4 + (1.0 - 1e-4) * rng.uniform()),
            map50: 0.0,
        });
    }
    let zen = minmax(&rows.iter().map(|r| r.zen).collect::<Vec<_>>());
    let macs = minmax(&rows.iter().map(|r| r.macs as f64).collect::<Vec<_>>());
    let ntk = minmax(&rows.iter().map(|r| r.ntk_cond.unwrap_or(0.0)).collect::<Vec<_>>());
    let score: Vec<f64> = (0..rows.len())
        .map(|i| {
            spec.weights[0] * zen[i] + spec.weights[1] * macs[i] + spec.weights[2] * ntk[i] + spec.noise * rng.normal()
        })
        .collect();
    for (r, m) in rows.iter_mut().zip(minmax(&score)) {
        r.map50 = m;
    }
    BenchmarkTable::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_valid() {
        let spec = SyntheticSpec {
            rows: 40,
            encodings: Encoding::ALL.to_vec(),
            ..Default::default()
        };
        let a = synthetic_table(&spec).unwrap();
        assert_eq!(a, synthetic_table(&spec).unwrap());
        assert_eq!(a.len(), 40);
        assert_eq!(a.encodings(), Encoding::ALL.to_vec());
        assert!(a.rows().iter().all(|r| (0.0..=1.0).contains(&r.map50)));
    }

    #[test]
    fn constructor_rejects_duplicates() {
        let t = synthetic_table(&SyntheticSpec {
            rows: 2,
            ..Default::default()
        })
        .unwrap();
        let mut rows = t.rows().to_vec();
        rows.push(rows[0].clone());
        let err = BenchmarkTable::new(rows).unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("duplicate"), "{err}");
    }
}
