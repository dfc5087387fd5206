use std::fmt::Write as _;
use std::path::Path;

use super::benchmark::{BenchmarkRow, BenchmarkTable};
use super::correlation::{kendall_tau, spearman_r};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub w_zen: f64,
    pub w_macs: f64,
    pub tau: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSweep {
    pub rows: Vec<SweepRow>,
    /// Index of the row with the highest tau; ties go to higher rho, then lower `w_zen`.
    pub best: usize,
}

impl WeightSweep {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["w_zen", "w_macs", "tau", "rho", "best"])?;
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record([
                r.w_zen.to_string(),
                r.w_macs.to_string(),
                r.tau.to_string(),
                r.rho.to_string(),
                (i == self.best).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn minmax(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter()
        .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 })
        .collect()
}

/// Correlate `w * zen + (1 - w) * macs` (each min-max normalized over the table)
/// with map50 for `w = 0, step, ..., 1`.
pub fn weight_sweep(table: &BenchmarkTable, step: f64) -> Result<WeightSweep> {
    if table.is_empty() {
        return Err(Error::Config("weight sweep needs a non-empty table".into()));
    }
    let k = (1.0 / step).round();
    if step.is_nan() || step <= 0.0 || k < 1.0 || (k * step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("sweep step {step} does not divide 1")));
    }
    let k = k as usize;
    let zen = minmax(&table.rows().iter().map(|r| r.zen).collect::<Vec<_>>());
    let macs = minmax(&table.rows().iter().map(|r| r.macs as f64).collect::<Vec<_>>());
    let map: Vec<f64> = table.rows().iter().map(|r| r.map50).collect();
    let mut rows = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let w_zen = i as f64 / k as f64;
        let w_macs = (k - i) as f64 / k as f64;
        let score: Vec<f64> = zen.iter().zip(&macs).map(|(z, m)| w_zen * z + w_macs * m).collect();
        rows.push(SweepRow {
            w_zen,
            w_macs,
            tau: kendall_tau(&score, &map)?,
            rho: spearman_r(&score, &map)?,
        });
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        if r.tau > b.tau || (r.tau == b.tau && r.rho > b.rho) {
            best = i;
        }
    }
    Ok(WeightSweep { rows, best })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proxy {
    Zen,
    Macs,
    Params,
    NtkCond,
}

impl Proxy {
    pub const ALL: [Proxy; 4] = [Proxy::Zen, Proxy::Macs, Proxy::Params, Proxy::NtkCond];

    pub fn name(self) -> &'static str {
        match self {
            Proxy::Zen => "zen",
            Proxy::Macs => "macs",
            Proxy::Params => "params",
            Proxy::NtkCond => "ntk_cond",
        }
    }

    fn value(self, r: &BenchmarkRow) -> Option<f64> {
        match self {
            Proxy::Zen => Some(r.zen),
            Proxy::Macs => Some(r.macs as f64),
            Proxy::Params => Some(r.params as f64),
            Proxy::NtkCond => r.ntk_cond,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportCell {
    pub proxy: Proxy,
    /// Encoding name, or `ALL` for the whole table.
    pub group: String,
    pub n: usize,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    /// Why the cell has no correlation; empty when it does.
    pub degenerate: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProxyReport {
    pub cells: Vec<ReportCell>,
}

impl ProxyReport {
    pub fn cell(&self, proxy: Proxy, group: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.proxy == proxy && c.group == group)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["proxy", "group", "n", "tau", "rho", "degenerate"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            w.write_record([
                c.proxy.name().to_string(),
                c.group.clone(),
                c.n.to_string(),
                opt(c.tau),
                opt(c.rho),
                c.degenerate.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<9} {:<6} {:>5} {:>8} {:>8}", "proxy", "group", "n", "tau", "rho");
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        for c in &self.cells {
            let _ = write!(
                s,
                "{:<9} {:<6} {:>5} {:>8} {:>8}",
                c.proxy.name(),
                c.group,
                c.n,
                fmt(c.tau),
                fmt(c.rho)
            );
            if !c.degenerate.is_empty() {
                let _ = write!(s, "  ({})", c.degenerate);
            }
            s.push('\n');
        }
        s
    }
}

fn correlate_group(proxy: Proxy, group: String, rows: &[&BenchmarkRow]) -> ReportCell {
    let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| proxy.value(r).map(|v| (v, r.map50))).unzip();
    let mut cell = ReportCell {
        proxy,
        group,
        n: x.len(),
        tau: None,
        rho: None,
        degenerate: String::new(),
    };
    if x.len() < 2 {
        cell.degenerate = "fewer than two rows".into();
        return cell;
    }
    match (kendall_tau(&x, &y), spearman_r(&x, &y)) {
        (Ok(t), Ok(r)) => {
            cell.tau = Some(t);
            cell.rho = Some(r);
        }
        (Err(e), _) | (_, Err(e)) => cell.degenerate = e.to_string(),
    }
    cell
}

/// Kendall and Spearman correlation of each proxy with map50, per encoding and overall.
/// Groups too small or too tied to correlate are flagged, not fatal.
pub fn proxy_report(table: &BenchmarkTable) -> ProxyReport {
    let mut cells = Vec::new();
    let all: Vec<&BenchmarkRow> = table.rows().iter().collect();
    for proxy in Proxy::ALL {
        for enc in table.encodings() {
            let rows: Vec<&BenchmarkRow> = all.iter().copied().filter(|r| r.encoding == enc).collect();
            cells.push(correlate_group(proxy, enc.to_string(), &rows));
        }
        cells.push(correlate_group(proxy, "ALL".into(), &all));
    }
    ProxyReport { cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::benchmark::{synthetic_table, SyntheticSpec};

    #[test]
    fn macs_only_signal_peaks_at_zero() {
        let t = synthetic_table(&SyntheticSpec {
            rows: 60,
            weights: [0.0, 1.0, 0.0],
            noise: 0.0,
            ..Default::default()
        })
        .unwrap();
        let s = weight_sweep(&t, 0.1).unwrap();
        assert_eq!(s.rows.len(), 11);
        assert_eq!(s.best, 0);
        assert_eq!(s.best_row().tau, 1.0);
    }

    #[test]
    fn bad_step_rejected() {
        let t = synthetic_table(&SyntheticSpec {
            rows: 5,
            ..Default::default()
        })
        .unwrap();
        assert!(weight_sweep(&t, 0.3).is_err());
        assert!(weight_sweep(&t, 0.0).is_err());
        assert_eq!(weight_sweep(&t, 0.25).unwrap().rows.len(), 5);
    }
}
