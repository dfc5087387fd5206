//! Rank correlation, benchmark tables and the proxy-versus-accuracy harness.

mod benchmark;
mod correlation;
mod report;

pub use benchmark::{
    read_benchmark, synthetic_table, write_benchmark, BenchmarkRow, BenchmarkTable, SyntheticSpec, BENCHMARK_HEADER,
};
pub use correlation::{kendall_tau, midranks, pearson_r, spearman_r};
pub use report::{proxy_report, weight_sweep, Proxy, ProxyReport, ReportCell, SweepRow, WeightSweep};
