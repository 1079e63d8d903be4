//! Aggregation of replication results into Table-1 style summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::protocol::{Method, ReplicationResult};
use crate::causal::Subgroup;
use crate::error::{Error, Result};

/// MSE of γ̂_avg against the benchmark for one (group, n, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub group: String,
    pub n: usize,
    pub method: Method,
    pub mse: f64,
    /// Standard error of the mean of the squared deviations.
    pub se: f64,
    pub divergences: usize,
    /// Replications with a finite squared deviation.
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdpteCell {
    pub n: usize,
    pub method: Method,
    pub mean: f64,
    pub se: f64,
    pub divergences: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// "map" or "laplace_mean".
    pub point_estimate: String,
    pub population_version: String,
    pub population_n: usize,
    pub n_prime: usize,
    pub methods: Vec<Method>,
    pub groups: Vec<String>,
    pub n_grid: Vec<usize>,
    /// Benchmark γ_avg over the whole population, per group.
    pub benchmark: Vec<(String, f64)>,
    pub cells: Vec<ReportCell>,
    pub msdpte: Vec<MsdpteCell>,
}

impl ExperimentReport {
    pub fn cell(&self, group: &str, n: usize, method: &Method) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.group == group && c.n == n && &c.method == method)
    }

    pub fn msdpte_cell(&self, n: usize, method: &Method) -> Option<&MsdpteCell> {
        self.msdpte.iter().find(|c| c.n == n && &c.method == method)
    }
}

/// Mean and standard error (sample sd / √R) of the finite values.
pub fn mean_se(values: &[f64]) -> (f64, f64, usize) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let r = v.len();
    if r == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / r as f64;
    if r == 1 {
        return (mean, 0.0, 1);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    (mean, (var / r as f64).sqrt(), r)
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Summaries per (group, n, method) and per (n, method) for MSDPTE.
/// Groups follow `groups`; n values ascend; methods keep first-seen order.
pub fn aggregate(results: &[ReplicationResult], groups: &[Subgroup]) -> Result<ExperimentReport> {
    if results.is_empty() {
        return Err(Error::Invalid("no replication results to aggregate".into()));
    }
    let methods = first_seen(results.iter().map(|r| r.method.clone()));
    let mut n_grid = first_seen(results.iter().map(|r| r.n));
    n_grid.sort_unstable();

    let mut cells = Vec::new();
    for g in groups {
        for &n in &n_grid {
            for m in &methods {
                let rs: Vec<&ReplicationResult> =
                    results.iter().filter(|r| r.n == n && &r.method == m).collect();
                let sq: Vec<f64> = rs
                    .iter()
                    .map(|r| r.squared_deviation(&g.label).unwrap_or(f64::NAN))
                    .collect();
                let (mse, se, used) = mean_se(&sq);
                cells.push(ReportCell {
                    group: g.label.clone(),
                    n,
                    method: m.clone(),
                    mse,
                    se,
                    divergences: rs.iter().filter(|r| r.diverged).count(),
                    replications: used,
                });
            }
        }
    }
    let mut msdpte = Vec::new();
    for &n in &n_grid {
        for m in &methods {
            let rs: Vec<&ReplicationResult> =
                results.iter().filter(|r| r.n == n && &r.method == m).collect();
            let v: Vec<f64> = rs.iter().map(|r| r.msdpte).collect();
            let (mean, se, used) = mean_se(&v);
            msdpte.push(MsdpteCell {
                n,
                method: m.clone(),
                mean,
                se,
                divergences: rs.iter().filter(|r| r.diverged).count(),
                replications: used,
            });
        }
    }
    Ok(ExperimentReport {
        point_estimate: "map".into(),
        population_version: String::new(),
        population_n: 0,
        n_prime: 0,
        methods,
        groups: groups.iter().map(|g| g.label.clone()).collect(),
        n_grid,
        benchmark: Vec::new(),
        cells,
        msdpte,
    })
}

const CLIP: f64 = 50.0;

/// A value as printed in the table: three decimals, `> 50` above the clip
/// and `< 0.001` for small positive values.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v > CLIP {
        "> 50".into()
    } else if v > 0.0 && v < 0.001 {
        "< 0.001".into()
    } else {
        format!("{v:.3}")
    }
}

/// `MSE (SE)`.
pub fn format_cell(mse: f64, se: f64) -> String {
    format!("{} ({})", format_value(mse), format_value(se))
}

/// Table 1 layout: `Group, n`, then one `MSE (SE)` column per method.
pub fn write_table_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["Group".to_owned(), "n".to_owned()];
    header.extend(report.methods.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for g in &report.groups {
        for &n in &report.n_grid {
            let mut row = vec![g.clone(), n.to_string()];
            for m in &report.methods {
                row.push(match report.cell(g, n, m) {
                    Some(c) => format_cell(c.mse, c.se),
                    None => "NA".into(),
                });
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Tidy MSDPTE curve: one row per (n, method).
pub fn write_msdpte_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "method", "msdpte", "se", "divergences", "replications"])?;
    for c in &report.msdpte {
        w.write_record([
            c.n.to_string(),
            c.method.to_string(),
            c.mean.to_string(),
            c.se.to_string(),
            c.divergences.to_string(),
            c.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Raw per-replication values for re-aggregation.
pub fn write_replications_csv<W: Write>(
    results: &[ReplicationResult],
    groups: &[Subgroup],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["n", "replication", "method", "diverged", "msdpte"]
        .iter()
        .map(|s| (*s).to_owned())
        .collect();
    for g in groups {
        header.push(format!("gamma:{}", g.label));
        header.push(format!("benchmark:{}", g.label));
    }
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![
            r.n.to_string(),
            r.replication.to_string(),
            r.method.to_string(),
            r.diverged.to_string(),
            r.msdpte.to_string(),
        ];
        for g in groups {
            let get = |m: &std::collections::BTreeMap<String, f64>| {
                m.get(&g.label).map_or("NA".to_owned(), |v| v.to_string())
            };
            row.push(get(&r.gamma_avg_by_group));
            row.push(get(&r.benchmark_by_group));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
