//! Study result tables with CSV and aligned-text renderings.

use std::fmt::Write as _;

use super::config::Scenario;
use crate::{Error, Result};

/// Posterior-mean bias and SMSE per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSmseTable {
    pub model: String,
    pub params: Vec<String>,
    pub truth: Vec<f64>,
    /// `m⁻¹ Σ θ̂⁽ⁱ⁾ − θ`.
    pub bias: Vec<f64>,
    /// `sqrt(m⁻¹ Σ (θ̂⁽ⁱ⁾ − θ)²)`.
    pub smse: Vec<f64>,
    /// Successful replications.
    pub replications: usize,
    pub failed: usize,
}

/// Aggregates point estimates (one vector per replication) against `truth`.
pub fn bias_smse(estimates: &[Vec<f64>], truth: &[f64]) -> Result<BiasSmseTable> {
    if estimates.is_empty() {
        return Err(Error::Domain("no successful replications".into()));
    }
    if let Some(e) = estimates.iter().find(|e| e.len() != truth.len()) {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: e.len(),
        });
    }
    let m = estimates.len() as f64;
    let bias = (0..truth.len())
        .map(|j| estimates.iter().map(|e| e[j]).sum::<f64>() / m - truth[j])
        .collect();
    let smse = (0..truth.len())
        .map(|j| (estimates.iter().map(|e| (e[j] - truth[j]).powi(2)).sum::<f64>() / m).sqrt())
        .collect();
    Ok(BiasSmseTable {
        model: String::new(),
        params: (0..truth.len()).map(|j| format!("theta{j}")).collect(),
        truth: truth.to_vec(),
        bias,
        smse,
        replications: estimates.len(),
        failed: 0,
    })
}

impl BiasSmseTable {
    /// Columns `parameter,true,bias,smse,replications,failed`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,true,bias,smse,replications,failed\n");
        for j in 0..self.params.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.params[j], self.truth[j], self.bias[j], self.smse[j], self.replications, self.failed
            );
        }
        s
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Parameter estimates ({}), {} replications{}",
            self.model,
            self.replications,
            if self.failed > 0 { format!(", {} failed", self.failed) } else { String::new() }
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>10}", "Parameter", "True", "Bias", "SMSE");
        for j in 0..self.params.len() {
            let _ = writeln!(
                s,
                "{:<10} {:>10.4} {:>10.4} {:>10.4}",
                self.params[j], self.truth[j], self.bias[j], self.smse[j]
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceCell {
    pub index: usize,
    pub contaminated: bool,
    /// Mean normalized divergence over replications.
    pub mean: f64,
    /// Standard deviation over replications (divisor m − 1).
    pub sd: f64,
    /// Fraction of replications in which this index has the largest
    /// divergence among the watched indices.
    pub max_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRow {
    pub scenario: Scenario,
    pub contaminated: Vec<usize>,
    pub cells: Vec<InfluenceCell>,
    pub replications: usize,
    pub failed: usize,
}

impl InfluenceRow {
    /// `values[r][k]` is the divergence of watched index `k` in replication `r`.
    pub fn from_replications(
        scenario: Scenario,
        watched: &[usize],
        contaminated: &[usize],
        values: &[Vec<f64>],
        failed: usize,
    ) -> Self {
        let m = values.len() as f64;
        let mut wins = vec![0usize; watched.len()];
        for v in values {
            let best = (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b });
            wins[best] += 1;
        }
        let cells = watched
            .iter()
            .enumerate()
            .map(|(k, &index)| {
                let mean = values.iter().map(|v| v[k]).sum::<f64>() / m;
                let sd = if values.len() > 1 {
                    (values.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
                } else {
                    f64::NAN
                };
                InfluenceCell {
                    index,
                    contaminated: contaminated.contains(&index),
                    mean,
                    sd,
                    max_rate: wins[k] as f64 / m,
                }
            })
            .collect();
        Self {
            scenario,
            contaminated: contaminated.to_vec(),
            cells,
            replications: values.len(),
            failed,
        }
    }

    pub fn cell(&self, index: usize) -> Option<&InfluenceCell> {
        self.cells.iter().find(|c| c.index == index)
    }
}

/// Mean and SD of normalized divergence per scenario and watched index.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceStudyTable {
    pub model: String,
    pub watched: Vec<usize>,
    pub rows: Vec<InfluenceRow>,
}

impl InfluenceStudyTable {
    pub fn row(&self, scenario: Scenario) -> Option<&InfluenceRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }

    /// Columns `scenario,index,contaminated,mean,sd,max_rate,replications,failed`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,index,contaminated,mean,sd,max_rate,replications,failed\n");
        for row in &self.rows {
            for c in &row.cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    row.scenario.label(),
                    c.index,
                    c.contaminated as u8,
                    c.mean,
                    c.sd,
                    c.max_rate,
                    row.replications,
                    row.failed
                );
            }
        }
        s
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let m = self.rows.first().map_or(0, |r| r.replications + r.failed);
        let _ = writeln!(
            s,
            "Case influence diagnostic ({}): mean (sd) of normalized divergence over {m} replications",
            self.model
        );
        let _ = writeln!(s);
        let _ = write!(s, "{:<9} {:<12}", "Scenario", "Perturbed");
        for i in &self.watched {
            let _ = write!(s, " {:>18}", format!("D({i})"));
        }
        let _ = writeln!(s);
        for row in &self.rows {
            let perturbed = if row.contaminated.is_empty() {
                "none".to_string()
            } else {
                row.contaminated.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
            };
            let _ = write!(s, "{:<9} {:<12}", row.scenario.label(), perturbed);
            for c in &row.cells {
                let _ = write!(s, " {:>18}", format!("{:.4} ({:.4})", c.mean, c.sd));
            }
            if row.failed > 0 {
                let _ = write!(s, "  [{} failed]", row.failed);
            }
            let _ = writeln!(s);
        }
        s
    }
}
