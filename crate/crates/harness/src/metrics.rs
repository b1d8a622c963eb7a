//! Append-only metric logs written as CSV.

use std::path::Path;

use hebm_core::ebm::PriorMetrics;
use hebm_core::tasks::coupling::CoupledMetrics;

use crate::error::{HarnessError, Result};
use crate::pipeline::GeneratorMetrics;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub phase: String,
    pub iteration: usize,
    pub metrics: Vec<(String, f64)>,
    pub wall_ms: f64,
}

/// Rows of one phase with a fixed metric header.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    run_id: String,
    phase: String,
    names: Vec<String>,
    rows: Vec<(usize, Vec<f64>, f64)>,
}

impl MetricsLog {
    pub fn new(run_id: &str, phase: &str, names: &[&str]) -> Self {
        MetricsLog {
            run_id: run_id.to_string(),
            phase: phase.to_string(),
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, iteration: usize, values: Vec<f64>, wall_ms: f64) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(HarnessError::Usage(format!(
                "metrics row has {} values, header has {}",
                values.len(),
                self.names.len()
            )));
        }
        if let Some((last, _, _)) = self.rows.last() {
            if iteration <= *last {
                return Err(HarnessError::Usage(format!(
                    "iteration {iteration} does not follow {last} in phase {}",
                    self.phase
                )));
            }
        }
        self.rows.push((iteration, values, wall_ms));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = MetricsRecord> + '_ {
        self.rows.iter().map(|(it, v, ms)| MetricsRecord {
            run_id: self.run_id.clone(),
            phase: self.phase.clone(),
            iteration: *it,
            metrics: self.names.iter().cloned().zip(v.iter().copied()).collect(),
            wall_ms: *ms,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
        let mut header = vec!["run_id".to_string(), "phase".into(), "iteration".into()];
        header.extend(self.names.iter().cloned());
        header.push("wall_ms".into());
        w.write_record(&header).map_err(|e| HarnessError::io(path, e))?;
        for (it, v, ms) in &self.rows {
            let mut row = vec![self.run_id.clone(), self.phase.clone(), it.to_string()];
            row.extend(v.iter().map(|x| x.to_string()));
            row.push(ms.to_string());
            w.write_record(&row).map_err(|e| HarnessError::io(path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }

    pub fn from_generator(run_id: &str, log: &[GeneratorMetrics]) -> Result<Self> {
        let mut m = MetricsLog::new(run_id, "generator", &["elbo"]);
        for r in log {
            m.push(r.iteration, vec![r.elbo], r.wall_ms)?;
        }
        Ok(m)
    }

    pub fn from_prior(run_id: &str, log: &[PriorMetrics]) -> Result<Self> {
        let mut m = MetricsLog::new(run_id, "prior", &["t", "e_pos", "e_neg", "grad_norm"]);
        for r in log {
            m.push(r.iteration, vec![r.t as f64, r.e_pos, r.e_neg, r.grad_norm], r.wall_ms)?;
        }
        Ok(m)
    }

    pub fn from_coupled(run_id: &str, log: &[CoupledMetrics]) -> Result<Self> {
        let mut m = MetricsLog::new(run_id, "coupled", &["t", "e_pos", "e_neg", "cross_entropy", "grad_norm"]);
        for r in log {
            m.push(
                r.iteration,
                vec![r.t as f64, r.e_pos, r.e_neg, r.cross_entropy, r.grad_norm],
                r.wall_ms,
            )?;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterations_must_increase() {
        let mut m = MetricsLog::new("r", "prior", &["a"]);
        m.push(0, vec![1.0], 0.0).unwrap();
        m.push(2, vec![0.5], 0.0).unwrap();
        assert!(m.push(2, vec![0.1], 0.0).is_err());
        assert!(m.push(3, vec![], 0.0).is_err());
        let r: Vec<_> = m.records().collect();
        assert_eq!(r[1].metrics, vec![("a".to_string(), 0.5)]);
    }
}
