use std::fmt::Write as _;
use std::path::Path;

use crate::binio::atomic_write;
use crate::error::Result;
use crate::synthetic::PriorSpec;

pub const CSV_HEADER: &str = "experiment,gamma,mu1,mu2,method,metric,value,n_samples,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub experiment: String,
    pub gamma: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl MetricRow {
    /// Experiment coordinates taken from a prior.
    pub fn for_prior(experiment: &str, prior: &PriorSpec, method: &str, metric: &str, value: f64, n_samples: usize, seed: u64) -> Self {
        let [mu1, mu2] = prior.mean();
        Self {
            experiment: experiment.to_string(),
            gamma: prior.correlation(),
            mu1,
            mu2,
            method: method.to_string(),
            metric: metric.to_string(),
            value,
            n_samples,
            seed,
        }
    }
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.experiment,
                fmt_float(r.gamma),
                fmt_float(r.mu1),
                fmt_float(r.mu2),
                r.method,
                r.metric,
                fmt_float(r.value),
                r.n_samples,
                r.seed
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv().as_bytes())
    }

    pub fn value(&self, method: &str, metric: &str, gamma: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.metric == metric && r.gamma == gamma)
            .map(|r| r.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let p = PriorSpec::three_param(2.0, -1.0, 0.9).unwrap();
        let r = MetricReport {
            rows: vec![MetricRow::for_prior("sweep", &p, "ei-fm", "swd", 0.1, 10, 3)],
        };
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "sweep,9.0000000000000002e-1,2.0000000000000000e0,-1.0000000000000000e0,ei-fm,swd,1.0000000000000001e-1,10,3"
        );
        let back: f64 = fmt_float(0.1).parse().unwrap();
        assert_eq!(back, 0.1);
        assert_eq!(r.value("ei-fm", "swd", 0.9), Some(0.1));
    }
}
