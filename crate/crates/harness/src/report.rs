//! Simulation-versus-PDE comparison tables.

use exclusion_core::pde::DensityField;
use exclusion_core::sim::TrajectoryRecord;
use exclusion_core::testfn::TestFunction;
use serde::Serialize;

use crate::ensemble::mean_se;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub t: f64,
    pub observable: String,
    pub mean: f64,
    pub se: Option<f64>,
    pub pde: f64,
    pub gap: f64,
}

/// Largest gap over sample times and observables at one lattice size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub sup_gap: f64,
    pub se: Option<f64>,
    pub t: f64,
    pub observable: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    /// Every consecutive pair satisfies `gap' <= gap + 2 sqrt(se^2 + se'^2)`.
    pub non_increasing: bool,
    pub steps: Vec<bool>,
    pub final_sup_gap: f64,
    pub max_final_gap: Option<f64>,
    pub final_gap_ok: bool,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.non_increasing && self.final_gap_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub experiment: String,
    pub replicas: usize,
    pub se_available: bool,
    pub rows: Vec<ComparisonRow>,
    pub summary: Vec<SizeSummary>,
    pub verdict: Verdict,
}

/// PDE pairings `[k][j]` of every observable at every sample time.
pub fn pde_pairings(field: &DensityField<f64>, times: &[f64], observables: &[TestFunction<f64>]) -> Vec<Vec<f64>> {
    times
        .iter()
        .map(|&t| observables.iter().map(|h| field.pairing_at(t, |x| h.value(t, x))).collect())
        .collect()
}

/// Tabulates ensemble means against PDE values; `ensembles[i]` holds the
/// replicas at lattice size `sizes[i]` in replica order.
pub fn compare(
    experiment: &str,
    sizes: &[usize],
    ensembles: &[Vec<TrajectoryRecord>],
    labels: &[String],
    times: &[f64],
    pde: &[Vec<f64>],
    max_final_gap: Option<f64>,
) -> ComparisonReport {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (&n, runs) in sizes.iter().zip(ensembles) {
        let mut best: Option<SizeSummary> = None;
        for (k, &t) in times.iter().enumerate() {
            for (j, label) in labels.iter().enumerate() {
                let xs: Vec<f64> = runs.iter().map(|r| r.values[k][j]).collect();
                let s = mean_se(&xs);
                let gap = (s.mean - pde[k][j]).abs();
                if best.as_ref().is_none_or(|b| gap > b.sup_gap) {
                    best = Some(SizeSummary { n, sup_gap: gap, se: s.se, t, observable: label.clone() });
                }
                rows.push(ComparisonRow { n, t, observable: label.clone(), mean: s.mean, se: s.se, pde: pde[k][j], gap });
            }
        }
        summary.extend(best);
    }
    let steps: Vec<bool> = summary
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let slack = 2.0 * (a.se.unwrap_or(0.0).powi(2) + b.se.unwrap_or(0.0).powi(2)).sqrt();
            b.sup_gap <= a.sup_gap + slack
        })
        .collect();
    let final_sup_gap = summary.last().map_or(f64::NAN, |s| s.sup_gap);
    let final_gap_ok = max_final_gap.is_none_or(|g| final_sup_gap <= g);
    let replicas = ensembles.first().map_or(0, |e| e.len());
    ComparisonReport {
        experiment: experiment.into(),
        replicas,
        se_available: replicas >= 2,
        rows,
        summary,
        verdict: Verdict { non_increasing: steps.iter().all(|&s| s), steps, final_sup_gap, max_final_gap, final_gap_ok },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use exclusion_core::sim::{EventCounters, RunStats};

    fn record(n: usize, values: Vec<Vec<f64>>) -> TrajectoryRecord {
        TrajectoryRecord {
            n,
            t_final: 1.0,
            sample_times: vec![0.0, 1.0],
            values,
            snapshots: None,
            counters: EventCounters::default(),
            initial_values: vec![],
            final_values: vec![],
            generator_integrals: None,
            time_integrals: None,
            stats: RunStats::default(),
        }
    }

    #[test]
    fn verdict_allows_two_standard_errors() {
        let labels = vec!["1".to_string()];
        let times = [0.0, 1.0];
        let pde = vec![vec![0.5], vec![0.5]];
        let small = vec![record(10, vec![vec![0.5], vec![0.6]]), record(10, vec![vec![0.5], vec![0.6]])];
        let noisy = vec![record(20, vec![vec![0.5], vec![0.55]]), record(20, vec![vec![0.5], vec![0.75]])];
        let r = compare("hydro-compare", &[10, 20], &[small, noisy], &labels, &times, &pde, Some(0.2));
        assert_eq!(r.rows.len(), 4);
        assert!((r.summary[0].sup_gap - 0.1).abs() < 1e-12);
        assert!((r.summary[1].sup_gap - 0.15).abs() < 1e-12);
        // se = 0.1 at N = 20, so 0.15 <= 0.1 + 0.2 passes.
        assert!(r.verdict.non_increasing);
        assert!(r.verdict.passed());
        assert!(r.rows.iter().all(|row| row.gap >= 0.0));
    }

    #[test]
    fn single_replica_flags_missing_errors() {
        let labels = vec!["1".to_string()];
        let pde = vec![vec![0.5], vec![0.5]];
        let a = vec![record(10, vec![vec![0.5], vec![0.6]])];
        let b = vec![record(20, vec![vec![0.5], vec![0.7]])];
        let r = compare("hydro-compare", &[10, 20], &[a, b], &labels, &[0.0, 1.0], &pde, None);
        assert!(!r.se_available);
        assert!(r.rows.iter().all(|row| row.se.is_none()));
        assert!(!r.verdict.non_increasing);
    }
}
