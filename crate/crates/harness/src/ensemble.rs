//! Replica ensembles and their order-independent reduction.

use exclusion_core::boundary::RateModel;
use exclusion_core::scalar::KahanSum;
use exclusion_core::sim::{run_replica, SimConfig, SimError, TrajectoryRecord};
use rayon::prelude::*;
use serde::Serialize;

/// Runs replicas `0..m` on the current rayon pool. The result is indexed by
/// replica, so it does not depend on scheduling.
pub fn run_ensemble(
    cfg: &SimConfig,
    model: &RateModel<f64>,
    gamma: &(dyn Fn(f64) -> f64 + Sync),
    seed: u64,
    m: usize,
    stream: u64,
) -> Result<Vec<TrajectoryRecord>, SimError> {
    (0..m as u64).into_par_iter().map(|r| run_replica(cfg, model, gamma, seed, r, stream)).collect()
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    /// `None` for a single sample.
    pub se: Option<f64>,
}

/// Two-pass compensated mean and standard error, summing in input order.
pub fn mean_se(xs: &[f64]) -> MeanSe {
    let m = xs.len();
    if m == 0 {
        return MeanSe { mean: f64::NAN, se: None };
    }
    let mean = xs.iter().copied().collect::<KahanSum>().value() / m as f64;
    if m < 2 {
        return MeanSe { mean, se: None };
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).collect::<KahanSum>().value();
    let var = ss / (m - 1) as f64;
    MeanSe { mean, se: Some((var / m as f64).sqrt()) }
}

/// Unbiased sample variance, `None` below two samples.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    let s = mean_se(xs).se?;
    Some(s * s * xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se_of_a_small_sample() {
        let r = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.mean, 2.5);
        let se = r.se.unwrap();
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[0.7]).se, None);
        assert!((sample_variance(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ensemble_is_independent_of_pool_size() {
        let (model, _) = RateModel::l3(1.0, 2.0, None).unwrap();
        let mut cfg = SimConfig::new(16, 0.05);
        cfg.observables = vec![exclusion_core::testfn::TestFunction::affine(0.0, 1.0, 0, 1, 0.05).unwrap()];
        let gamma = |x: f64| 0.3 + 0.4 * x;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&cfg, &model, &gamma, 5, 6, 0).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        let c = run_replica(&cfg, &model, &gamma, 5, 4, 0).unwrap();
        assert_eq!(a[4], c);
    }
}
