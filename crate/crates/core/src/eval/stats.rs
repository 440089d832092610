//! Robust aggregate statistics over runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Default bootstrap resample count.
pub const N_RESAMPLES: usize = 2000;
/// Default confidence level.
pub const CONFIDENCE: f64 = 0.95;

fn sorted(values: &[f64]) -> Result<Vec<f64>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Interquartile mean. Each sorted value owns the quantile interval
/// `[i/n, (i+1)/n]` and is weighted by its overlap with `[0.25, 0.75]`, so
/// lengths not divisible by four are trimmed fractionally.
pub fn iqm(values: &[f64]) -> Result<f64, EvalError> {
    let v = sorted(values)?;
    Ok(iqm_sorted(&v))
}

fn iqm_sorted(v: &[f64]) -> f64 {
    // Work in units of 1/(4n) so the boundaries n and 3n are integers.
    let n = v.len();
    let (lo, hi) = (n, 3 * n);
    let mut total = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let (a, b) = (4 * i, 4 * (i + 1));
        let overlap = b.min(hi).saturating_sub(a.max(lo));
        if overlap > 0 {
            total += x * overlap as f64;
        }
    }
    total / (2 * n) as f64
}

pub fn mean(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean shortfall from a perfect score of 1 over checkpoints; scores above 1
/// earn no credit.
pub fn optimality_gap(scores: &[f64]) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(scores.iter().map(|s| (1.0 - s).max(0.0)).sum::<f64>() / scores.len() as f64)
}

/// Mann–Whitney estimate of `P(X < Y)`, ties counting one half. Lower gaps
/// are better, so this is the probability that X improves on Y.
pub fn probability_of_improvement(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.is_empty() || y.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut wins = 0.0;
    for &a in x {
        for &b in y {
            if a < b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (x.len() * y.len()) as f64)
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn with_seed(seed: u64) -> Self {
        BootstrapConfig {
            n_resamples: N_RESAMPLES,
            level: CONFIDENCE,
            seed,
        }
    }

    fn bounds(&self, mut stats: Vec<f64>) -> (f64, f64) {
        stats.sort_by(f64::total_cmp);
        let alpha = (1.0 - self.level) / 2.0;
        (quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha))
    }
}

/// A point statistic with its percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_runs: usize,
    pub n_resamples: usize,
}

impl MetricSummary {
    /// Degenerate summary for a single run: the interval collapses to the point.
    pub fn single(point: f64) -> Self {
        MetricSummary {
            point,
            ci_low: point,
            ci_high: point,
            n_runs: 1,
            n_resamples: 0,
        }
    }
}

fn resample_indices(n: usize, rng: &mut ChaCha8Rng, out: &mut [usize]) {
    for slot in out.iter_mut() {
        *slot = rng.gen_range(0..n);
    }
    debug_assert_eq!(out.len(), n);
}

/// Percentile bootstrap of `statistic` over runs resampled with replacement.
pub fn bootstrap_ci<F>(
    values: &[f64],
    statistic: F,
    config: &BootstrapConfig,
) -> Result<MetricSummary, EvalError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError>,
{
    if values.len() < 2 {
        return Err(EvalError::TooFew { need: 2, got: values.len() });
    }
    let point = statistic(values)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = values.len();
    let mut idx = vec![0; n];
    let mut sample = vec![0.0; n];
    let mut stats = Vec::with_capacity(config.n_resamples);
    for _ in 0..config.n_resamples {
        resample_indices(n, &mut rng, &mut idx);
        for (s, &i) in sample.iter_mut().zip(&idx) {
            *s = values[i];
        }
        stats.push(statistic(&sample)?);
    }
    let (ci_low, ci_high) = config.bounds(stats);
    Ok(MetricSummary {
        point,
        ci_low,
        ci_high,
        n_runs: n,
        n_resamples: config.n_resamples,
    })
}

/// Bootstrap of `statistic(x) - statistic(y)` where `x[i]` and `y[i]` are
/// paired (same seed); pairs are resampled together.
pub fn paired_difference_ci<F>(
    x: &[f64],
    y: &[f64],
    statistic: F,
    config: &BootstrapConfig,
) -> Result<MetricSummary, EvalError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError>,
{
    if x.len() != y.len() {
        return Err(EvalError::Unpaired { x: x.len(), y: y.len() });
    }
    if x.len() < 2 {
        return Err(EvalError::TooFew { need: 2, got: x.len() });
    }
    let point = statistic(x)? - statistic(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = x.len();
    let mut idx = vec![0; n];
    let (mut sx, mut sy) = (vec![0.0; n], vec![0.0; n]);
    let mut stats = Vec::with_capacity(config.n_resamples);
    for _ in 0..config.n_resamples {
        resample_indices(n, &mut rng, &mut idx);
        for (k, &i) in idx.iter().enumerate() {
            sx[k] = x[i];
            sy[k] = y[i];
        }
        stats.push(statistic(&sx)? - statistic(&sy)?);
    }
    let (ci_low, ci_high) = config.bounds(stats);
    Ok(MetricSummary {
        point,
        ci_low,
        ci_high,
        n_runs: n,
        n_resamples: config.n_resamples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub variant_x: String,
    pub variant_y: String,
    pub poi: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Probability of improvement with a bootstrap interval; each side is
/// resampled independently (X first, then Y, from one stream).
pub fn poi_ci(
    variant_x: &str,
    gaps_x: &[f64],
    variant_y: &str,
    gaps_y: &[f64],
    config: &BootstrapConfig,
) -> Result<ComparisonResult, EvalError> {
    let poi = probability_of_improvement(gaps_x, gaps_y)?;
    let (ci_low, ci_high) = if gaps_x.len() < 2 || gaps_y.len() < 2 {
        (poi, poi)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (mut ix, mut iy) = (vec![0; gaps_x.len()], vec![0; gaps_y.len()]);
        let (mut sx, mut sy) = (vec![0.0; gaps_x.len()], vec![0.0; gaps_y.len()]);
        let mut stats = Vec::with_capacity(config.n_resamples);
        for _ in 0..config.n_resamples {
            resample_indices(gaps_x.len(), &mut rng, &mut ix);
            resample_indices(gaps_y.len(), &mut rng, &mut iy);
            ix.iter().zip(sx.iter_mut()).for_each(|(&i, s)| *s = gaps_x[i]);
            iy.iter().zip(sy.iter_mut()).for_each(|(&i, s)| *s = gaps_y[i]);
            stats.push(probability_of_improvement(&sx, &sy)?);
        }
        config.bounds(stats)
    };
    Ok(ComparisonResult {
        variant_x: variant_x.to_string(),
        variant_y: variant_y.to_string(),
        poi,
        ci_low,
        ci_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Replicate every value four times, drop a quarter from each end.
    fn iqm_reference(values: &[f64]) -> f64 {
        let mut rep: Vec<f64> = values.iter().flat_map(|&v| [v; 4]).collect();
        rep.sort_by(f64::total_cmp);
        let n = values.len();
        let kept = &rep[n..3 * n];
        kept.iter().sum::<f64>() / kept.len() as f64
    }

    #[test]
    fn iqm_anchors() {
        assert_eq!(iqm(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(iqm(&[0.7; 9]).unwrap(), 0.7);
        assert_eq!(iqm(&[5.0]).unwrap(), 5.0);
        assert_eq!(iqm(&[]), Err(EvalError::Empty));
        // n = 5: weights 0, 0.75, 1, 0.75, 0 over 2.5
        let v = [10.0, 1.0, 2.0, 3.0, -4.0];
        assert!((iqm(&v).unwrap() - (0.75 * 1.0 + 2.0 + 0.75 * 3.0) / 2.5).abs() < 1e-15);
    }

    #[test]
    fn gap_anchors() {
        assert_eq!(optimality_gap(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(optimality_gap(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(optimality_gap(&[0.0, 0.5, 1.0]).unwrap(), 0.5);
        assert_eq!(optimality_gap(&[1.3]).unwrap(), 0.0);
        assert_eq!(optimality_gap(&[-0.2]).unwrap(), 1.2);
    }

    #[test]
    fn poi_anchors() {
        assert_eq!(probability_of_improvement(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(probability_of_improvement(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 0.75);
        assert_eq!(probability_of_improvement(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap(), 0.5);
    }

    #[test]
    fn bootstrap_of_constant_is_degenerate() {
        let s = bootstrap_ci(&[0.25; 10], mean, &BootstrapConfig::with_seed(1)).unwrap();
        assert_eq!((s.point, s.ci_low, s.ci_high), (0.25, 0.25, 0.25));
        assert!(bootstrap_ci(&[1.0], mean, &BootstrapConfig::with_seed(1)).is_err());
    }

    #[test]
    fn bootstrap_is_seeded() {
        let v: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let c = BootstrapConfig::with_seed(9);
        assert_eq!(bootstrap_ci(&v, iqm, &c).unwrap(), bootstrap_ci(&v, iqm, &c).unwrap());
        let other = BootstrapConfig::with_seed(10);
        assert_ne!(bootstrap_ci(&v, iqm, &c).unwrap(), bootstrap_ci(&v, iqm, &other).unwrap());
    }

    #[test]
    fn mean_interval_contains_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..50 {
            let v: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = bootstrap_ci(&v, mean, &BootstrapConfig::with_seed(trial)).unwrap();
            assert!(s.ci_low <= s.point && s.point <= s.ci_high);
        }
    }

    #[test]
    fn paired_difference_of_shifted_data() {
        let x: Vec<f64> = (0..25).map(|i| i as f64 / 25.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        let d = paired_difference_ci(&x, &y, mean, &BootstrapConfig::with_seed(0)).unwrap();
        assert!((d.point + 0.1).abs() < 1e-12);
        assert!((d.ci_low + 0.1).abs() < 1e-12 && (d.ci_high + 0.1).abs() < 1e-12);
        assert!(paired_difference_ci(&x, &y[1..], mean, &BootstrapConfig::with_seed(0)).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_eq!(quantile_sorted(&v, 0.0), 0.0);
        assert_eq!(quantile_sorted(&v, 1.0), 3.0);
    }

    proptest! {
        #[test]
        fn iqm_matches_replication_oracle(v in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            prop_assert!((iqm(&v).unwrap() - iqm_reference(&v)).abs() < 1e-12);
        }

        #[test]
        fn iqm_bounded_and_permutation_invariant(
            v in prop::collection::vec(-10.0f64..10.0, 1..30),
            shift in 0usize..30,
        ) {
            let m = iqm(&v).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo - 1e-12 <= m && m <= hi + 1e-12);
            let mut r = v.clone();
            r.rotate_left(shift % v.len());
            r.reverse();
            prop_assert!((iqm(&r).unwrap() - m).abs() < 1e-12);
        }

        #[test]
        fn iqm_is_monotone(
            v in prop::collection::vec(-10.0f64..10.0, 1..30),
            i in 0usize..30,
            bump in 0.0f64..5.0,
        ) {
            let mut w = v.clone();
            let k = i % v.len();
            w[k] += bump;
            prop_assert!(iqm(&w).unwrap() >= iqm(&v).unwrap() - 1e-12);
        }

        #[test]
        fn poi_is_complementary(
            x in prop::collection::vec((0u8..6).prop_map(|k| k as f64 / 5.0), 1..15),
            y in prop::collection::vec((0u8..6).prop_map(|k| k as f64 / 5.0), 1..15),
        ) {
            let a = probability_of_improvement(&x, &y).unwrap();
            let b = probability_of_improvement(&y, &x).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn gap_in_unit_interval_for_nonnegative_scores(
            s in prop::collection::vec(0.0f64..2.0, 1..40),
        ) {
            let g = optimality_gap(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
        }
    }
}
