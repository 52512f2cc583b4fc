//! Exact (truncated) outcome distributions of AboveThreshold, the
//! generalized AboveThreshold and the random-dropping tuner.

use crate::error::{invalid, Result};
use crate::noise::{geo_cdf_below, geo_pmf, GeometricParam};
use crate::outcome::{OrderedOutput, Selection};
use crate::random_drop::DropMode;

use super::quadrature::{geometric_k_max, NoiseMeasure, TAIL_TARGET};
use super::{FinitePmf, Pmf};

/// An outcome distribution whose mass may fall short of one by at most
/// `tail_bound`.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub pmf: Pmf<Selection>,
    pub tail_bound: f64,
}

impl ExactDistribution {
    fn build(entries: Vec<(Selection, f64)>, tail_bound: f64) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let (support, probs): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        // rounding in long sums can leave slightly negative zeros
        let probs = probs.into_iter().map(|p: f64| p.max(0.0)).collect();
        Ok(Self {
            pmf: Pmf::with_deficit(support, probs, tail_bound)?,
            tail_bound,
        })
    }

    pub fn bottom(&self) -> f64 {
        self.pmf.prob(&Selection::Bottom)
    }
}

fn check_inputs(pmfs: &[FinitePmf], eps: &[f64], eps_prime: f64) -> Result<()> {
    if pmfs.len() != eps.len() {
        return Err(invalid("eps", "need one budget per output distribution"));
    }
    if eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(invalid("eps", "budgets must be finite and nonnegative"));
    }
    if !(eps_prime > 0.0 && eps_prime.is_finite()) {
        return Err(invalid(
            "eps_prime",
            format!("must be positive, got {eps_prime}"),
        ));
    }
    Ok(())
}

fn noise_measure(mode: DropMode, eps: &[f64], eps_prime: f64) -> Result<NoiseMeasure> {
    match mode {
        DropMode::Geometric => NoiseMeasure::geometric(eps_prime, None),
        DropMode::Exponential => NoiseMeasure::exponential(eps_prime, eps.iter().sum()),
    }
}

/// `decay[n][j] = e^{-eps_j k_n}` for every measure point.
fn decay_table(measure: &NoiseMeasure, eps: &[f64]) -> Vec<Vec<f64>> {
    measure
        .points
        .iter()
        .map(|&(k, _)| eps.iter().map(|e| (-e * k).exp()).collect())
        .collect()
}

/// Outcome distribution of the tuner run on outputs `pmfs` (one per flat
/// instance, 1-based in the result) with drop noise of the given `mode`.
///
/// The mass of `(o, i)` is
/// `E_k[e^{-eps_i k} Q_i(o) prod_{j != i} (1 - e^{-eps_j k} Q_j(U_j))]`, where
/// `U_j` holds the outputs of instance `j` that would beat `(o, i)`.
pub fn tuner_exact_distribution(
    pmfs: &[FinitePmf],
    eps: &[f64],
    eps_prime: f64,
    mode: DropMode,
) -> Result<ExactDistribution> {
    check_inputs(pmfs, eps, eps_prime)?;
    let measure = noise_measure(mode, eps, eps_prime)?;
    let decay = decay_table(&measure, eps);

    let mut entries = Vec::new();
    for (i, q_i) in pmfs.iter().enumerate() {
        for (o, q) in q_i.iter() {
            let beats: Vec<f64> = pmfs
                .iter()
                .enumerate()
                .map(|(j, q_j)| {
                    let above = q_j.mass_above(o);
                    if j > i {
                        above + q_j.prob(o)
                    } else {
                        above
                    }
                })
                .collect();
            let mass = if q == 0.0 {
                0.0
            } else {
                measure
                    .points
                    .iter()
                    .zip(&decay)
                    .map(|(&(_, w), d)| {
                        let others: f64 = (0..pmfs.len())
                            .filter(|&j| j != i)
                            .map(|j| 1.0 - d[j] * beats[j])
                            .product();
                        w * d[i] * q * others
                    })
                    .sum()
            };
            entries.push((Selection::selected(o.clone(), i + 1), mass));
        }
    }
    let bottom = measure
        .points
        .iter()
        .zip(&decay)
        .map(|(&(_, w), d)| w * d.iter().map(|x| 1.0 - x).product::<f64>())
        .sum();
    entries.push((Selection::Bottom, bottom));
    ExactDistribution::build(entries, measure.tail_bound)
}

/// Outcome distribution of the generalized AboveThreshold: geometric drop
/// noise, first kept output at or above `threshold`.
pub fn generalized_at_exact_distribution(
    pmfs: &[FinitePmf],
    eps: &[f64],
    eps_prime: f64,
    threshold: &OrderedOutput,
) -> Result<ExactDistribution> {
    check_inputs(pmfs, eps, eps_prime)?;
    let measure = NoiseMeasure::geometric(eps_prime, None)?;
    let decay = decay_table(&measure, eps);
    let passing: Vec<f64> = pmfs.iter().map(|q| q.mass_at_least(threshold)).collect();

    let mut entries = Vec::new();
    for (i, q_i) in pmfs.iter().enumerate() {
        let reach: Vec<f64> = measure
            .points
            .iter()
            .zip(&decay)
            .map(|(&(_, w), d)| w * d[i] * (0..i).map(|j| 1.0 - d[j] * passing[j]).product::<f64>())
            .collect();
        let reach: f64 = reach.iter().sum();
        for (o, q) in q_i.iter().filter(|(o, _)| *o >= threshold) {
            entries.push((Selection::selected(o.clone(), i + 1), reach * q));
        }
    }
    let bottom = measure
        .points
        .iter()
        .zip(&decay)
        .map(|(&(_, w), d)| {
            w * (0..pmfs.len())
                .map(|j| 1.0 - d[j] * passing[j])
                .product::<f64>()
        })
        .sum();
    entries.push((Selection::Bottom, bottom));
    ExactDistribution::build(entries, measure.tail_bound)
}

/// Truncation of the AboveThreshold double sum: threshold noise up to
/// `k_max`, and released values of index `i` restricted to `windows[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtTruncation {
    pub k_max: u64,
    pub windows: Vec<(i64, i64)>,
}

impl AtTruncation {
    /// One truncation valid for every query-value vector in `value_sets`, so
    /// neighboring datasets share a support.
    pub fn covering(value_sets: &[&[i64]], eps: &[f64], eps_prime: f64) -> Self {
        let k_max = geometric_k_max(eps_prime);
        let windows = eps
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let y_max = (-TAIL_TARGET.ln() / e).ceil() as i64;
                let lo = value_sets
                    .iter()
                    .map(|v| (v[i] - k_max as i64).max(0))
                    .min()
                    .unwrap_or(0);
                let hi = value_sets
                    .iter()
                    .map(|v| (v[i] + y_max).max(0))
                    .max()
                    .unwrap_or(0);
                (lo, hi)
            })
            .collect();
        Self { k_max, windows }
    }
}

/// Outcome distribution of AboveThreshold on query values `values`.
///
/// The tail bound covers threshold noise above `k_max` and released values
/// above each window.
pub fn at_exact_distribution(
    values: &[i64],
    eps: &[f64],
    eps_prime: f64,
    truncation: &AtTruncation,
) -> Result<ExactDistribution> {
    if values.len() != eps.len() || truncation.windows.len() != eps.len() {
        return Err(invalid("eps", "need one budget and window per query"));
    }
    let p_k = GeometricParam::from_epsilon(eps_prime)?;
    let p_y = eps
        .iter()
        .map(|&e| GeometricParam::from_epsilon(e))
        .collect::<Result<Vec<_>>>()?;

    let mut mass: Vec<Vec<f64>> = truncation
        .windows
        .iter()
        .map(|&(lo, hi)| vec![0.0; (hi - lo + 1).max(0) as usize])
        .collect();
    let mut bottom = 0.0;
    for k in 0..=truncation.k_max as i64 {
        let w = geo_pmf(p_k, k);
        if w == 0.0 {
            break;
        }
        // probability that queries before i all stay below the threshold
        let mut reach = w;
        for (i, &f) in values.iter().enumerate() {
            let (lo, _) = truncation.windows[i];
            for (slot, m) in mass[i].iter_mut().enumerate() {
                let o = lo + slot as i64;
                *m += reach * geo_pmf(p_y[i], o + k - f);
            }
            reach *= geo_cdf_below(p_y[i], k - f);
            if reach == 0.0 {
                break;
            }
        }
        bottom += reach;
    }

    let mut tail_bound = (-eps_prime * (truncation.k_max as f64 + 1.0)).exp();
    for (i, &f) in values.iter().enumerate() {
        let (_, hi) = truncation.windows[i];
        let gap = (hi - f + 1).max(0);
        tail_bound += (gap as f64 * p_y[i].p().ln()).exp();
    }

    let mut entries = vec![(Selection::Bottom, bottom)];
    for (i, row) in mass.into_iter().enumerate() {
        let (lo, _) = truncation.windows[i];
        for (slot, m) in row.into_iter().enumerate() {
            let o = OrderedOutput::scalar((lo + slot as i64) as f64);
            entries.push((Selection::selected(o, i + 1), m));
        }
    }
    ExactDistribution::build(entries, tail_bound.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcome::compare_outcomes;
    use crate::outcome::Outcome;

    fn scalar_pmf(pairs: &[(f64, f64)]) -> FinitePmf {
        Pmf::from_weights(pairs.iter().map(|&(v, p)| (OrderedOutput::scalar(v), p))).unwrap()
    }

    #[test]
    fn zero_budget_is_never_dropped() {
        let q = scalar_pmf(&[(0.0, 0.2), (1.0, 0.5), (2.0, 0.3)]);
        for mode in [DropMode::Geometric, DropMode::Exponential] {
            let d = tuner_exact_distribution(std::slice::from_ref(&q), &[0.0], 0.5, mode).unwrap();
            assert!(d.bottom().abs() < 1e-12);
            for (o, p) in q.iter() {
                let got = d.pmf.prob(&Selection::selected(o.clone(), 1));
                assert!((got - p).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn point_mass_keep_rate_is_a_geometric_series() {
        let q = FinitePmf::point_mass(OrderedOutput::scalar(1.0));
        let d = tuner_exact_distribution(&[q], &[0.1], 0.01, DropMode::Geometric).unwrap();
        let sel = d
            .pmf
            .prob(&Selection::selected(OrderedOutput::scalar(1.0), 1));
        assert!((sel - 0.0955223).abs() < 1e-7);
        assert!((d.bottom() - 0.9044777).abs() < 1e-7);
        assert!(d.tail_bound < 1e-12);
    }

    #[test]
    fn identical_instances_are_swapped_by_the_tie_break() {
        let q = scalar_pmf(&[(0.0, 0.5), (1.0, 0.5)]);
        let d = tuner_exact_distribution(&[q.clone(), q], &[0.2, 0.2], 0.1, DropMode::Geometric)
            .unwrap();
        let at = |v: f64, i: usize| {
            d.pmf
                .prob(&Selection::selected(OrderedOutput::scalar(v), i))
        };
        // index 2 wins ties, so it is selected more often at every value
        assert!(at(1.0, 2) > at(1.0, 1));
        assert!(at(0.0, 2) > at(0.0, 1));
        // with a tie at value v, index 1 wins only if index 2 is dropped or
        // strictly lower, index 2 only needs index 1 not strictly higher
        let total: f64 = d.pmf.total();
        assert!((total - 1.0).abs() < 1e-11);
    }

    #[test]
    fn beat_sets_follow_the_outcome_order() {
        let outs = [0.0, 1.0];
        for (o, i) in outs.iter().flat_map(|&o| [(o, 1), (o, 2)]) {
            let reference = Outcome {
                selection: Selection::selected(OrderedOutput::scalar(o), i),
                trace: None,
            };
            for (o2, j) in outs.iter().flat_map(|&o| [(o, 1usize), (o, 2usize)]) {
                let other = Outcome {
                    selection: Selection::selected(OrderedOutput::scalar(o2), j),
                    trace: None,
                };
                let beats = o2 > o || (o2 == o && j > i);
                assert_eq!(compare_outcomes(&other, &reference).is_gt(), beats);
            }
        }
    }

    #[test]
    fn at_extremes() {
        let t = AtTruncation::covering(&[&[-1_000_000]], &[1.0], 1.0);
        let d = at_exact_distribution(&[-1_000_000], &[1.0], 1.0, &t).unwrap();
        assert!(d.bottom() >= 1.0 - 1e-9);
        let t = AtTruncation::covering(&[&[1_000_000_000]], &[1.0], 1.0);
        let d = at_exact_distribution(&[1_000_000_000], &[1.0], 1.0, &t).unwrap();
        assert!(1.0 - d.bottom() >= 1.0 - 1e-9);
    }

    #[test]
    fn generalized_at_with_unreachable_threshold_is_bottom() {
        let q = scalar_pmf(&[(0.0, 1.0)]);
        let d = generalized_at_exact_distribution(&[q], &[0.3], 0.1, &OrderedOutput::scalar(5.0))
            .unwrap();
        assert!((d.bottom() - 1.0).abs() < 1e-12);
    }
}
