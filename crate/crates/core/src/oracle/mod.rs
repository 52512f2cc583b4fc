//! Exact output distributions of small instances and checks of ex-post
//! privacy guarantees against them.

mod exact;
pub mod quadrature;

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::outcome::{OrderedOutput, Selection};

pub use exact::{
    at_exact_distribution, generalized_at_exact_distribution, tuner_exact_distribution,
    AtTruncation, ExactDistribution,
};

/// Slack allowed on the total mass of a normalized pmf.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Probability mass function over a finite, sorted support.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf<T> {
    support: Vec<T>,
    probs: Vec<f64>,
}

pub type FinitePmf = Pmf<OrderedOutput>;

impl<T: Ord> Pmf<T> {
    /// Requires a strictly ascending support and masses summing to one.
    pub fn new(support: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        let pmf = Self::with_deficit(support, probs, 0.0)?;
        let total = pmf.total();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid("probs", format!("masses sum to {total}, not 1")));
        }
        Ok(pmf)
    }

    /// Like [`Pmf::new`], but the total may fall short of one by up to
    /// `deficit` (mass lost to truncation).
    pub fn with_deficit(support: Vec<T>, probs: Vec<f64>, deficit: f64) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(invalid("probs", "support and masses differ in length"));
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::UnsortedSupport);
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(invalid("probs", "masses must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        // quadrature rounding can push the total marginally above one
        if total > 1.0 + 1e-9 || total < 1.0 - deficit - 1e-9 {
            return Err(invalid(
                "probs",
                format!("masses sum to {total}, outside [1 - {deficit}, 1]"),
            ));
        }
        Ok(Self { support, probs })
    }

    /// Builds a pmf from unordered weights, merging duplicates and
    /// normalizing. Zero weights are kept in the support.
    pub fn from_weights(weights: impl IntoIterator<Item = (T, f64)>) -> Result<Self> {
        let mut merged = BTreeMap::new();
        for (t, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("weights", "must be finite and nonnegative"));
            }
            *merged.entry(t).or_insert(0.0) += w;
        }
        let total: f64 = merged.values().sum();
        if !(total > 0.0) {
            return Err(invalid("weights", "total weight must be positive"));
        }
        let (support, probs) = merged.into_iter().map(|(t, w)| (t, w / total)).unzip();
        Ok(Self { support, probs })
    }

    pub fn point_mass(value: T) -> Self {
        Self {
            support: vec![value],
            probs: vec![1.0],
        }
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> + '_ {
        self.support.iter().zip(self.probs.iter().copied())
    }

    /// Mass at `value`, zero off the support.
    pub fn prob(&self, value: &T) -> f64 {
        self.support
            .binary_search(value)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Mass strictly above `value`.
    pub fn mass_above(&self, value: &T) -> f64 {
        let start = self.support.partition_point(|t| t <= value);
        self.probs[start..].iter().sum()
    }

    /// Mass at or above `value`.
    pub fn mass_at_least(&self, value: &T) -> f64 {
        let start = self.support.partition_point(|t| t < value);
        self.probs[start..].iter().sum()
    }

    /// Inverse-CDF draw; any deficit falls on the largest support point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &T {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (t, p) in self.iter() {
            acc += p;
            if u < acc {
                return t;
            }
        }
        self.support.last().expect("nonempty pmf")
    }
}

fn check_same_support<T: Ord>(a: &Pmf<T>, b: &Pmf<T>) -> Result<()> {
    if a.support == b.support {
        Ok(())
    } else {
        Err(Error::SupportMismatch)
    }
}

/// `max_o A(o) - e^{eps(o)} A'(o)` minus `tail_bound`; the ex-post pure-DP
/// guarantee holds on this pair when the result is at most zero (up to
/// rounding).
pub fn verify_expost_dp<T: Ord>(
    a: &Pmf<T>,
    b: &Pmf<T>,
    budget: impl Fn(&T) -> f64,
    tail_bound: f64,
) -> Result<f64> {
    check_same_support(a, b)?;
    let worst = a
        .iter()
        .zip(b.probs.iter())
        .map(|((o, pa), pb)| pa - budget(o).exp() * pb)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(worst - tail_bound)
}

/// `sum_o A(o)^alpha / (e^{eps(o)} A'(o))^{alpha - 1}`; at most one when the
/// ex-post RDP guarantee holds. Infinite if `A'` misses mass of `A`.
pub fn verify_expost_rdp<T: Ord>(
    a: &Pmf<T>,
    b: &Pmf<T>,
    budget: impl Fn(&T) -> f64,
    alpha: f64,
) -> Result<f64> {
    check_same_support(a, b)?;
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(invalid(
            "alpha",
            format!("must be finite and > 1, got {alpha}"),
        ));
    }
    let mut sum = 0.0;
    for ((o, pa), pb) in a.iter().zip(b.probs.iter()) {
        if pa == 0.0 {
            continue;
        }
        if *pb == 0.0 {
            return Ok(f64::INFINITY);
        }
        // in logs, to survive tiny masses raised to large powers
        let log_term = alpha * pa.ln() - (alpha - 1.0) * (budget(o) + pb.ln());
        sum += log_term.exp();
    }
    Ok(sum)
}

/// `D_alpha(P || Q)` over the union of both supports, `+inf` when `Q` misses
/// mass of `P`.
pub fn renyi_divergence<T: Ord>(p: &Pmf<T>, q: &Pmf<T>, alpha: f64) -> f64 {
    assert!(alpha > 1.0, "order must exceed 1");
    let mut terms = Vec::new();
    for (o, pp) in p.iter() {
        if pp == 0.0 {
            continue;
        }
        let pq = q.prob(o);
        if pq == 0.0 {
            return f64::INFINITY;
        }
        terms.push(alpha * pp.ln() + (1.0 - alpha) * pq.ln());
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    let log_sum = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    (log_sum / (alpha - 1.0)).max(0.0)
}

/// Adapts an [`crate::accounting::ExPostBudget`] to the verifiers.
pub fn selection_budget(
    budget: &crate::accounting::ExPostBudget,
) -> impl Fn(&Selection) -> f64 + '_ {
    move |s| budget.charge(s).unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::StreamRng;

    fn ber(p: f64) -> Pmf<u8> {
        Pmf::new(vec![0, 1], vec![1.0 - p, p]).unwrap()
    }

    #[test]
    fn rejects_malformed_pmfs() {
        assert!(matches!(
            Pmf::new(vec![1, 0], vec![0.5, 0.5]),
            Err(Error::UnsortedSupport)
        ));
        assert!(matches!(
            Pmf::new(vec![0, 0], vec![0.5, 0.5]),
            Err(Error::UnsortedSupport)
        ));
        assert!(Pmf::new(vec![0, 1], vec![0.5, 0.4]).is_err());
        assert!(Pmf::new(vec![0, 1], vec![1.5, -0.5]).is_err());
        assert!(Pmf::with_deficit(vec![0, 1], vec![0.5, 0.4], 0.1).is_ok());
    }

    #[test]
    fn renyi_of_bernoullis() {
        let d = renyi_divergence(&ber(0.5), &ber(0.25), 2.0);
        assert!((d - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert_eq!(renyi_divergence(&ber(0.3), &ber(0.3), 4.0), 0.0);
        assert_eq!(
            renyi_divergence(&ber(0.3), &Pmf::point_mass(0), 2.0),
            f64::INFINITY
        );
        let mut last = 0.0;
        for a in [1.5, 2.0, 4.0, 8.0, 16.0, 64.0] {
            let d = renyi_divergence(&ber(0.7), &ber(0.2), a);
            assert!(d >= last - 1e-15);
            last = d;
        }
    }

    #[test]
    fn renyi_approaches_kl_near_one() {
        let (p, q) = (ber(0.6), ber(0.3));
        let kl = 0.6 * (0.6f64 / 0.3).ln() + 0.4 * (0.4f64 / 0.7).ln();
        let d = renyi_divergence(&p, &q, 1.0 + 1e-6);
        assert!((d - kl).abs() < 1e-5);
    }

    #[test]
    fn randomized_response_passes_and_undersized_budget_fails() {
        let eps: f64 = 0.8;
        let t = eps.exp() / (1.0 + eps.exp());
        let (a, b) = (ber(t), ber(1.0 - t));
        assert!(verify_expost_dp(&a, &b, |_| eps, 0.0).unwrap() <= 1e-12);
        assert!(verify_expost_dp(&a, &b, |_| eps / 2.0, 0.0).unwrap() > 0.05);
        assert_eq!(verify_expost_dp(&a, &a, |_| 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rdp_sum_at_divergence_budget() {
        let (p, q) = (ber(0.5), ber(0.25));
        assert!((verify_expost_rdp(&p, &p, |_| 0.0, 3.0).unwrap() - 1.0).abs() < 1e-15);
        let d = renyi_divergence(&p, &q, 2.0);
        assert!(verify_expost_rdp(&p, &q, |_| d, 2.0).unwrap() <= 1.0 + 1e-12);
        assert!(verify_expost_rdp(&p, &q, |_| d * 0.5, 2.0).unwrap() > 1.0);
        let r = Pmf::point_mass(0u8);
        let r = Pmf::new(vec![0, 1], vec![r.probs()[0], 0.0]).unwrap();
        assert_eq!(
            verify_expost_rdp(&p, &r, |_| 1.0, 2.0).unwrap(),
            f64::INFINITY
        );
        assert!(matches!(
            verify_expost_rdp(&p, &Pmf::point_mass(0), |_| 0.0, 2.0),
            Err(Error::SupportMismatch)
        ));
    }

    #[test]
    fn queries_and_sampling() {
        let p = Pmf::from_weights([(3, 1.0), (1, 2.0), (3, 1.0)]).unwrap();
        assert_eq!(p.support(), &[1, 3]);
        assert_eq!(p.prob(&3), 0.5);
        assert_eq!(p.prob(&2), 0.0);
        assert_eq!(p.mass_above(&1), 0.5);
        assert_eq!(p.mass_at_least(&1), 1.0);
        let mut rng = StreamRng::seeded(4);
        let ones = (0..20_000).filter(|_| *p.sample(&mut rng) == 1).count();
        assert!((ones as f64 / 20_000.0 - 0.5).abs() < 0.02);
    }
}
