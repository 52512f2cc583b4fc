//! AboveThreshold with per-query budgets and ex-post accounting.
//!
//! A shared threshold noise `k ~ Geo(e^{-eps'})` is drawn once; query `i`
//! gets noise `y_i ~ Geo(e^{-eps_i})` and the first query with
//! `f_i(D) + y_i >= k` is released together with the estimate
//! `f_i(D) + y_i - k`. The threshold is fixed at zero; shift queries to test
//! against another threshold.

use rand::Rng;

use crate::accounting::{BudgetKind, ExPostBudget};
use crate::error::{invalid, Result};
use crate::histogram::{Histogram, Query};
use crate::noise::{sample_geometric, GeometricParam};
use crate::outcome::{OrderedOutput, Outcome, RandomnessTrace, Selection, ThresholdNoise};

#[derive(Debug, Clone)]
pub struct AtConfig {
    queries: Vec<(Query, f64)>,
    eps_prime: f64,
    all_monotone: bool,
}

impl AtConfig {
    /// `all_monotone` enables the `eps_i + eps'` charge and is only accepted
    /// when every query is declared monotone.
    pub fn new(queries: Vec<(Query, f64)>, eps_prime: f64, all_monotone: bool) -> Result<Self> {
        if !(eps_prime > 0.0 && eps_prime.is_finite()) {
            return Err(invalid(
                "eps_prime",
                format!("must be positive, got {eps_prime}"),
            ));
        }
        if let Some((q, e)) = queries.iter().find(|(_, e)| !(*e > 0.0 && e.is_finite())) {
            return Err(invalid(
                "eps_i",
                format!("query `{}` has non-positive budget {e}", q.label()),
            ));
        }
        if all_monotone && !queries.iter().all(|(q, _)| q.is_monotone()) {
            return Err(invalid(
                "all_monotone",
                "every query must be declared monotone",
            ));
        }
        Ok(Self {
            queries,
            eps_prime,
            all_monotone,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn eps(&self) -> Vec<f64> {
        self.queries.iter().map(|(_, e)| *e).collect()
    }

    pub fn eps_prime(&self) -> f64 {
        self.eps_prime
    }

    pub fn all_monotone(&self) -> bool {
        self.all_monotone
    }

    /// `2 eps_i + eps'` per index (`eps_i + eps'` when monotone), `eps'` for `⊥`.
    pub fn budget(&self) -> ExPostBudget {
        let factor = if self.all_monotone { 1.0 } else { 2.0 };
        let per_index = self
            .queries
            .iter()
            .map(|(_, e)| factor * e + self.eps_prime)
            .collect();
        ExPostBudget::new(per_index, self.eps_prime, BudgetKind::PureDp)
            .expect("validated budgets are finite")
    }
}

/// Runs the mechanism on `data` and returns the outcome with its realized
/// ex-post charge.
pub fn run_above_threshold<R: Rng + ?Sized>(
    cfg: &AtConfig,
    data: &Histogram,
    rng: &mut R,
) -> (Outcome, f64) {
    let eps = cfg.eps();
    let outcome = run_on_values(&eps, cfg.eps_prime, |i| cfg.queries[i].0.eval(data), rng)
        .expect("validated config");
    let charge = cfg
        .budget()
        .charge(&outcome.selection)
        .expect("index within config");
    (outcome, charge)
}

/// Core loop on lazily evaluated query values `value(i)` (0-based).
pub fn run_on_values<R: Rng + ?Sized>(
    eps: &[f64],
    eps_prime: f64,
    mut value: impl FnMut(usize) -> i64,
    rng: &mut R,
) -> Result<Outcome> {
    let k = sample_geometric(GeometricParam::from_epsilon(eps_prime)?, rng);
    let mut query_noise = Vec::new();
    for (i, &e) in eps.iter().enumerate() {
        let y = sample_geometric(GeometricParam::from_epsilon(e)?, rng);
        query_noise.push(y);
        let noisy = value(i) as i128 + y as i128;
        if noisy >= k as i128 {
            let released = (noisy - k as i128) as f64;
            return Ok(Outcome {
                selection: Selection::selected(OrderedOutput::scalar(released), i + 1),
                trace: Some(RandomnessTrace {
                    k: ThresholdNoise::Discrete(k),
                    kept: Vec::new(),
                    query_noise,
                }),
            });
        }
    }
    Ok(Outcome::bottom(Some(RandomnessTrace {
        k: ThresholdNoise::Discrete(k),
        kept: Vec::new(),
        query_noise,
    })))
}
