//! Per-thread unique-count estimation under a global privacy budget.
//!
//! Every trial walks the threads of the dataset in order and tries to
//! release one accurate noisy count per thread until the budget runs out.
//! The doubling baseline pays for every attempt by composition; the tuners
//! select among candidate budgets with one random-dropping run and pay
//! only the realized charge.

use std::sync::Arc;

use expost_core::accounting::{approx_dp_epsilon, gaussian_rdp, Admission, PureLedger};
use expost_core::filter::FilterState;
use expost_core::noise::{sample_gaussian, sample_laplace, StreamRng};
use expost_core::random_drop::{run_tuner, run_tuner_rdp, DropMode, TunerConfig};
use expost_core::{Guarantee, Histogram, MechanismSpec, OrderedOutput, Selection};
use rand::RngCore;
use rayon::prelude::*;

use crate::config::{Algorithm, DatasetSource, ExperimentConfig, TotalBudget};
use crate::data::load_dataset;
use crate::error::{BenchError, Result};

/// The accuracy heuristic: `|ŷ| >= σ` and `|(ŷ + σ) / (ŷ - σ)|` within
/// `[0.9, 1.1]`.
pub fn goodness_check(estimate: f64, sigma: f64) -> bool {
    if estimate.abs() < sigma {
        return false;
    }
    let ratio = ((estimate + sigma) / (estimate - sigma)).abs();
    (0.9..=1.1).contains(&ratio)
}

/// Whether an estimate is within 10% of the true count.
pub fn is_accurate(estimate: f64, truth: u64) -> bool {
    (estimate - truth as f64).abs() < 0.1 * truth as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialResult {
    pub answers: usize,
    pub accurate: usize,
    pub consumed: f64,
    /// Mechanism executions (doubling) or tuner runs.
    pub runs: usize,
}

impl TrialResult {
    pub fn precision(&self) -> Option<f64> {
        (self.answers > 0).then(|| self.accurate as f64 / self.answers as f64)
    }

    fn record_answer(&mut self, estimate: f64, truth: u64) {
        self.answers += 1;
        self.accurate += usize::from(is_accurate(estimate, truth));
    }
}

/// Composition baseline: per thread, try ascending budgets with fresh
/// Laplace noise, paying each attempt, until an estimate looks good.
pub fn run_doubling<R: RngCore>(
    cfg: &ExperimentConfig,
    data: &Histogram,
    rng: &mut R,
) -> TrialResult {
    let schedule = cfg.schedule.values();
    let mut ledger = PureLedger::new(cfg.total_budget.epsilon());
    let mut result = TrialResult::default();
    for (_, count) in data.iter() {
        for &eps in &schedule {
            if ledger.admit(eps) == Admission::Deny {
                result.consumed = ledger.consumed();
                return result;
            }
            ledger.record(eps);
            result.runs += 1;
            let scale = 1.0 / eps;
            let estimate = count as f64 + sample_laplace(scale, rng);
            if goodness_check(estimate, scale) {
                result.record_answer(estimate, count);
                break;
            }
        }
    }
    result.consumed = ledger.consumed();
    result
}

/// Candidate output: `(passes, -eps, estimate)`, so the maximum prefers a
/// passing estimate at the smallest budget.
fn candidate_output(passes: bool, eps: f64, estimate: f64) -> OrderedOutput {
    OrderedOutput::tuple(&[f64::from(u8::from(passes)), -eps, estimate])
}

fn laplace_candidate(key: Arc<str>, eps: f64) -> MechanismSpec {
    let guarantee = Guarantee::pure(eps).expect("schedule budgets are positive");
    MechanismSpec::new(format!("laplace@{eps}"), guarantee, move |data, rng| {
        let scale = 1.0 / eps;
        let estimate = data.count(&key) as f64 + sample_laplace(scale, rng);
        candidate_output(goodness_check(estimate, scale), eps, estimate)
    })
}

fn gaussian_candidate(key: Arc<str>, eps: f64, alpha: f64) -> MechanismSpec {
    let sigma = 1.0 / eps;
    let guarantee = Guarantee::rdp(alpha, gaussian_rdp(sigma, 1.0, alpha)).expect("valid order");
    MechanismSpec::new(format!("gaussian@{eps}"), guarantee, move |data, rng| {
        let estimate = data.count(&key) as f64 + sample_gaussian(sigma, rng);
        candidate_output(goodness_check(estimate, sigma), eps, estimate)
    })
}

/// The passing estimate of a tuner outcome, if any.
fn passing_estimate(selection: &Selection) -> Option<f64> {
    let values = selection.value()?.values();
    (values[0] == 1.0).then(|| values[2])
}

/// Laplace tuner: per thread, rerun the tuner over every schedule budget
/// whose worst-case charge still fits until it releases a passing estimate.
pub fn run_tuner_laplace<R: RngCore>(
    cfg: &ExperimentConfig,
    data: &Histogram,
    rng: &mut R,
) -> Result<TrialResult> {
    let schedule = cfg.schedule.values();
    let mut ledger = PureLedger::new(cfg.total_budget.epsilon());
    let mut result = TrialResult::default();
    'threads: for (key, count) in data.iter() {
        let key: Arc<str> = Arc::from(key);
        loop {
            let mechanisms: Vec<_> = schedule
                .iter()
                .rev()
                .filter(|&&e| ledger.admit(2.0 * e + cfg.eps_prime) == Admission::Allow)
                .map(|&e| laplace_candidate(key.clone(), e))
                .collect();
            if mechanisms.is_empty() {
                break 'threads;
            }
            let tuner = TunerConfig::new(mechanisms, cfg.eps_prime, DropMode::Geometric)?;
            let (outcome, charge) = run_tuner(&tuner, data, rng)?;
            ledger.record(charge);
            result.runs += 1;
            if let Some(estimate) = passing_estimate(&outcome.selection) {
                result.record_answer(estimate, count);
                break;
            }
        }
    }
    result.consumed = ledger.consumed();
    Ok(result)
}

/// Worst-case charge and `ell` of one Gaussian tuner run whose candidates
/// are the schedule budgets in `lo..=hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub lo: usize,
    pub hi: usize,
    /// One `ell` per candidate, in candidate (decreasing budget) order.
    pub ell: Vec<f64>,
    /// Largest ex-post RDP charge over all outcomes.
    pub worst: f64,
}

/// Gaussian tuner runs composed by one RDP filter at a fixed order; the
/// filter capacity leaves room for a single conversion to `(eps, delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPlan {
    pub alpha: f64,
    pub capacity: f64,
    pub delta: f64,
    /// Indexed by the largest candidate's schedule position.
    pub entries: Vec<PlanEntry>,
}

impl GaussianPlan {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let TotalBudget::Approx { epsilon, delta } = cfg.total_budget else {
            return Err(BenchError::Config(
                "the Gaussian tuner needs an approx budget".into(),
            ));
        };
        let alpha = cfg.rdp_order;
        let capacity = epsilon - approx_dp_epsilon(0.0, alpha, delta)?;
        if capacity < 0.0 {
            return Err(BenchError::Config(format!(
                "total epsilon {epsilon} cannot cover the conversion at order {alpha}"
            )));
        }
        let schedule = cfg.schedule.values();
        let key: Arc<str> = Arc::from("");
        let entries = (0..schedule.len())
            .map(|hi| {
                let lo = (hi + 1).saturating_sub(cfg.window);
                let tuner = gaussian_tuner(&schedule[lo..=hi], &key, alpha, cfg.eps_prime)?;
                let ell = tuner.optimal_ell(alpha)?;
                let worst = tuner.rdp_budget(alpha, &ell)?.sup();
                Ok(PlanEntry { lo, hi, ell, worst })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            alpha,
            capacity,
            delta,
            entries,
        })
    }

    /// The admitted window with the largest top budget.
    fn largest_fitting(&self, filter: &FilterState) -> Option<&PlanEntry> {
        self.entries
            .iter()
            .rev()
            .find(|e| filter.admit(e.worst) == Admission::Allow)
    }
}

fn gaussian_tuner(
    budgets: &[f64],
    key: &Arc<str>,
    alpha: f64,
    eps_prime: f64,
) -> Result<TunerConfig> {
    let mechanisms = budgets
        .iter()
        .rev()
        .map(|&e| gaussian_candidate(key.clone(), e, alpha))
        .collect();
    Ok(TunerConfig::new(
        mechanisms,
        eps_prime,
        DropMode::Exponential,
    )?)
}

/// Gaussian tuner: per thread, rerun the tuner over the window of largest
/// admitted budgets until it releases a passing estimate. `consumed`
/// reports the converted approximate-DP epsilon.
pub fn run_tuner_gaussian<R: RngCore>(
    cfg: &ExperimentConfig,
    plan: &GaussianPlan,
    data: &Histogram,
    rng: &mut R,
) -> Result<TrialResult> {
    let schedule = cfg.schedule.values();
    let mut filter = FilterState::new(plan.alpha, plan.capacity, usize::MAX)?;
    let mut result = TrialResult::default();
    'threads: for (key, count) in data.iter() {
        let key: Arc<str> = Arc::from(key);
        loop {
            let Some(entry) = plan.largest_fitting(&filter) else {
                break 'threads;
            };
            let tuner = gaussian_tuner(
                &schedule[entry.lo..=entry.hi],
                &key,
                plan.alpha,
                cfg.eps_prime,
            )?;
            let (outcome, charge) = run_tuner_rdp(&tuner, &entry.ell, plan.alpha, data, rng)?;
            filter.record(charge);
            result.runs += 1;
            if let Some(estimate) = passing_estimate(&outcome.selection) {
                result.record_answer(estimate, count);
                break;
            }
        }
    }
    result.consumed = approx_dp_epsilon(filter.consumed(), plan.alpha, plan.delta)?;
    Ok(result)
}

/// Runs every trial of `cfg` in parallel. `stream` separates the random
/// streams of different experiments sharing a seed.
pub fn run_experiment(cfg: &ExperimentConfig, stream: u64) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let plan = match cfg.algorithm {
        Algorithm::TunerGaussian => Some(GaussianPlan::new(cfg)?),
        _ => None,
    };
    let fixed = match cfg.dataset {
        DatasetSource::Synthetic { seed: None, .. } => None,
        _ => Some(load_dataset(&cfg.dataset, 0)?),
    };
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = StreamRng::for_trial(cfg.seed, stream, trial);
            let data = match &fixed {
                Some(d) => d.clone(),
                None => load_dataset(&cfg.dataset, rng.next_u64())?,
            };
            match cfg.algorithm {
                Algorithm::Doubling => Ok(run_doubling(cfg, &data, &mut rng)),
                Algorithm::TunerLaplace => run_tuner_laplace(cfg, &data, &mut rng),
                Algorithm::TunerGaussian => {
                    run_tuner_gaussian(cfg, plan.as_ref().expect("plan built"), &data, &mut rng)
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Schedule, TotalBudget};

    fn config(algorithm: Algorithm, budget: TotalBudget) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Synthetic {
                n: 8000,
                support: 300,
                exponent: -0.75,
                seed: None,
            },
            schedule: Schedule::default(),
            total_budget: budget,
            eps_prime: 0.001,
            trials: 4,
            algorithm,
            seed: 7,
            rdp_order: 8.0,
            window: 4,
        }
    }

    #[test]
    fn goodness_examples() {
        assert!(goodness_check(100.0, 4.0));
        assert!(!goodness_check(100.0, 6.0));
        assert!(!goodness_check(3.0, 4.0));
        assert!(!goodness_check(4.0, 4.0));
        assert!(goodness_check(-100.0, 4.0));
    }

    #[test]
    fn zero_budget_answers_nothing() {
        let cfg = config(Algorithm::Doubling, TotalBudget::Pure { epsilon: 0.0 });
        let data = Histogram::from_counts(&[10_000, 5]);
        let mut rng = StreamRng::seeded(1);
        let r = run_doubling(&cfg, &data, &mut rng);
        assert_eq!(r, TrialResult::default());
        let cfg = config(Algorithm::TunerLaplace, TotalBudget::Pure { epsilon: 0.0 });
        assert_eq!(run_tuner_laplace(&cfg, &data, &mut rng).unwrap().answers, 0);
    }

    #[test]
    fn huge_count_passes_at_the_smallest_budget() {
        // scale 1000: failing needs |noise| > ~0.05 * 10^8
        let cfg = config(Algorithm::Doubling, TotalBudget::Pure { epsilon: 10.0 });
        let data = Histogram::from_counts(&[100_000_000]);
        let mut rng = StreamRng::seeded(2);
        for _ in 0..200 {
            let r = run_doubling(&cfg, &data, &mut rng);
            assert_eq!((r.answers, r.accurate, r.runs), (1, 1, 1));
            assert!((r.consumed - 0.001).abs() < 1e-15);
        }
    }

    #[test]
    fn candidates_prefer_passing_then_smallest_budget() {
        let a = Selection::selected(candidate_output(true, 0.5, 10.0), 1);
        let b = Selection::selected(candidate_output(true, 0.1, 10.0), 2);
        let c = Selection::selected(candidate_output(false, 0.01, 10.0), 3);
        assert!(b > a && a > c && c > Selection::Bottom);
        assert_eq!(passing_estimate(&b), Some(10.0));
        assert_eq!(passing_estimate(&c), None);
        assert_eq!(passing_estimate(&Selection::Bottom), None);
    }

    #[test]
    fn ledgers_stay_within_capacity() {
        for (alg, budget) in [
            (Algorithm::Doubling, TotalBudget::Pure { epsilon: 10.0 }),
            (Algorithm::TunerLaplace, TotalBudget::Pure { epsilon: 10.0 }),
            (
                Algorithm::TunerGaussian,
                TotalBudget::Approx {
                    epsilon: 10.0,
                    delta: 1e-6,
                },
            ),
        ] {
            let cfg = config(alg, budget);
            for r in run_experiment(&cfg, 0).unwrap() {
                assert!(r.consumed <= 10.0 + 1e-9, "{alg:?}: {}", r.consumed);
                assert!(r.accurate <= r.answers);
            }
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = config(Algorithm::TunerLaplace, TotalBudget::Pure { epsilon: 10.0 });
        assert_eq!(
            run_experiment(&cfg, 3).unwrap(),
            run_experiment(&cfg, 3).unwrap()
        );
    }

    #[test]
    fn gaussian_plan_is_valid() {
        let cfg = config(
            Algorithm::TunerGaussian,
            TotalBudget::Approx {
                epsilon: 10.0,
                delta: 1e-6,
            },
        );
        let plan = GaussianPlan::new(&cfg).unwrap();
        assert_eq!(plan.entries.len(), 31);
        assert!((plan.capacity - (10.0 - 1e6f64.ln() / 7.0)).abs() < 1e-12);
        for (hi, e) in plan.entries.iter().enumerate() {
            assert_eq!((e.hi, e.lo), (hi, hi.saturating_sub(3)));
            assert_eq!(e.ell.len(), hi - e.lo + 1);
            assert!(e.worst > 0.0);
        }
        let tight = ExperimentConfig {
            total_budget: TotalBudget::Approx {
                epsilon: 1.0,
                delta: 1e-6,
            },
            ..cfg
        };
        assert!(GaussianPlan::new(&tight).is_err());
    }
}
