//! Randomized exact checks of the ex-post guarantees on small instances.

use expost_core::above_threshold::AtConfig;
use expost_core::accounting::{
    expected_invocations, expost_rdp_budget, optimize_ell, repetitions_for_utility, BudgetKind,
    ExPostBudget,
};
use expost_core::filter::{exact_transcript_distribution, run_game, Adversary, AdversaryQuery};
use expost_core::mechanism::{Guarantee, MechanismSpec};
use expost_core::noise::StreamRng;
use expost_core::oracle::{
    at_exact_distribution, generalized_at_exact_distribution, renyi_divergence, selection_budget,
    tuner_exact_distribution, verify_expost_dp, verify_expost_rdp, AtTruncation, ExactDistribution,
    FinitePmf, Pmf,
};
use expost_core::random_drop::{run_tuner, DropMode, TunerConfig};
use expost_core::{Histogram, OrderedOutput, Query};
use rand::Rng;

use crate::error::Result;

/// Slack on exact pure-DP checks, beyond certified tail bounds.
pub const PURE_TOLERANCE: f64 = 1e-9;
/// Slack on ex-post RDP sums computed by quadrature.
pub const RDP_TOLERANCE: f64 = 1e-6;
/// Slack on transcript divergences.
pub const FILTER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub instances: usize,
    /// Largest margin over the pass limit seen (negative when all pass).
    pub worst_margin: f64,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            instances: 0,
            worst_margin: f64::NEG_INFINITY,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, label: String, margin: f64) {
        self.worst_margin = self.worst_margin.max(margin);
        if !(margin <= 0.0) {
            self.failures.push(format!("{label}: margin {margin:e}"));
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.instances > 0
    }
}

/// A pmf on at most four values drawn from `0..=3`.
fn random_pmf<R: Rng>(rng: &mut R) -> FinitePmf {
    let size = rng.gen_range(1..=4);
    let mut values: Vec<u8> = (0..4).collect();
    for i in 0..size {
        let j = rng.gen_range(i..4);
        values.swap(i, j);
    }
    Pmf::from_weights(values[..size].iter().map(|&v| {
        (
            OrderedOutput::scalar(f64::from(v)),
            rng.gen_range(0.05..1.0),
        )
    }))
    .expect("positive weights")
}

/// `Q'(o) ∝ Q(o) e^{±eps / 2}` with random signs: eps-DP with respect to
/// `Q`, and near the limit when the signs are mixed.
fn tilted<R: Rng>(q: &FinitePmf, eps: f64, rng: &mut R) -> FinitePmf {
    Pmf::from_weights(q.iter().map(|(o, p)| {
        (
            o.clone(),
            p * (if rng.gen_bool(0.5) { eps } else { -eps } / 2.0).exp(),
        )
    }))
    .expect("positive weights")
}

fn check_both_ways(
    report: &mut SuiteReport,
    label: &str,
    a: &ExactDistribution,
    b: &ExactDistribution,
    budget: &ExPostBudget,
) -> Result<()> {
    let tail = a.tail_bound + b.tail_bound;
    for (dir, (x, y)) in [("D->D'", (a, b)), ("D'->D", (b, a))] {
        let v = verify_expost_dp(&x.pmf, &y.pmf, selection_budget(budget), tail)?;
        report.record(format!("{label} {dir}"), v - PURE_TOLERANCE);
    }
    Ok(())
}

fn at_budget(eps: &[f64], eps_prime: f64, monotone: bool) -> Result<ExPostBudget> {
    let queries = eps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let q = if monotone {
                Query::monotone(format!("q{i}"), |_| 0)
            } else {
                Query::sensitivity_one(format!("q{i}"), |_| 0)
            };
            (q, e)
        })
        .collect();
    Ok(AtConfig::new(queries, eps_prime, monotone)?.budget())
}

/// Exact pure-DP checks of AboveThreshold (general and monotone), the
/// generalized AboveThreshold and the pure tuner on `instances` random
/// neighboring pairs.
pub fn pure_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("pure");
    for n in 0..instances {
        let mut rng = StreamRng::for_trial(seed, 1, n as u64);
        let d = rng.gen_range(1..=3);
        let eps: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..=1.0)).collect();
        let eps_prime = rng.gen_range(0.05..=1.0);
        match n % 4 {
            kind @ (0 | 1) => {
                let monotone = kind == 1;
                let f: Vec<i64> = (0..d).map(|_| rng.gen_range(-3..=3)).collect();
                let g: Vec<i64> = f
                    .iter()
                    .map(|v| {
                        v + if monotone {
                            rng.gen_range(0..=1)
                        } else {
                            rng.gen_range(-1..=1)
                        }
                    })
                    .collect();
                let t = AtTruncation::covering(&[&f, &g], &eps, eps_prime);
                let a = at_exact_distribution(&f, &eps, eps_prime, &t)?;
                let b = at_exact_distribution(&g, &eps, eps_prime, &t)?;
                let budget = at_budget(&eps, eps_prime, monotone)?;
                let label = format!("#{n} above-threshold monotone={monotone} f={f:?} g={g:?}");
                check_both_ways(&mut report, &label, &a, &b, &budget)?;
            }
            kind => {
                let q: Vec<FinitePmf> = (0..d).map(|_| random_pmf(&mut rng)).collect();
                let q2: Vec<FinitePmf> = q
                    .iter()
                    .zip(&eps)
                    .map(|(p, &e)| tilted(p, e, &mut rng))
                    .collect();
                let per_index: Vec<f64> = eps.iter().map(|e| 2.0 * e + eps_prime).collect();
                if kind == 2 {
                    let threshold = OrderedOutput::scalar(f64::from(rng.gen_range(0u8..=3)));
                    let a = generalized_at_exact_distribution(&q, &eps, eps_prime, &threshold)?;
                    let b = generalized_at_exact_distribution(&q2, &eps, eps_prime, &threshold)?;
                    let budget = ExPostBudget::new(per_index, eps_prime, BudgetKind::PureDp)?;
                    let label = format!("#{n} generalized above-threshold");
                    check_both_ways(&mut report, &label, &a, &b, &budget)?;
                } else {
                    let a = tuner_exact_distribution(&q, &eps, eps_prime, DropMode::Geometric)?;
                    let b = tuner_exact_distribution(&q2, &eps, eps_prime, DropMode::Geometric)?;
                    let budget = ExPostBudget::new(per_index, 0.0, BudgetKind::PureDp)?;
                    let label = format!("#{n} tuner");
                    check_both_ways(&mut report, &label, &a, &b, &budget)?;
                    let gap = (a.bottom() - b.bottom()).abs();
                    report.record(format!("#{n} tuner bottom mass"), gap - 1e-12);
                }
            }
        }
        report.instances += 1;
    }
    Ok(report)
}

/// Exact ex-post RDP checks of the exponential-noise tuner at orders 2 and
/// 8, alternating optimized and arbitrary `ell`.
pub fn rdp_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("rdp");
    for n in 0..instances {
        let mut rng = StreamRng::for_trial(seed, 2, n as u64);
        let alpha = if n % 2 == 0 { 2.0 } else { 8.0 };
        let d = rng.gen_range(1..=3);
        let eps_prime = rng.gen_range(0.05..=0.5);
        let q: Vec<FinitePmf> = (0..d).map(|_| random_pmf(&mut rng)).collect();
        let q2: Vec<FinitePmf> = q
            .iter()
            .map(|p| {
                let spread = rng.gen_range(0.1..=1.0);
                tilted(p, spread, &mut rng)
            })
            .collect();
        let eps: Vec<f64> = q
            .iter()
            .zip(&q2)
            .map(|(a, b)| renyi_divergence(a, b, alpha).max(renyi_divergence(b, a, alpha)))
            .collect();
        let tau: f64 = eps
            .iter()
            .map(|&e| expected_invocations(DropMode::Exponential, e, eps_prime, 1))
            .sum();
        let per_index = (1..=d)
            .map(|i| {
                let ell = if n % 4 < 2 {
                    optimize_ell(alpha, i, &eps, eps_prime, tau)?
                } else {
                    rng.gen_range(0.0..=3.0)
                };
                expost_rdp_budget(alpha, Some(i), &eps, eps_prime, ell, tau)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let bottom = expost_rdp_budget(alpha, None, &eps, eps_prime, 0.0, tau)?;
        let budget = ExPostBudget::new(per_index, bottom, BudgetKind::Rdp { alpha })?;
        let a = tuner_exact_distribution(&q, &eps, eps_prime, DropMode::Exponential)?;
        let b = tuner_exact_distribution(&q2, &eps, eps_prime, DropMode::Exponential)?;
        for (dir, (x, y)) in [("D->D'", (&a, &b)), ("D'->D", (&b, &a))] {
            let sum = verify_expost_rdp(&x.pmf, &y.pmf, selection_budget(&budget), alpha)?;
            report.record(
                format!("#{n} alpha={alpha} {dir}"),
                sum - 1.0 - RDP_TOLERANCE,
            );
        }
        report.instances += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
enum BudgetRule {
    /// `|ln(P0(o) / P1(o))|` per output.
    PrivacyLoss,
    /// The larger directional Rényi divergence, for every output.
    Divergence,
}

/// An adversary over binary outputs whose every decision is a
/// deterministic function of its seed and the transcript prefix.
#[derive(Debug, Clone)]
pub struct ScriptedAdversary {
    pub seed: u64,
    pub alpha: f64,
}

fn binary(p1: f64) -> FinitePmf {
    Pmf::new(
        vec![OrderedOutput::scalar(0.0), OrderedOutput::scalar(1.0)],
        vec![1.0 - p1, p1],
    )
    .expect("valid binary pmf")
}

impl Adversary for ScriptedAdversary {
    fn query(&self, prefix: &[OrderedOutput]) -> Option<AdversaryQuery> {
        let code = prefix.iter().fold(1u64, |acc, o| {
            2 * acc + u64::from(o.first().unwrap_or(0.0) > 0.5)
        });
        let mut rng = StreamRng::for_trial(self.seed, 3, code);
        if !prefix.is_empty() && rng.gen_bool(0.1) {
            return None;
        }
        let (p0, p1) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
        let (pmf0, pmf1) = (binary(p0), binary(p1));
        let rule = if rng.gen_bool(0.5) {
            BudgetRule::PrivacyLoss
        } else {
            BudgetRule::Divergence
        };
        let d0 = Histogram::from_counts(&[code]);
        let d1 = Histogram::from_counts(&[code + 1]);
        Some(match rule {
            BudgetRule::PrivacyLoss => {
                let loss = [((1.0 - p0) / (1.0 - p1)).ln().abs(), (p0 / p1).ln().abs()];
                AdversaryQuery::tabulated(d0, d1, pmf0, pmf1, move |o| {
                    loss[usize::from(o.first().unwrap_or(0.0) > 0.5)]
                })
            }
            BudgetRule::Divergence => {
                let dv = renyi_divergence(&pmf0, &pmf1, self.alpha)
                    .max(renyi_divergence(&pmf1, &pmf0, self.alpha));
                AdversaryQuery::tabulated(d0, d1, pmf0, pmf1, move |_| dv)
            }
        })
    }
}

/// Exact transcript divergences of scripted adaptive games against their
/// capacity, at orders 2 and 4.
pub fn filter_suite(adversaries: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("filter");
    for n in 0..adversaries {
        let mut rng = StreamRng::for_trial(seed, 4, n as u64);
        let steps = rng.gen_range(1..=3);
        let capacity = rng.gen_range(0.3..=2.5);
        for alpha in [2.0, 4.0] {
            let adversary = ScriptedAdversary {
                seed: seed.wrapping_add(n as u64),
                alpha,
            };
            // every declared budget must pass its own exact check
            let mut play = StreamRng::for_trial(seed, 5, n as u64);
            for _ in 0..8 {
                run_game(
                    &adversary,
                    play.gen_bool(0.5),
                    alpha,
                    capacity,
                    steps,
                    true,
                    &mut play,
                )?;
            }
            let v0 = exact_transcript_distribution(&adversary, false, alpha, capacity, steps)?;
            let v1 = exact_transcript_distribution(&adversary, true, alpha, capacity, steps)?;
            let div = renyi_divergence(&v0, &v1, alpha);
            report.record(
                format!("#{n} alpha={alpha} steps={steps} capacity={capacity:.3}"),
                div - capacity - FILTER_TOLERANCE,
            );
        }
        report.instances += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityReport {
    pub repetitions: u64,
    pub failure_rate: f64,
    pub limit: f64,
}

/// Failure rate of the tuner repeating one mechanism with
/// `Pr[M >= 1] = alpha_prob` as often as the utility bound prescribes; a
/// failure is an output below 1 (or `⊥`).
pub fn utility_failure_rate(
    alpha_prob: f64,
    beta: f64,
    eps_ratio: f64,
    eps_prime: f64,
    trials: usize,
    seed: u64,
) -> Result<UtilityReport> {
    let eps = eps_ratio * eps_prime;
    let repetitions = repetitions_for_utility(alpha_prob, beta, eps, eps_prime)?;
    let mechanism = MechanismSpec::new("coin", Guarantee::pure(eps)?, move |_, rng| {
        OrderedOutput::scalar(f64::from(u8::from(rng.gen_bool(alpha_prob))))
    });
    let cfg = TunerConfig::new(vec![mechanism], eps_prime, DropMode::Geometric)?
        .with_repetitions(vec![repetitions])?;
    let data = Histogram::default();
    let mut rng = StreamRng::seeded(seed);
    let mut failures = 0;
    for _ in 0..trials {
        let (outcome, _) = run_tuner(&cfg, &data, &mut rng)?;
        let good = outcome
            .selection
            .value()
            .and_then(OrderedOutput::first)
            .is_some_and(|v| v >= 1.0);
        failures += usize::from(!good);
    }
    let n = trials as f64;
    Ok(UtilityReport {
        repetitions,
        failure_rate: failures as f64 / n,
        limit: beta + 3.0 * (beta * (1.0 - beta) / n).sqrt(),
    })
}
