//! Selection by random dropping with a shared noise draw.
//!
//! One draw `k` (geometric in pure-DP mode, exponential in RDP mode) fixes
//! the keep probability `e^{-eps_i k}` of every mechanism instance. The
//! generalized AboveThreshold returns the first kept output reaching a
//! threshold; the tuner returns the maximum over all kept outputs.
//!
//! Repetitions are laid out contiguously, so a configuration with
//! repetitions `[2, 1]` has instances `[M1, M1, M2]` and outcome indices
//! refer to these flat, 1-based positions.

use rand::RngCore;

use crate::accounting::{
    expected_invocations, expost_rdp_budget, optimize_ell, BudgetKind, ExPostBudget,
};
use crate::error::{invalid, Error, Result};
use crate::histogram::Histogram;
use crate::mechanism::{Guarantee, MechanismSpec};
use crate::noise::{sample_bernoulli, sample_exponential, sample_geometric, GeometricParam};
use crate::outcome::{OrderedOutput, Outcome, RandomnessTrace, Selection, ThresholdNoise};

/// Distribution of the shared drop noise `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropMode {
    /// `k ~ Geo(e^{-eps'})`, for pure-DP mechanisms.
    Geometric,
    /// `k ~ Exp(eps')`, for RDP mechanisms.
    Exponential,
}

#[derive(Debug, Clone)]
pub struct TunerConfig {
    mechanisms: Vec<MechanismSpec>,
    repetitions: Vec<u64>,
    eps_prime: f64,
    mode: DropMode,
    threshold: Option<OrderedOutput>,
}

impl TunerConfig {
    pub fn new(mechanisms: Vec<MechanismSpec>, eps_prime: f64, mode: DropMode) -> Result<Self> {
        if !(eps_prime > 0.0 && eps_prime.is_finite()) {
            return Err(invalid(
                "eps_prime",
                format!("must be positive, got {eps_prime}"),
            ));
        }
        let repetitions = vec![1; mechanisms.len()];
        Ok(Self {
            mechanisms,
            repetitions,
            eps_prime,
            mode,
            threshold: None,
        })
    }

    pub fn with_repetitions(mut self, repetitions: Vec<u64>) -> Result<Self> {
        if repetitions.len() != self.mechanisms.len() {
            return Err(invalid("repetitions", "need one count per mechanism"));
        }
        if repetitions.contains(&0) {
            return Err(invalid("repetitions", "every count must be at least 1"));
        }
        self.repetitions = repetitions;
        Ok(self)
    }

    pub fn with_threshold(mut self, threshold: OrderedOutput) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn mechanisms(&self) -> &[MechanismSpec] {
        &self.mechanisms
    }

    pub fn repetitions(&self) -> &[u64] {
        &self.repetitions
    }

    pub fn eps_prime(&self) -> f64 {
        self.eps_prime
    }

    pub fn mode(&self) -> DropMode {
        self.mode
    }

    pub fn threshold(&self) -> Option<&OrderedOutput> {
        self.threshold.as_ref()
    }

    /// 0-based mechanism position of every flat instance.
    pub fn instance_mechanisms(&self) -> Vec<usize> {
        self.repetitions
            .iter()
            .enumerate()
            .flat_map(|(m, &r)| std::iter::repeat_n(m, r as usize))
            .collect()
    }

    pub fn instance_count(&self) -> usize {
        self.repetitions.iter().sum::<u64>() as usize
    }

    /// Budget of every flat instance.
    pub fn instance_eps(&self) -> Vec<f64> {
        self.instance_mechanisms()
            .into_iter()
            .map(|m| self.mechanisms[m].eps())
            .collect()
    }

    /// Expected total number of mechanism executions.
    pub fn expected_invocations(&self) -> f64 {
        self.mechanisms
            .iter()
            .zip(&self.repetitions)
            .map(|(m, &r)| expected_invocations(self.mode, m.eps(), self.eps_prime, r))
            .sum()
    }

    fn require_pure(&self) -> Result<()> {
        for (i, m) in self.mechanisms.iter().enumerate() {
            if !matches!(m.guarantee(), Guarantee::PureDp { .. }) {
                return Err(Error::GuaranteeMismatch {
                    index: i + 1,
                    label: m.label().to_string(),
                    expected: "pure-DP".into(),
                });
            }
        }
        Ok(())
    }

    fn require_rdp(&self, alpha: f64) -> Result<()> {
        for (i, m) in self.mechanisms.iter().enumerate() {
            match m.guarantee() {
                Guarantee::Rdp { alpha: a, .. } if a == alpha => {}
                _ => {
                    return Err(Error::GuaranteeMismatch {
                        index: i + 1,
                        label: m.label().to_string(),
                        expected: format!("RDP at order {alpha}"),
                    })
                }
            }
        }
        Ok(())
    }

    fn require_mode(&self, mode: DropMode) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(invalid("mode", format!("expected {mode:?} drop noise")))
        }
    }

    /// Tuner charges: `2 eps_i + eps'` per instance and zero for `⊥`.
    pub fn pure_budget(&self) -> Result<ExPostBudget> {
        self.require_pure()?;
        let per_index = self
            .instance_eps()
            .into_iter()
            .map(|e| 2.0 * e + self.eps_prime)
            .collect();
        ExPostBudget::new(per_index, 0.0, BudgetKind::PureDp)
    }

    /// Generalized AboveThreshold charges: as the tuner but `eps'` for `⊥`.
    pub fn generalized_at_budget(&self) -> Result<ExPostBudget> {
        let b = self.pure_budget()?;
        ExPostBudget::new(b.per_index().to_vec(), self.eps_prime, BudgetKind::PureDp)
    }

    /// Minimizing `ell` for each mechanism at order `alpha`. Copies of one
    /// mechanism share the same objective, hence the same minimizer.
    pub fn optimal_ell(&self, alpha: f64) -> Result<Vec<f64>> {
        let eps = self.instance_eps();
        let tau = self.expected_invocations();
        let mut first = 1;
        let mut out = Vec::with_capacity(self.mechanisms.len());
        for &r in &self.repetitions {
            out.push(optimize_ell(alpha, first, &eps, self.eps_prime, tau)?);
            first += r as usize;
        }
        Ok(out)
    }

    /// Ex-post RDP charges at order `alpha` with one `ell` per mechanism.
    pub fn rdp_budget(&self, alpha: f64, ell: &[f64]) -> Result<ExPostBudget> {
        self.require_rdp(alpha)?;
        if ell.len() != self.mechanisms.len() {
            return Err(invalid("ell", "need one value per mechanism"));
        }
        let eps = self.instance_eps();
        let tau = self.expected_invocations();
        let per_index = self
            .instance_mechanisms()
            .into_iter()
            .enumerate()
            .map(|(i, m)| expost_rdp_budget(alpha, Some(i + 1), &eps, self.eps_prime, ell[m], tau))
            .collect::<Result<Vec<_>>>()?;
        let bottom = expost_rdp_budget(alpha, None, &eps, self.eps_prime, 0.0, tau)?;
        ExPostBudget::new(per_index, bottom, BudgetKind::Rdp { alpha })
    }
}

fn draw_k<R: RngCore>(mode: DropMode, eps_prime: f64, rng: &mut R) -> Result<ThresholdNoise> {
    Ok(match mode {
        DropMode::Geometric => ThresholdNoise::Discrete(sample_geometric(
            GeometricParam::from_epsilon(eps_prime)?,
            rng,
        )),
        DropMode::Exponential => ThresholdNoise::Continuous(sample_exponential(eps_prime, rng)),
    })
}

fn keep_probability(eps: f64, k: ThresholdNoise) -> f64 {
    let k = k.as_f64();
    if eps == 0.0 || k == 0.0 {
        1.0
    } else {
        (-eps * k).exp()
    }
}

/// Scans instances in order and releases the first kept output that reaches
/// the threshold. Charges `2 eps_i + eps'`, or `eps'` for `⊥`.
pub fn run_generalized_at<R: RngCore>(
    cfg: &TunerConfig,
    data: &Histogram,
    rng: &mut R,
) -> Result<(Outcome, f64)> {
    let threshold = cfg
        .threshold
        .as_ref()
        .ok_or_else(|| invalid("threshold", "generalized AboveThreshold needs a threshold"))?;
    cfg.require_mode(DropMode::Geometric)?;
    let budget = cfg.generalized_at_budget()?;

    let k = draw_k(cfg.mode, cfg.eps_prime, rng)?;
    let mut kept = Vec::new();
    for (i, m) in cfg.instance_mechanisms().into_iter().enumerate() {
        let mech = &cfg.mechanisms[m];
        let keep = sample_bernoulli(keep_probability(mech.eps(), k), rng);
        kept.push(keep);
        if keep {
            let o = mech.run(data, rng);
            if &o >= threshold {
                let selection = Selection::selected(o, i + 1);
                let charge = budget.charge(&selection)?;
                let trace = RandomnessTrace {
                    k,
                    kept,
                    query_noise: Vec::new(),
                };
                return Ok((
                    Outcome {
                        selection,
                        trace: Some(trace),
                    },
                    charge,
                ));
            }
        }
    }
    let trace = RandomnessTrace {
        k,
        kept,
        query_noise: Vec::new(),
    };
    Ok((Outcome::bottom(Some(trace)), budget.bottom()))
}

/// Runs every kept instance and returns the maximum of the candidates and `⊥`.
fn select_max<R: RngCore>(
    cfg: &TunerConfig,
    k: ThresholdNoise,
    data: &Histogram,
    rng: &mut R,
) -> Outcome {
    let mut best = Selection::Bottom;
    let mut kept = Vec::with_capacity(cfg.instance_count());
    for (i, m) in cfg.instance_mechanisms().into_iter().enumerate() {
        let mech = &cfg.mechanisms[m];
        let keep = sample_bernoulli(keep_probability(mech.eps(), k), rng);
        kept.push(keep);
        if keep {
            let cand = Selection::selected(mech.run(data, rng), i + 1);
            if cand > best {
                best = cand;
            }
        }
    }
    Outcome {
        selection: best,
        trace: Some(RandomnessTrace {
            k,
            kept,
            query_noise: Vec::new(),
        }),
    }
}

/// Pure-DP tuner: geometric drop noise, charge `2 eps_i + eps'` or zero for `⊥`.
pub fn run_tuner<R: RngCore>(
    cfg: &TunerConfig,
    data: &Histogram,
    rng: &mut R,
) -> Result<(Outcome, f64)> {
    cfg.require_mode(DropMode::Geometric)?;
    let budget = cfg.pure_budget()?;
    let k = draw_k(cfg.mode, cfg.eps_prime, rng)?;
    let outcome = select_max(cfg, k, data, rng);
    let charge = budget.charge(&outcome.selection)?;
    Ok((outcome, charge))
}

/// RDP tuner: exponential drop noise, charged with the ex-post RDP budget at
/// order `alpha` using one `ell` per mechanism.
pub fn run_tuner_rdp<R: RngCore>(
    cfg: &TunerConfig,
    ell: &[f64],
    alpha: f64,
    data: &Histogram,
    rng: &mut R,
) -> Result<(Outcome, f64)> {
    cfg.require_mode(DropMode::Exponential)?;
    let budget = cfg.rdp_budget(alpha, ell)?;
    let k = draw_k(cfg.mode, cfg.eps_prime, rng)?;
    let outcome = select_max(cfg, k, data, rng);
    let charge = budget.charge(&outcome.selection)?;
    Ok((outcome, charge))
}
