//! Closed-form ex-post budgets and the supporting calibrations.
//!
//! All budgets are in nats. Indices passed as `Option<usize>` are 1-based,
//! with `None` standing for `⊥`.

use crate::error::{invalid, Error, Result};
use crate::outcome::Selection;
use crate::random_drop::DropMode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetKind {
    PureDp,
    Rdp { alpha: f64 },
    ApproxDp { delta: f64 },
}

/// The realized-budget function of a selection mechanism: one value per
/// index (charged when that index is selected) and one for `⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExPostBudget {
    per_index: Vec<f64>,
    bottom: f64,
    kind: BudgetKind,
}

impl ExPostBudget {
    pub fn new(per_index: Vec<f64>, bottom: f64, kind: BudgetKind) -> Result<Self> {
        if per_index
            .iter()
            .chain(std::iter::once(&bottom))
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(invalid("budget", "values must be finite and nonnegative"));
        }
        Ok(Self {
            per_index,
            bottom,
            kind,
        })
    }

    pub fn per_index(&self) -> &[f64] {
        &self.per_index
    }

    pub fn bottom(&self) -> f64 {
        self.bottom
    }

    pub fn kind(&self) -> BudgetKind {
        self.kind
    }

    pub fn charge(&self, selection: &Selection) -> Result<f64> {
        match selection {
            Selection::Bottom => Ok(self.bottom),
            Selection::Selected { index, .. } => self
                .per_index
                .get(index.wrapping_sub(1))
                .copied()
                .ok_or(Error::IndexOutOfRange {
                    index: *index,
                    len: self.per_index.len(),
                }),
        }
    }

    /// Worst case over all outcomes.
    pub fn sup(&self) -> f64 {
        self.per_index.iter().copied().fold(self.bottom, f64::max)
    }
}

fn check_pick(pick: Option<usize>, len: usize) -> Result<()> {
    match pick {
        Some(i) if i == 0 || i > len => Err(Error::IndexOutOfRange { index: i, len }),
        _ => Ok(()),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            "alpha",
            format!("must be finite and > 1, got {alpha}"),
        ))
    }
}

/// Pure-DP charge of the random-dropping tuner: `2 eps_i + eps'`, or zero
/// for `⊥`.
pub fn expost_pure_budget(pick: Option<usize>, eps: &[f64], eps_prime: f64) -> Result<f64> {
    check_pick(pick, eps.len())?;
    Ok(match pick {
        Some(i) => 2.0 * eps[i - 1] + eps_prime,
        None => 0.0,
    })
}

/// Ex-post RDP charge at order `alpha` of the tuner with exponential
/// threshold noise.
///
/// `eps` lists every mechanism instance (repetitions included) and
/// `tau_total` is the expected total number of executions.
pub fn expost_rdp_budget(
    alpha: f64,
    pick: Option<usize>,
    eps: &[f64],
    eps_prime: f64,
    ell: f64,
    tau_total: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_pick(pick, eps.len())?;
    if !(ell >= 0.0) {
        return Err(invalid("ell", format!("must be nonnegative, got {ell}")));
    }
    let log_tau = tau_total.ln_1p();
    Ok(match pick {
        None => log_tau / (alpha - 1.0),
        Some(i) => rdp_objective(alpha, i - 1, eps, eps_prime, ell, log_tau),
    })
}

fn rdp_objective(alpha: f64, i: usize, eps: &[f64], eps_prime: f64, ell: f64, log_tau: f64) -> f64 {
    let spill: f64 = eps
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &e)| (-e * (1.0 + alpha * ell)).exp())
        .sum();
    (2.0 + ell) * eps[i] + (1.0 + ell) * eps_prime + (log_tau + spill) / (alpha - 1.0)
}

fn rdp_objective_slope(alpha: f64, i: usize, eps: &[f64], eps_prime: f64, ell: f64) -> f64 {
    let spill: f64 = eps
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &e)| e * (-e * (1.0 + alpha * ell)).exp())
        .sum();
    eps[i] + eps_prime - alpha / (alpha - 1.0) * spill
}

/// Minimizes the ex-post RDP charge of index `i` (1-based) over `ell >= 0`
/// by golden-section search.
pub fn optimize_ell(
    alpha: f64,
    i: usize,
    eps: &[f64],
    eps_prime: f64,
    tau_total: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_pick(Some(i), eps.len())?;
    let i = i - 1;
    let min_eps = eps
        .iter()
        .enumerate()
        .filter(|&(j, &e)| j != i && e > 0.0)
        .map(|(_, &e)| e)
        .fold(f64::INFINITY, f64::min);
    if !min_eps.is_finite() {
        // nothing in the spill term decays with ell
        return Ok(0.0);
    }
    let log_tau = tau_total.ln_1p();
    let f = |ell: f64| rdp_objective(alpha, i, eps, eps_prime, ell, log_tau);
    if rdp_objective_slope(alpha, i, eps, eps_prime, 0.0) >= 0.0 {
        return Ok(0.0);
    }

    let n = eps.len() as f64;
    let mut hi = f64::max(1.0, n.ln() / (alpha * min_eps)) + 10.0;
    while rdp_objective_slope(alpha, i, eps, eps_prime, hi) < 0.0 {
        hi *= 2.0;
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-9 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let ell = 0.5 * (a + b);
    Ok(if f(0.0) <= f(ell) { 0.0 } else { ell })
}

/// `E[e^{-m eps k}]` for the threshold noise `k` of the given mode.
fn drop_moment(mode: DropMode, m: f64, eps: f64, eps_prime: f64) -> f64 {
    match mode {
        DropMode::Exponential => eps_prime / (eps_prime + m * eps),
        DropMode::Geometric => {
            if m * eps == 0.0 {
                1.0
            } else {
                (-eps_prime).exp_m1() / (-(m * eps + eps_prime)).exp_m1()
            }
        }
    }
}

/// Expected number of executions of a mechanism with budget `eps_i`
/// repeated `reps` times.
pub fn expected_invocations(mode: DropMode, eps_i: f64, eps_prime: f64, reps: u64) -> f64 {
    reps as f64 * drop_moment(mode, 1.0, eps_i, eps_prime)
}

/// Standard deviation of the execution count of `reps` identical copies.
/// Given `k`, the count is `Binomial(reps, e^{-eps k})`.
pub fn invocation_stddev(mode: DropMode, eps: f64, eps_prime: f64, reps: u64) -> f64 {
    let t = reps as f64;
    let m1 = drop_moment(mode, 1.0, eps, eps_prime);
    let m2 = drop_moment(mode, 2.0, eps, eps_prime);
    let var = t * (m1 - m2) + t * t * (m2 - m1 * m1);
    var.max(0.0).sqrt()
}

/// Repetitions that make the tuner return a value at least as good as `o*`
/// with probability `1 - beta`, given `Pr[M(D) >= o*] >= alpha_prob`.
pub fn repetitions_for_utility(
    alpha_prob: f64,
    beta: f64,
    eps_i: f64,
    eps_prime: f64,
) -> Result<u64> {
    if !(alpha_prob > 0.0 && alpha_prob <= 1.0) {
        return Err(invalid(
            "alpha_prob",
            format!("must lie in (0, 1], got {alpha_prob}"),
        ));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
    }
    if !(eps_prime > 0.0) || !(eps_i >= 0.0) {
        return Err(invalid("eps", "eps_i must be >= 0 and eps' > 0"));
    }
    let two_over_beta = 2.0 / beta;
    let t = two_over_beta.powf(eps_i / eps_prime) * two_over_beta.ln() / alpha_prob;
    Ok(t.ceil() as u64)
}

/// `eps + ln(1/delta) / (alpha - 1)`.
pub fn approx_dp_epsilon(eps: f64, alpha: f64, delta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1], got {delta}")));
    }
    Ok(eps - delta.ln() / (alpha - 1.0))
}

/// Converts an ex-post RDP budget to an ex-post `(eps, delta)` budget.
pub fn rdp_to_approx(budget: &ExPostBudget, delta: f64) -> Result<ExPostBudget> {
    let BudgetKind::Rdp { alpha } = budget.kind else {
        return Err(invalid("budget", "conversion needs an RDP budget"));
    };
    let shift = approx_dp_epsilon(0.0, alpha, delta)?;
    ExPostBudget::new(
        budget.per_index.iter().map(|v| v + shift).collect(),
        budget.bottom + shift,
        BudgetKind::ApproxDp { delta },
    )
}

/// RDP of the Gaussian mechanism: `alpha * sensitivity^2 / (2 sigma^2)`.
pub fn gaussian_rdp(sigma: f64, sensitivity: f64, alpha: f64) -> f64 {
    alpha * sensitivity * sensitivity / (2.0 * sigma * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Allow,
    Deny,
}

/// Running sum of realized pure-DP charges against a global capacity. The
/// next mechanism is admitted only if its worst-case charge still fits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureLedger {
    capacity: f64,
    consumed: f64,
}

impl PureLedger {
    pub fn new(capacity: f64) -> Self {
        Self {
            capacity,
            consumed: 0.0,
        }
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn consumed(&self) -> f64 {
        self.consumed
    }

    pub fn remaining(&self) -> f64 {
        self.capacity - self.consumed
    }

    pub fn admit(&self, worst_case: f64) -> Admission {
        if self.consumed + worst_case > self.capacity {
            Admission::Deny
        } else {
            Admission::Allow
        }
    }

    /// Callers must have admitted a worst case at least as large as `charge`.
    pub fn record(&mut self, charge: f64) {
        debug_assert!(self.consumed + charge <= self.capacity);
        self.consumed += charge;
    }
}

/// Replays `charges` into a ledger and reports whether a further mechanism
/// with worst case `next_worst_case` would be admitted.
pub fn pure_composition_ledger(
    charges: &[f64],
    capacity: f64,
    next_worst_case: f64,
) -> (f64, Admission) {
    let consumed: f64 = charges.iter().sum();
    let ledger = PureLedger { capacity, consumed };
    (consumed, ledger.admit(next_worst_case))
}
