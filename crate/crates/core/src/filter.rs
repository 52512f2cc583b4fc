//! Privacy filter for fully adaptive composition of ex-post RDP mechanisms.
//!
//! An adversary picks, from the outputs seen so far, a pair of neighboring
//! datasets and a mechanism together with its ex-post budget. The filter
//! runs the mechanism on the dataset selected by the hidden bit only if the
//! realized charges so far plus the mechanism's worst case fit the capacity;
//! the first denial ends the game.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::accounting::Admission;
use crate::error::{invalid, Error, Result};
use crate::histogram::Histogram;
use crate::mechanism::MechanismSpec;
use crate::oracle::{verify_expost_rdp, FinitePmf, Pmf};
use crate::outcome::OrderedOutput;

/// Slack on the exact ex-post RDP sum accepted by certification.
pub const CERTIFY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    alpha: f64,
    capacity: f64,
    consumed: f64,
    step: usize,
    n: usize,
}

impl FilterState {
    pub fn new(alpha: f64, capacity: f64, n: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(invalid(
                "alpha",
                format!("must be finite and > 1, got {alpha}"),
            ));
        }
        if !(capacity >= 0.0 && capacity.is_finite()) {
            return Err(invalid(
                "capacity",
                format!("must be finite and nonnegative, got {capacity}"),
            ));
        }
        Ok(Self {
            alpha,
            capacity,
            consumed: 0.0,
            step: 0,
            n,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn consumed(&self) -> f64 {
        self.consumed
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.n
    }

    /// Denies iff `consumed + sup > capacity`.
    pub fn admit(&self, sup: f64) -> Admission {
        if self.consumed + sup > self.capacity {
            Admission::Deny
        } else {
            Admission::Allow
        }
    }

    /// Records the realized charge of an admitted step.
    pub fn record(&mut self, charge: f64) {
        debug_assert!(self.step < self.n);
        self.consumed += charge;
        self.step += 1;
    }
}

pub type OutputBudget = Arc<dyn Fn(&OrderedOutput) -> f64 + Send + Sync>;

/// One adaptively chosen step of the game.
#[derive(Clone)]
pub struct AdversaryQuery {
    pub d0: Histogram,
    pub d1: Histogram,
    pub mechanism: MechanismSpec,
    /// Ex-post budget `eps(o)` of every possible output.
    pub budget: OutputBudget,
    /// `sup_o eps(o)`.
    pub sup: f64,
    /// Output distributions on `d0` and `d1`, when enumerable.
    pub exact: Option<(FinitePmf, FinitePmf)>,
}

impl fmt::Debug for AdversaryQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdversaryQuery")
            .field("mechanism", &self.mechanism)
            .field("sup", &self.sup)
            .field("exact", &self.exact)
            .finish()
    }
}

impl AdversaryQuery {
    /// A query whose mechanism draws from `pmf0` on `d0` and `pmf1`
    /// otherwise; the sup is taken over the shared support.
    pub fn tabulated(
        d0: Histogram,
        d1: Histogram,
        pmf0: FinitePmf,
        pmf1: FinitePmf,
        budget: impl Fn(&OrderedOutput) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let sup = pmf0
            .support()
            .iter()
            .chain(pmf1.support())
            .map(&budget)
            .fold(0.0, f64::max);
        let (on0, on1, reference) = (pmf0.clone(), pmf1.clone(), d0.clone());
        let mechanism = MechanismSpec::new(
            "tabulated",
            crate::mechanism::Guarantee::PureDp { eps: sup },
            move |data, rng| {
                let pmf = if *data == reference { &on0 } else { &on1 };
                pmf.sample(rng).clone()
            },
        );
        Self {
            d0,
            d1,
            mechanism,
            budget: Arc::new(budget),
            sup,
            exact: Some((pmf0, pmf1)),
        }
    }

    fn certify(&self, alpha: f64, step: usize) -> Result<()> {
        let Some((p0, p1)) = &self.exact else {
            return Ok(());
        };
        let budget = |o: &OrderedOutput| (self.budget)(o);
        for (a, b) in [(p0, p1), (p1, p0)] {
            let sum = verify_expost_rdp(a, b, budget, alpha)?;
            if sum > 1.0 + CERTIFY_TOLERANCE {
                return Err(Error::Uncertified { step, sum });
            }
        }
        Ok(())
    }
}

/// Chooses the next query from the transcript so far; `None` ends the game.
pub trait Adversary {
    fn query(&self, prefix: &[OrderedOutput]) -> Option<AdversaryQuery>;
}

impl<F> Adversary for F
where
    F: Fn(&[OrderedOutput]) -> Option<AdversaryQuery>,
{
    fn query(&self, prefix: &[OrderedOutput]) -> Option<AdversaryQuery> {
        self(prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    pub outputs: Vec<OrderedOutput>,
    /// Realized charge of every output.
    pub charges: Vec<f64>,
    /// 1-based step at which the filter denied, if it did.
    pub denied_at: Option<usize>,
}

/// Plays the game against `adversary` with hidden bit `b`.
///
/// With `certify`, every query carrying exact output distributions has its
/// declared budget checked in both directions before it runs.
pub fn run_game<A: Adversary + ?Sized>(
    adversary: &A,
    b: bool,
    alpha: f64,
    capacity: f64,
    n: usize,
    certify: bool,
    rng: &mut dyn RngCore,
) -> Result<Transcript> {
    let mut state = FilterState::new(alpha, capacity, n)?;
    let mut transcript = Transcript::default();
    while !state.is_finished() {
        let Some(query) = adversary.query(&transcript.outputs) else {
            break;
        };
        if state.admit(query.sup) == Admission::Deny {
            transcript.denied_at = Some(state.step() + 1);
            break;
        }
        if certify {
            query.certify(alpha, state.step() + 1)?;
        }
        let data = if b { &query.d1 } else { &query.d0 };
        let output = query.mechanism.run(data, rng);
        let charge = (query.budget)(&output);
        state.record(charge);
        transcript.outputs.push(output);
        transcript.charges.push(charge);
    }
    Ok(transcript)
}

/// Distribution of the output sequence of the game with hidden bit `b`,
/// by enumerating every branch. Requires exact output distributions on
/// every reachable query.
pub fn exact_transcript_distribution<A: Adversary + ?Sized>(
    adversary: &A,
    b: bool,
    alpha: f64,
    capacity: f64,
    n: usize,
) -> Result<Pmf<Vec<OrderedOutput>>> {
    let state = FilterState::new(alpha, capacity, n)?;
    let mut acc = BTreeMap::new();
    enumerate(adversary, b, &state, &mut Vec::new(), 1.0, &mut acc)?;
    Pmf::from_weights(acc)
}

fn enumerate<A: Adversary + ?Sized>(
    adversary: &A,
    b: bool,
    state: &FilterState,
    prefix: &mut Vec<OrderedOutput>,
    mass: f64,
    acc: &mut BTreeMap<Vec<OrderedOutput>, f64>,
) -> Result<()> {
    let query = if state.is_finished() {
        None
    } else {
        adversary.query(prefix)
    };
    let query = match query {
        Some(q) if state.admit(q.sup) == Admission::Allow => q,
        _ => {
            *acc.entry(prefix.clone()).or_insert(0.0) += mass;
            return Ok(());
        }
    };
    let (p0, p1) = query.exact.as_ref().ok_or(Error::NotEnumerable {
        step: state.step() + 1,
    })?;
    let pmf = if b { p1 } else { p0 };
    for (o, p) in pmf.iter() {
        if p == 0.0 {
            continue;
        }
        let mut next = state.clone();
        next.record((query.budget)(o));
        prefix.push(o.clone());
        enumerate(adversary, b, &next, prefix, mass * p, acc)?;
        prefix.pop();
    }
    Ok(())
}
