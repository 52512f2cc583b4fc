//! Ordered mechanism outputs and the extended order on selection outcomes.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{invalid, Result};

/// A tuple of scalars compared lexicographically. NaN is rejected and `-0.0`
/// is normalized to `0.0`, so the order is a strict total order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedOutput(Vec<f64>);

impl OrderedOutput {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("value", "NaN is not ordered"));
        }
        Ok(Self(values.into_iter().map(|v| v + 0.0).collect()))
    }

    /// Panics on NaN.
    pub fn scalar(v: f64) -> Self {
        Self::new(vec![v]).expect("NaN output")
    }

    /// Panics on NaN.
    pub fn tuple(values: &[f64]) -> Self {
        Self::new(values.to_vec()).expect("NaN output")
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> Option<f64> {
        self.0.first().copied()
    }
}

impl Eq for OrderedOutput {}

impl PartialOrd for OrderedOutput {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedOutput {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl fmt::Display for OrderedOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// `⊥` or a released `(value, index)` pair. Indices are 1-based.
///
/// The derived order is the extended order used for maximum selection:
/// `Bottom` is the minimum and selections compare by value, then index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Selection {
    Bottom,
    Selected { value: OrderedOutput, index: usize },
}

impl Selection {
    pub fn selected(value: OrderedOutput, index: usize) -> Self {
        Selection::Selected { value, index }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, Selection::Bottom)
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Selection::Bottom => None,
            Selection::Selected { index, .. } => Some(*index),
        }
    }

    pub fn value(&self) -> Option<&OrderedOutput> {
        match self {
            Selection::Bottom => None,
            Selection::Selected { value, .. } => Some(value),
        }
    }

    /// Flattens into a single tuple: `()` for `⊥`, `value ++ (index)`
    /// otherwise. Order-preserving when all values have equal length.
    pub fn to_ordered(&self) -> OrderedOutput {
        match self {
            Selection::Bottom => OrderedOutput(Vec::new()),
            Selection::Selected { value, index } => {
                let mut v = value.0.clone();
                v.push(*index as f64);
                OrderedOutput(v)
            }
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::Bottom => write!(f, "⊥"),
            Selection::Selected { value, index } => write!(f, "({value}, {index})"),
        }
    }
}

/// Shared noise draw `k` of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdNoise {
    Discrete(u64),
    Continuous(f64),
}

impl ThresholdNoise {
    pub fn as_f64(self) -> f64 {
        match self {
            ThresholdNoise::Discrete(k) => k as f64,
            ThresholdNoise::Continuous(x) => x,
        }
    }
}

/// Internal randomness of one run, kept for inspecting couplings in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomnessTrace {
    pub k: ThresholdNoise,
    /// Keep decision per scanned instance (random-dropping mechanisms).
    pub kept: Vec<bool>,
    /// Per-query noise (AboveThreshold only), in scan order.
    pub query_noise: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub selection: Selection,
    pub trace: Option<RandomnessTrace>,
}

impl Outcome {
    pub fn bottom(trace: Option<RandomnessTrace>) -> Self {
        Self {
            selection: Selection::Bottom,
            trace,
        }
    }
}

/// Total order on outcomes; traces are ignored.
pub fn compare_outcomes(a: &Outcome, b: &Outcome) -> Ordering {
    a.selection.cmp(&b.selection)
}
