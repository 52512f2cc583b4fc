//! Randomized computations paired with their declared ex-ante guarantee.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{invalid, Result};
use crate::histogram::Histogram;
use crate::outcome::OrderedOutput;

/// Declared ex-ante privacy guarantee of a mechanism, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Guarantee {
    PureDp { eps: f64 },
    Rdp { alpha: f64, eps: f64 },
}

impl Guarantee {
    pub fn pure(eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid(
                "eps",
                format!("must be finite and nonnegative, got {eps}"),
            ));
        }
        Ok(Guarantee::PureDp { eps })
    }

    pub fn rdp(alpha: f64, eps: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(invalid(
                "alpha",
                format!("must be finite and > 1, got {alpha}"),
            ));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid(
                "eps",
                format!("must be finite and nonnegative, got {eps}"),
            ));
        }
        Ok(Guarantee::Rdp { alpha, eps })
    }

    pub fn eps(&self) -> f64 {
        match *self {
            Guarantee::PureDp { eps } | Guarantee::Rdp { eps, .. } => eps,
        }
    }
}

type RunFn = dyn Fn(&Histogram, &mut dyn RngCore) -> OrderedOutput + Send + Sync;

#[derive(Clone)]
pub struct MechanismSpec {
    label: String,
    guarantee: Guarantee,
    run: Arc<RunFn>,
}

impl fmt::Debug for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MechanismSpec")
            .field("label", &self.label)
            .field("guarantee", &self.guarantee)
            .finish()
    }
}

impl MechanismSpec {
    pub fn new(
        label: impl Into<String>,
        guarantee: Guarantee,
        run: impl Fn(&Histogram, &mut dyn RngCore) -> OrderedOutput + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            guarantee,
            run: Arc::new(run),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn guarantee(&self) -> Guarantee {
        self.guarantee
    }

    pub fn eps(&self) -> f64 {
        self.guarantee.eps()
    }

    pub fn run(&self, data: &Histogram, rng: &mut dyn RngCore) -> OrderedOutput {
        (self.run)(data, rng)
    }
}
