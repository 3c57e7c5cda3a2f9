use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::AuxVector;

pub type Eta = Arc<dyn Fn(&AuxVector) -> f64 + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&AuxVector) -> bool + Send + Sync>;
pub type Objective = Arc<dyn Fn(f64, &AuxVector) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    /// The caller asserts `h(·, l)` is non-decreasing for every `l`.
    NonDecreasing,
    Unknown,
}

/// Global objective `H(F, G)` evaluated on root beliefs.
#[derive(Clone)]
pub enum Combinator {
    /// `F + η(G)`.
    Sum(Eta),
    /// `F · η(G)`; `η` must be non-negative wherever it is evaluated.
    Product(Eta),
    /// `F + η(G)` when the predicate holds, `-∞` otherwise (`η` defaults to 0).
    Gate {
        predicate: Predicate,
        eta: Option<Eta>,
    },
    General {
        h: Objective,
        monotonicity: Monotonicity,
    },
}

impl Combinator {
    /// Plain MAP: `H = F`.
    pub fn plain() -> Self {
        Combinator::Sum(Arc::new(|_| 0.0))
    }

    pub fn sum(eta: impl Fn(&AuxVector) -> f64 + Send + Sync + 'static) -> Self {
        Combinator::Sum(Arc::new(eta))
    }

    pub fn product(eta: impl Fn(&AuxVector) -> f64 + Send + Sync + 'static) -> Self {
        Combinator::Product(Arc::new(eta))
    }

    pub fn gate(predicate: impl Fn(&AuxVector) -> bool + Send + Sync + 'static) -> Self {
        Combinator::Gate {
            predicate: Arc::new(predicate),
            eta: None,
        }
    }

    pub fn gate_with(
        predicate: impl Fn(&AuxVector) -> bool + Send + Sync + 'static,
        eta: impl Fn(&AuxVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Combinator::Gate {
            predicate: Arc::new(predicate),
            eta: Some(Arc::new(eta)),
        }
    }

    /// General objective, declared non-decreasing in its first argument.
    pub fn general(h: impl Fn(f64, &AuxVector) -> f64 + Send + Sync + 'static) -> Self {
        Combinator::General {
            h: Arc::new(h),
            monotonicity: Monotonicity::NonDecreasing,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Combinator::Sum(_) => "sum",
            Combinator::Product(_) => "product",
            Combinator::Gate { .. } => "gate",
            Combinator::General { .. } => "general",
        }
    }

    /// Rejects combinators whose monotonicity cannot be relied on.
    pub fn check_declared(&self) -> Result<()> {
        match self {
            Combinator::General {
                monotonicity: Monotonicity::Unknown,
                ..
            } => Err(Error::Monotonicity(
                "general objective carries no non-decreasing declaration".into(),
            )),
            _ => Ok(()),
        }
    }

    /// `H(f, l)`. Evaluating at `f = -∞` returns `-∞` for every form.
    pub fn eval(&self, f: f64, l: &AuxVector) -> Result<f64> {
        if f == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let h = match self {
            Combinator::Sum(eta) => f + finite_eta(eta, l)?,
            Combinator::Product(eta) => {
                let e = finite_eta(eta, l)?;
                if e < 0.0 {
                    return Err(Error::Monotonicity(format!(
                        "product weight η({l}) = {e} is negative"
                    )));
                }
                f * e
            }
            Combinator::Gate { predicate, eta } => {
                if !predicate(l) {
                    return Ok(f64::NEG_INFINITY);
                }
                match eta {
                    Some(eta) => f + finite_eta(eta, l)?,
                    None => f,
                }
            }
            Combinator::General { h, monotonicity } => {
                if *monotonicity != Monotonicity::NonDecreasing {
                    self.check_declared()?;
                }
                let v = h(f, l);
                let below = h(f - 1.0, l);
                if below > v {
                    return Err(Error::Monotonicity(format!(
                        "h(·, {l}) decreases between {} and {f}",
                        f - 1.0
                    )));
                }
                v
            }
        };
        if h.is_nan() {
            return Err(Error::Value(format!("objective is NaN at l = {l}")));
        }
        Ok(h)
    }
}

fn finite_eta(eta: &Eta, l: &AuxVector) -> Result<f64> {
    let e = eta(l);
    if e.is_nan() || e.is_infinite() {
        return Err(Error::Value(format!("η({l}) = {e} is not finite")));
    }
    Ok(e)
}

impl fmt::Debug for Combinator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Combinator::{}", self.kind())
    }
}
