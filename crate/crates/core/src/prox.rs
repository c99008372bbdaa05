//! Margin-based losses and their closed-form proximal maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    /// `max(0, 1 - t)`
    Hinge,
    /// `max(0, 1 - t)^2`
    TruncatedLeastSquares,
    /// Quadratic on `[1 - delta, 1]`, linear below.
    HuberizedHinge { delta: f64 },
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::Hinge
    }
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::HuberizedHinge { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(Error::Domain(format!("huberized hinge needs delta > 0, got {delta}")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        loss_value(*self, t)
    }

    pub fn prox(&self, t: f64, tau: f64) -> Result<f64> {
        loss_prox(*self, t, tau)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Hinge => write!(f, "hinge"),
            LossKind::TruncatedLeastSquares => write!(f, "tls"),
            LossKind::HuberizedHinge { delta } => write!(f, "huber:{delta}"),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    /// `hinge`, `tls`, or `huber:<delta>`.
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "hinge" => LossKind::Hinge,
            "tls" | "truncated_least_squares" => LossKind::TruncatedLeastSquares,
            _ => {
                let delta = s
                    .strip_prefix("huber:")
                    .and_then(|d| d.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown loss '{s}' (hinge|tls|huber:<delta>)")))?;
                LossKind::HuberizedHinge { delta }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

pub fn loss_value(kind: LossKind, t: f64) -> f64 {
    match kind {
        LossKind::Hinge => (1.0 - t).max(0.0),
        LossKind::TruncatedLeastSquares => {
            let h = (1.0 - t).max(0.0);
            h * h
        }
        LossKind::HuberizedHinge { delta } => {
            if t > 1.0 {
                0.0
            } else if t >= 1.0 - delta {
                (1.0 - t) * (1.0 - t) / (2.0 * delta)
            } else {
                1.0 - t - delta / 2.0
            }
        }
    }
}

/// `argmin_u tau * loss(u) + (u - t)^2 / 2`.
pub fn loss_prox(kind: LossKind, t: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("prox step tau must be > 0, got {tau}")));
    }
    Ok(prox_unchecked(kind, t, tau))
}

#[inline]
pub(crate) fn prox_unchecked(kind: LossKind, t: f64, tau: f64) -> f64 {
    match kind {
        LossKind::Hinge => {
            if t > 1.0 {
                t
            } else if t >= 1.0 - tau {
                1.0
            } else {
                t + tau
            }
        }
        LossKind::TruncatedLeastSquares => {
            if t > 1.0 {
                t
            } else {
                (t + 2.0 * tau) / (1.0 + 2.0 * tau)
            }
        }
        LossKind::HuberizedHinge { delta } => {
            if t > 1.0 {
                t
            } else if t >= 1.0 - delta - tau {
                let r = tau / delta;
                (t + r) / (1.0 + r)
            } else {
                t + tau
            }
        }
    }
}

/// Proximal map of `tau * |.|`.
#[inline]
pub fn soft_threshold(t: f64, tau: f64) -> f64 {
    if t > tau {
        t - tau
    } else if t < -tau {
        t + tau
    } else {
        0.0
    }
}
