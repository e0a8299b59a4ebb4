use serde::{Deserialize, Serialize};

use super::MetricError;

/// Group-conditional rates for a binary classifier with a binary sensitive
/// attribute `S`.
///
/// `p0 = P(Ŷ=1 | S=0)`, `p1 = P(Ŷ=1 | S=1)`, `p01 = P(Ŷ=1 | Y=1, S=0)`,
/// `p11 = P(Ŷ=1 | Y=1, S=1)`. `rec0` and `rec1` are the recalls of the two
/// target classes, used for the tabular RD check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryGroupRates {
    pub p0: f64,
    pub p1: f64,
    pub p01: f64,
    pub p11: f64,
    pub rec0: f64,
    pub rec1: f64,
}

impl BinaryGroupRates {
    pub fn new(p0: f64, p1: f64, p01: f64, p11: f64, rec0: f64, rec1: f64) -> Result<Self, MetricError> {
        let rates = Self { p0, p1, p01, p11, rec0, rec1 };
        for (name, v) in [
            ("p0", p0),
            ("p1", p1),
            ("p01", p01),
            ("p11", p11),
            ("rec0", rec0),
            ("rec1", rec1),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricError::Shape(format!("rate {name}={v} outside [0, 1]")));
            }
        }
        Ok(rates)
    }
}

/// Additive and ratio forms of a two-group gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupGap {
    pub additive: f64,
    pub ratio: f64,
}

fn gap(a: f64, b: f64) -> GroupGap {
    let hi = a.max(b);
    let ratio = if hi == 0.0 {
        log::warn!("both group rates are zero; ratio reported as 1");
        1.0
    } else {
        a.min(b) / hi
    };
    GroupGap {
        additive: (a - b).abs(),
        ratio,
    }
}

/// `|P1 − P0|` and `min(P0, P1) / max(P0, P1)`.
pub fn disparate_impact(rates: &BinaryGroupRates) -> GroupGap {
    gap(rates.p0, rates.p1)
}

/// Same construction over the true-positive rates `P(0,1)` and `P(1,1)`.
pub fn equality_of_odds(rates: &BinaryGroupRates) -> GroupGap {
    gap(rates.p01, rates.p11)
}
