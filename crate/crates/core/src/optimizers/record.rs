use serde::{Deserialize, Serialize};

use crate::accountant::PrivacyBudget;

/// Iterates above this dimension are dropped from JSON output.
pub const MAX_SERIALIZED_DIM: usize = 64;

/// The privacy guarantee an algorithm run claims for its final iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Guarantee {
    Rdp { budget: PrivacyBudget },
    ApproximateDp { epsilon: f64, delta: f64 },
    NonPrivate,
}

impl Guarantee {
    pub fn rdp(budget: PrivacyBudget) -> Self {
        Guarantee::Rdp { budget }
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            Guarantee::Rdp { budget } => budget.rho(),
            _ => None,
        }
    }

    /// Guarantee of running mechanisms on disjoint parts of the data.
    pub fn parallel(parts: &[Guarantee]) -> Guarantee {
        let Some(first) = parts.first() else {
            return Guarantee::Rdp {
                budget: PrivacyBudget::Finite { rho: 0.0 },
            };
        };
        let mut acc = *first;
        for g in &parts[1..] {
            acc = match (acc, *g) {
                (Guarantee::Rdp { budget: a }, Guarantee::Rdp { budget: b }) => Guarantee::Rdp {
                    budget: match (a.rho(), b.rho()) {
                        (Some(x), Some(y)) => PrivacyBudget::Finite { rho: x.max(y) },
                        _ => PrivacyBudget::Infinite,
                    },
                },
                (
                    Guarantee::ApproximateDp { epsilon: e1, delta: d1 },
                    Guarantee::ApproximateDp { epsilon: e2, delta: d2 },
                ) => Guarantee::ApproximateDp {
                    epsilon: e1.max(e2),
                    delta: d1.max(d2),
                },
                _ => Guarantee::NonPrivate,
            };
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    /// One-based.
    pub phase: usize,
    pub samples: usize,
    pub noise_scale: f64,
    pub iterate: Vec<f64>,
    /// Whether the inner solve met its suboptimality target; `None` when not applicable.
    pub certified: Option<bool>,
    pub inner_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub final_iterate: Vec<f64>,
    pub weighted_average: Option<Vec<f64>>,
    pub gradient_evaluations: u64,
    pub phase_log: Vec<PhaseEntry>,
    pub rng_seed: u64,
    pub declared_budget: Guarantee,
    pub warnings: Vec<String>,
}

impl RunRecord {
    /// JSON form; iterates are replaced by `null` above [`MAX_SERIALIZED_DIM`].
    pub fn to_json(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("run records always serialize");
        if self.final_iterate.len() > MAX_SERIALIZED_DIM {
            value["final_iterate"] = serde_json::Value::Null;
            value["weighted_average"] = serde_json::Value::Null;
            if let Some(phases) = value["phase_log"].as_array_mut() {
                for p in phases {
                    p["iterate"] = serde_json::Value::Null;
                }
            }
            value["iterates_elided"] = serde_json::Value::Bool(true);
        }
        value
    }
}
