//! Regularized fine-tuning objective.
//!
//! * `L_lp`: cross-entropy of the live head on frozen pretrained features.
//! * `L_lp-ft`: cross-entropy of the live head on live features.
//! * `L_fr`: squared L2 distance of live features to fixed class prototypes
//!   built from the pretrained extractor. Gradient reaches `f` only.
//! * `L_hr`: negative entropy of the live head's softmax on pretrained
//!   features. Gradient reaches `h` only.
//!
//! All batch losses are means over the batch.

mod objective;
mod prototypes;
mod terms;

pub use objective::{compute_gradients, loss_total, objective_value, Batch, HrInput, HrMode, LossBreakdown, Objective};
pub use prototypes::{compute_prototypes, PrototypeBank};
pub use terms::{loss_fr, loss_hr, loss_hr_variant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fine-tuning variants: the full method and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain LP-FT, no regularizers.
    Lpft,
    NoHr,
    NoFr,
    /// Full method with a freshly initialized head instead of `h_lp`.
    NoPretrainedHead,
    /// Head regularizer evaluated on live features `f(x)`.
    HrF,
    /// Head regularizer that minimizes entropy instead.
    EntMinHr,
    Rpf,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Lpft,
        Variant::NoHr,
        Variant::NoFr,
        Variant::NoPretrainedHead,
        Variant::HrF,
        Variant::EntMinHr,
        Variant::Rpf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lpft => "lpft",
            Variant::NoHr => "no_hr",
            Variant::NoFr => "no_fr",
            Variant::NoPretrainedHead => "no_pretrained_head",
            Variant::HrF => "hr_f",
            Variant::EntMinHr => "ent_min_hr",
            Variant::Rpf => "rpf",
        }
    }

    pub fn has_fr(self) -> bool {
        !matches!(self, Variant::Lpft | Variant::NoFr)
    }

    pub fn has_hr(self) -> bool {
        !matches!(self, Variant::Lpft | Variant::NoHr)
    }

    pub fn uses_pretrained_head(self) -> bool {
        self != Variant::NoPretrainedHead
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub variant: Variant,
    pub lambda_hr: f64,
    /// Coefficient on `L_fr`; 1 for the method as published, 0 disables it.
    pub fr_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            variant: Variant::Rpf,
            lambda_hr: 0.1,
            fr_weight: 1.0,
        }
    }
}

impl LossSpec {
    pub fn new(variant: Variant, lambda_hr: f64) -> Self {
        Self {
            variant,
            lambda_hr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_hr >= 0.0) || !self.lambda_hr.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda_hr = {}", self.lambda_hr)));
        }
        if !(self.fr_weight >= 0.0) || !self.fr_weight.is_finite() {
            return Err(Error::InvalidConfig(format!("fr_weight = {}", self.fr_weight)));
        }
        Ok(())
    }

    /// Term coefficients for the variant. Inactive terms get coefficient 0
    /// and are skipped entirely during evaluation.
    pub fn objective(&self) -> Objective {
        let v = self.variant;
        Objective {
            lp: 0.0,
            lpft: 1.0,
            fr: if v.has_fr() { self.fr_weight } else { 0.0 },
            hr: if v.has_hr() { self.lambda_hr } else { 0.0 },
            hr_input: if v == Variant::HrF {
                HrInput::Live
            } else {
                HrInput::Pretrained
            },
            hr_mode: if v == Variant::EntMinHr {
                HrMode::MinimizeEntropy
            } else {
                HrMode::MaximizeEntropy
            },
        }
    }
}
