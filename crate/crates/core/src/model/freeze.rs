use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Model;

/// Number of backbone conv layers (closest to the head) unfrozen for feature extraction.
pub const FEATURE_EXTRACTION_CONVS: usize = 3;

/// Which parameters train.
///
/// * `None`: nothing is frozen (training from scratch).
/// * `HeadOnly`: only the classifier head's two linear layers.
/// * `FeatureExtraction`: the head plus the last three conv layers in forward
///   order (downsample projections count) and their batch-norm affine params.
/// * `FineTune`: every parameter, backbone and head jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreezePolicy {
    None,
    HeadOnly,
    FeatureExtraction,
    FineTune,
}

impl FreezePolicy {
    pub fn name(self) -> &'static str {
        match self {
            FreezePolicy::None => "none",
            FreezePolicy::HeadOnly => "head_only",
            FreezePolicy::FeatureExtraction => "feature_extraction",
            FreezePolicy::FineTune => "fine_tune",
        }
    }
}

impl fmt::Display for FreezePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FreezePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FreezePolicy::None),
            "head_only" => Ok(FreezePolicy::HeadOnly),
            "feature_extraction" => Ok(FreezePolicy::FeatureExtraction),
            "fine_tune" => Ok(FreezePolicy::FineTune),
            other => Err(Error::UnknownPolicy(other.to_string())),
        }
    }
}

/// Rewrites the trainable flags; parameter values are never touched.
pub fn apply_freeze_policy(model: &mut Model, policy: FreezePolicy) {
    let trainable: Option<HashSet<String>> = match policy {
        FreezePolicy::None | FreezePolicy::FineTune => None,
        FreezePolicy::HeadOnly => Some(model.head_parameter_names().into_iter().collect()),
        FreezePolicy::FeatureExtraction => {
            let mut set: HashSet<String> = model.head_parameter_names().into_iter().collect();
            let units = model.conv_units();
            let start = units.len().saturating_sub(FEATURE_EXTRACTION_CONVS);
            set.extend(units[start..].iter().flatten().cloned());
            Some(set)
        }
    };
    for p in model.params.iter_mut() {
        p.trainable = trainable.as_ref().is_none_or(|set| set.contains(&p.name));
    }
}
