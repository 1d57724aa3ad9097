use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{ConditioningMode, EncoderConfig, GenerativeKind};

/// Named model variants: generative kind plus conditioning mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    EiFm,
    EiDdpm,
    Cfm,
    Cddpm,
    CfmGamma,
    MomentFm,
    Gddpm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::EiFm,
        Method::EiDdpm,
        Method::Cfm,
        Method::Cddpm,
        Method::CfmGamma,
        Method::MomentFm,
        Method::Gddpm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::EiFm => "ei-fm",
            Method::EiDdpm => "ei-ddpm",
            Method::Cfm => "cfm",
            Method::Cddpm => "cddpm",
            Method::CfmGamma => "cfm-gamma",
            Method::MomentFm => "moment-fm",
            Method::Gddpm => "gddpm",
        }
    }

    pub fn is_fm(&self) -> bool {
        matches!(self, Method::EiFm | Method::Cfm | Method::CfmGamma | Method::MomentFm)
    }

    pub fn conditioning(&self) -> ConditioningMode {
        match self {
            Method::EiFm | Method::EiDdpm => ConditioningMode::LearnedEnsemble,
            Method::Cfm | Method::Cddpm => ConditioningMode::None,
            Method::CfmGamma => ConditioningMode::OracleGamma,
            Method::MomentFm | Method::Gddpm => ConditioningMode::MomentEnsemble,
        }
    }

    /// `fm` and `ddpm` are the kinds used when the method's family matches.
    pub fn kind(&self, fm: GenerativeKind, ddpm: GenerativeKind) -> GenerativeKind {
        if self.is_fm() {
            fm
        } else {
            ddpm
        }
    }

    /// Encoder for this method given the configured learned encoder.
    pub fn encoder(&self, learned: EncoderConfig, moments: EncoderConfig) -> Option<EncoderConfig> {
        match self.conditioning() {
            ConditioningMode::LearnedEnsemble => Some(learned),
            ConditioningMode::MomentEnsemble => Some(moments),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}
