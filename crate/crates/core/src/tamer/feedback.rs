use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::envs::Observation;

/// Evaluative feedback: -1 or +1. Serialises as the integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Signal {
    Negative,
    Positive,
}

impl Signal {
    pub fn value(self) -> f64 {
        match self {
            Signal::Negative => -1.0,
            Signal::Positive => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Signal::Negative => Signal::Positive,
            Signal::Positive => Signal::Negative,
        }
    }
}

impl TryFrom<i8> for Signal {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Signal::Negative),
            1 => Ok(Signal::Positive),
            other => Err(format!("feedback must be -1 or +1, got {other}")),
        }
    }
}

impl From<Signal> for i8 {
    fn from(s: Signal) -> i8 {
        match s {
            Signal::Negative => -1,
            Signal::Positive => 1,
        }
    }
}

/// Feedback condition shared by trainer and oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Cfa,
    Cfs,
    CfaDown,
    CfsDown,
    RandomExtra,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Vanilla,
        Variant::Cfa,
        Variant::Cfs,
        Variant::CfaDown,
        Variant::CfsDown,
        Variant::RandomExtra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Cfa => "cfa",
            Variant::Cfs => "cfs",
            Variant::CfaDown => "cfa_down",
            Variant::CfsDown => "cfs_down",
            Variant::RandomExtra => "random_extra",
        }
    }

    /// Whether counterfactuals of this variant are attached to positive events.
    pub fn is_downward(self) -> bool {
        matches!(self, Variant::CfaDown | Variant::CfsDown)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// What the counterfactual pair replaces in the fact `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CfTarget {
    /// `(s, a_cf)`: same state, different action.
    Action { action: usize },
    /// `(s_cf, a)`: different state, same action.
    State { state: Observation },
    /// An unrelated `(s, a)` sample with no contrast to the fact.
    Sample { state: Observation, action: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfKind {
    Action,
    State,
    Sample,
}

impl CfTarget {
    pub fn kind(&self) -> CfKind {
        match self {
            CfTarget::Action { .. } => CfKind::Action,
            CfTarget::State { .. } => CfKind::State,
            CfTarget::Sample { .. } => CfKind::Sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub f_cf: Signal,
    pub target: CfTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfDirection {
    Upward,
    Downward,
}

/// One unit of trainer feedback on the pair `(state, action)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub f: Signal,
    pub state: Observation,
    pub action: usize,
    pub cf: Option<Counterfactual>,
    pub contrastive_enabled: bool,
}

impl FeedbackEvent {
    pub fn plain(f: Signal, state: Observation, action: usize) -> Self {
        FeedbackEvent {
            f,
            state,
            action,
            cf: None,
            contrastive_enabled: false,
        }
    }

    pub fn with_counterfactual(
        f: Signal,
        state: Observation,
        action: usize,
        cf: Counterfactual,
        contrastive_enabled: bool,
    ) -> Self {
        FeedbackEvent {
            f,
            state,
            action,
            cf: Some(cf),
            contrastive_enabled,
        }
    }

    pub fn direction(&self) -> Option<CfDirection> {
        self.cf.as_ref().map(|cf| match (self.f, cf.f_cf) {
            (Signal::Negative, Signal::Positive) => CfDirection::Upward,
            _ => CfDirection::Downward,
        })
    }

    /// The counterfactual `(state, action)` pair, if any.
    pub fn cf_pair(&self) -> Option<(&Observation, usize)> {
        self.cf.as_ref().map(|cf| match &cf.target {
            CfTarget::Action { action } => (&self.state, *action),
            CfTarget::State { state } => (state, self.action),
            CfTarget::Sample { state, action } => (state, *action),
        })
    }

    /// Checks the structural rules of a counterfactual triple.
    pub fn validate(&self, n_actions: usize, obs_len: usize) -> Result<(), String> {
        if self.action >= n_actions {
            return Err(format!("action {} out of range", self.action));
        }
        if self.state.len() != obs_len {
            return Err(format!(
                "state has length {}, expected {obs_len}",
                self.state.len()
            ));
        }
        let Some(cf) = &self.cf else {
            return Ok(());
        };
        if cf.f_cf == self.f {
            return Err("counterfactual feedback must oppose the factual feedback".into());
        }
        match &cf.target {
            CfTarget::Action { action } => {
                if *action >= n_actions {
                    return Err(format!("counterfactual action {action} out of range"));
                }
                if *action == self.action {
                    return Err("counterfactual action equals the factual action".into());
                }
            }
            CfTarget::State { state } => {
                if state.len() != obs_len {
                    return Err(format!(
                        "counterfactual state has length {}, expected {obs_len}",
                        state.len()
                    ));
                }
            }
            CfTarget::Sample { state, action } => {
                if *action >= n_actions || state.len() != obs_len {
                    return Err("malformed counterfactual sample".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_serialises_as_integer() {
        assert_eq!(serde_json::to_string(&Signal::Negative).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Signal>("1").unwrap(), Signal::Positive);
        assert!(serde_json::from_str::<Signal>("0").is_err());
    }

    #[test]
    fn direction_from_signs() {
        let s = Observation(vec![0.0]);
        let up = FeedbackEvent::with_counterfactual(
            Signal::Negative,
            s.clone(),
            0,
            Counterfactual {
                f_cf: Signal::Positive,
                target: CfTarget::Action { action: 1 },
            },
            true,
        );
        assert_eq!(up.direction(), Some(CfDirection::Upward));
        assert_eq!(up.cf_pair(), Some((&s, 1)));
        assert!(FeedbackEvent::plain(Signal::Positive, s, 0).direction().is_none());
    }

    #[test]
    fn validate_rejects_malformed_triples() {
        let s = Observation(vec![0.0, 1.0]);
        let mk = |f_cf, target| {
            FeedbackEvent::with_counterfactual(
                Signal::Negative,
                s.clone(),
                0,
                Counterfactual { f_cf, target },
                true,
            )
        };
        assert!(mk(Signal::Positive, CfTarget::Action { action: 1 }).validate(2, 2).is_ok());
        assert!(mk(Signal::Negative, CfTarget::Action { action: 1 }).validate(2, 2).is_err());
        assert!(mk(Signal::Positive, CfTarget::Action { action: 0 }).validate(2, 2).is_err());
        assert!(mk(Signal::Positive, CfTarget::Action { action: 5 }).validate(2, 2).is_err());
        let short = CfTarget::State {
            state: Observation(vec![1.0]),
        };
        assert!(mk(Signal::Positive, short).validate(2, 2).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
    }
}
