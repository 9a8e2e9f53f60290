//! Prefix-tagged preference records and the multi-faceted DPO objective.
//!
//! A training prompt is `tag ⊕ instruction ⊕ history ⊕ query`, one line each.
//! The loss for one record is the logistic loss of the β-scaled difference in
//! policy/reference log-ratios between the chosen and rejected rewrites:
//!
//! ```text
//! L = −log σ(β·[(log π(rq+) − log π_ref(rq+)) − (log π(rq−) − log π_ref(rq−))])
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{serialize_history, CandidateSet, DialogueTurn, TurnKey};
use crate::error::{Error, Result};
use crate::scoring::{select_indices, ConsistencyScores};

pub const REWRITE_INSTRUCTION: &str =
    "Please rewrite the last query of the following conversation to make it more complete.";

pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PreferenceTag {
    Rewrite,
    Retrieval,
    Response,
}

impl PreferenceTag {
    /// Export and inference order.
    pub const ALL: [PreferenceTag; 3] = [Self::Rewrite, Self::Retrieval, Self::Response];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rewrite => "[REWRITE]",
            Self::Retrieval => "[RETRIEVAL]",
            Self::Response => "[RESPONSE]",
        }
    }

    /// Lowercase name without brackets, for file names and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            Self::Rewrite => "rewrite",
            Self::Retrieval => "retrieval",
            Self::Response => "response",
        }
    }
}

impl fmt::Display for PreferenceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PreferenceTag {
    type Err = Error;

    /// Accepts the bracketed tag or its bare lowercase name.
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s || t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preference tag `{s}`")))
    }
}

impl Serialize for PreferenceTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PreferenceTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `tag\ninstruction\nhistory`.
pub fn build_prompt(prefix: PreferenceTag, turn: &DialogueTurn) -> String {
    format!("{}\n{}\n{}", prefix.as_str(), REWRITE_INSTRUCTION, serialize_history(turn))
}

/// Recovers the history rendering from a prompt built by [`build_prompt`].
pub fn strip_prompt(prompt: &str) -> Option<(PreferenceTag, &str)> {
    let (tag, rest) = prompt.split_once('\n')?;
    let tag = tag.parse().ok()?;
    let body = rest.strip_prefix(REWRITE_INSTRUCTION)?.strip_prefix('\n')?;
    Some((tag, body))
}

/// One training instance. Only the four trainer-facing fields are serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub prefix: PreferenceTag,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    #[serde(skip)]
    pub turn_key: Option<TurnKey>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmittedRecords {
    pub records: Vec<PreferenceRecord>,
    /// Dimensions skipped because every score tied or chosen and rejected texts coincide.
    pub skipped: Vec<PreferenceTag>,
}

/// Emits up to three records for one turn, in `[REWRITE]`, `[RETRIEVAL]`, `[RESPONSE]` order.
pub fn emit_preference_records(
    set: &CandidateSet,
    scores: &ConsistencyScores,
    turn: &DialogueTurn,
) -> Result<EmittedRecords> {
    if scores.k() != set.k() || scores.rt.len() != set.k() || scores.rp.len() != set.k() {
        return Err(Error::invalid(format!(
            "{}: scores for {} candidates, set has {}",
            set.turn_key,
            scores.k(),
            set.k()
        )));
    }
    let mut out = EmittedRecords::default();
    for tag in PreferenceTag::ALL {
        let sel = select_indices(scores.for_tag(tag))?;
        let chosen = &set.candidates[sel.chosen].rq;
        let rejected = &set.candidates[sel.rejected].rq;
        if sel.degenerate || chosen == rejected {
            out.skipped.push(tag);
            continue;
        }
        out.records.push(PreferenceRecord {
            prefix: tag,
            prompt: build_prompt(tag, turn),
            chosen: chosen.clone(),
            rejected: rejected.clone(),
            turn_key: Some(set.turn_key.clone()),
        });
    }
    if !out.skipped.is_empty() {
        log::debug!("{}: skipped {} degenerate dimension(s)", set.turn_key, out.skipped.len());
    }
    Ok(out)
}

/// Sequence log-probabilities of the chosen (`pos`) and rejected (`neg`) rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpoInputs {
    pub logp_theta_pos: f64,
    pub logp_ref_pos: f64,
    pub logp_theta_neg: f64,
    pub logp_ref_neg: f64,
    pub beta: f64,
}

impl MdpoInputs {
    fn validate(&self) -> Result<()> {
        let logps = [
            ("logp_theta_pos", self.logp_theta_pos),
            ("logp_ref_pos", self.logp_ref_pos),
            ("logp_theta_neg", self.logp_theta_neg),
            ("logp_ref_neg", self.logp_ref_neg),
        ];
        for (name, v) in logps {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} is not finite")));
            }
            if v > 0.0 {
                return Err(Error::invalid(format!("{name} = {v} is not a log-probability")));
            }
        }
        check_beta(self.beta)
    }

    /// `(log π(rq+) − log π_ref(rq+)) − (log π(rq−) − log π_ref(rq−))`.
    pub fn margin(&self) -> f64 {
        (self.logp_theta_pos - self.logp_ref_pos) - (self.logp_theta_neg - self.logp_ref_neg)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be > 0, got {beta}")));
    }
    Ok(())
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn mdpo_loss(inputs: &MdpoInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(mdpo_loss_from_margin(inputs.margin(), inputs.beta))
}

/// `−log σ(β·margin)`.
pub fn mdpo_loss_from_margin(margin: f64, beta: f64) -> f64 {
    softplus(-beta * margin)
}

/// d loss / d margin = `−β·σ(−β·margin)`.
pub fn mdpo_loss_grad(margin: f64, beta: f64) -> f64 {
    -beta * sigmoid(-beta * margin)
}

/// `β·(log π_θ − log π_ref)`.
pub fn implicit_reward(logp_theta: f64, logp_ref: f64, beta: f64) -> Result<f64> {
    if !logp_theta.is_finite() || !logp_ref.is_finite() {
        return Err(Error::invalid("log-probabilities must be finite"));
    }
    check_beta(beta)?;
    Ok(beta * (logp_theta - logp_ref))
}
