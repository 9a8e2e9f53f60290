//! Combining the per-preference rewrites at inference time.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retriever::{RankedList, ScoredPassage};

pub const RRF_K: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedQuery {
    pub parts: Vec<String>,
    pub text: String,
}

/// Trims each part and joins with single spaces, keeping the given order.
pub fn concat_queries<S: AsRef<str>>(parts: &[S]) -> Result<FusedQuery> {
    if parts.is_empty() {
        return Err(Error::invalid("nothing to concatenate"));
    }
    let parts: Vec<String> = parts.iter().map(|p| p.as_ref().trim().to_string()).collect();
    if let Some(i) = parts.iter().position(String::is_empty) {
        return Err(Error::invalid(format!("query part {i} is empty")));
    }
    let text = parts.join(" ");
    Ok(FusedQuery { parts, text })
}

/// Appends a pseudo response to the query; an empty response leaves the query unchanged.
pub fn expand_query(query: &str, pseudo_response: &str) -> Result<String> {
    if query.trim().is_empty() {
        return Err(Error::invalid("cannot expand an empty query"));
    }
    let response = pseudo_response.trim();
    if response.is_empty() {
        Ok(query.to_string())
    } else {
        Ok(format!("{query} {response}"))
    }
}

/// Reciprocal rank fusion: `score(d) = Σ 1 / (k + rank(d))` with 1-based ranks.
///
/// Contributions are summed smallest first so the result is independent of
/// list order. Ties go to the smaller passage id.
pub fn rrf(lists: &[RankedList], k: f64) -> Result<RankedList> {
    if lists.is_empty() {
        return Err(Error::invalid("rrf needs at least one ranked list"));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid(format!("rrf constant must be > 0, got {k}")));
    }
    let mut contributions: HashMap<&str, Vec<f64>> = HashMap::new();
    for list in lists {
        for (rank0, entry) in list.entries.iter().enumerate() {
            contributions.entry(entry.pid.as_str()).or_default().push(1.0 / (k + (rank0 + 1) as f64));
        }
    }
    let fused = contributions
        .into_iter()
        .map(|(pid, mut parts)| {
            parts.sort_by(f64::total_cmp);
            ScoredPassage::new(pid, parts.iter().sum())
        })
        .collect();
    Ok(RankedList::from_unsorted(fused))
}
