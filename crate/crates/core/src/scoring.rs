//! Self-consistency scores over a candidate set and chosen/rejected selection.
//!
//! For K candidates, each score averages agreement with the other K − 1:
//!
//! - rewrite:   mean similarity of `rq_i` to every other rewrite, plus `len_i / max len`
//! - retrieval: mean size of the intersection of retrieved passage sets
//! - response:  mean similarity of `rs_i` to every other response

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Candidate, CandidateSet, TurnKey};
use crate::error::{Error, Result};
use crate::preference::PreferenceTag;
use crate::retriever::Tokenizer;
use crate::similarity::{SimMatrix, Similarity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyScores {
    pub rw: Vec<f64>,
    pub rt: Vec<f64>,
    pub rp: Vec<f64>,
}

impl ConsistencyScores {
    pub fn k(&self) -> usize {
        self.rw.len()
    }

    pub fn for_tag(&self, tag: PreferenceTag) -> &[f64] {
        match tag {
            PreferenceTag::Rewrite => &self.rw,
            PreferenceTag::Retrieval => &self.rt,
            PreferenceTag::Response => &self.rp,
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&p| v[p]).collect();
        Self { rw: pick(&self.rw), rt: pick(&self.rt), rp: pick(&self.rp) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSelection {
    pub chosen: usize,
    pub rejected: usize,
    pub degenerate: bool,
}

fn require_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("consistency scores need K >= 2, got {k}")));
    }
    Ok(())
}

/// Sums in sorted order so the result does not depend on candidate order.
fn mean_off_diagonal(sims: &SimMatrix, i: usize) -> f64 {
    let k = sims.size();
    let mut row: Vec<f64> = (0..k).filter(|&j| j != i).map(|j| sims.get(i, j)).collect();
    row.sort_by(f64::total_cmp);
    row.iter().sum::<f64>() / (k - 1) as f64
}

/// Rewrite score: mean similarity to the other rewrites plus the length ratio to the longest.
pub fn rewrite_score(sims: &SimMatrix, lens: &[usize]) -> Result<Vec<f64>> {
    let k = lens.len();
    require_k(k)?;
    if sims.size() != k {
        return Err(Error::invalid(format!("similarity matrix is {0}x{0}, expected K = {k}", sims.size())));
    }
    if let Some(i) = lens.iter().position(|&l| l == 0) {
        return Err(Error::invalid(format!("rewrite {i} has zero tokens")));
    }
    let longest = *lens.iter().max().expect("K >= 2") as f64;
    Ok((0..k).map(|i| mean_off_diagonal(sims, i) + lens[i] as f64 / longest).collect())
}

/// Retrieval score: mean `|P_i ∩ P_j|` over the other candidates, with set semantics.
pub fn retrieval_score<S: AsRef<str>>(pid_lists: &[Vec<S>]) -> Result<Vec<f64>> {
    let k = pid_lists.len();
    require_k(k)?;
    let sets: Vec<HashSet<&str>> =
        pid_lists.iter().map(|l| l.iter().map(AsRef::as_ref).collect()).collect();
    let mut overlap = vec![vec![0usize; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let (small, large) = if sets[i].len() <= sets[j].len() { (&sets[i], &sets[j]) } else { (&sets[j], &sets[i]) };
            let n = small.iter().filter(|p| large.contains(*p)).count();
            overlap[i][j] = n;
            overlap[j][i] = n;
        }
    }
    Ok((0..k)
        .map(|i| {
            let total: usize = (0..k).filter(|&j| j != i).map(|j| overlap[i][j]).sum();
            total as f64 / (k - 1) as f64
        })
        .collect())
}

/// Response score: mean similarity of a response to the other responses.
pub fn response_score(sims: &SimMatrix) -> Result<Vec<f64>> {
    let k = sims.size();
    require_k(k)?;
    Ok((0..k).map(|i| mean_off_diagonal(sims, i)).collect())
}

/// First index of the maximum and first index of the minimum.
pub fn select_indices(scores: &[f64]) -> Result<PairSelection> {
    require_k(scores.len())?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("score {i} is not finite")));
    }
    let mut chosen = 0;
    let mut rejected = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[chosen] {
            chosen = i;
        }
        if s < scores[rejected] {
            rejected = i;
        }
    }
    if scores[chosen] == scores[rejected] {
        return Ok(PairSelection { chosen: 0, rejected: 0, degenerate: true });
    }
    Ok(PairSelection { chosen, rejected, degenerate: false })
}

/// Picks the chosen (argmax) and rejected (argmin) candidates.
pub fn select_pair<'a>(
    scores: &[f64],
    candidates: &'a [Candidate],
) -> Result<(&'a Candidate, &'a Candidate, PairSelection)> {
    if scores.len() != candidates.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} candidates",
            scores.len(),
            candidates.len()
        )));
    }
    let sel = select_indices(scores)?;
    Ok((&candidates[sel.chosen], &candidates[sel.rejected], sel))
}

/// Scores every dimension of one candidate set.
///
/// Lengths count tokens under `tokenizer`; similarity comes from `backend`.
pub fn score_candidate_set(
    set: &CandidateSet,
    backend: &dyn Similarity,
    tokenizer: &Tokenizer,
) -> Result<ConsistencyScores> {
    set.validate(None)?;
    let rqs: Vec<String> = set.candidates.iter().map(|c| c.rq.clone()).collect();
    let rss: Vec<String> = set.candidates.iter().map(|c| c.rs.clone()).collect();
    let lens: Vec<usize> = rqs.iter().map(|q| tokenizer.tokenize(q).len()).collect();
    let rq_sims = backend.sim_matrix(&rqs)?;
    let rs_sims = backend.sim_matrix(&rss)?;
    let pid_lists: Vec<&Vec<String>> = set.candidates.iter().map(|c| &c.pids).collect();
    let pid_lists: Vec<Vec<&str>> = pid_lists.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
    Ok(ConsistencyScores {
        rw: rewrite_score(&rq_sims, &lens).map_err(|e| Error::invalid(format!("{}: {e}", set.turn_key)))?,
        rt: retrieval_score(&pid_lists)?,
        rp: response_score(&rs_sims)?,
    })
}

/// Frequency of each candidate's normalized rewrite among all candidates.
/// Used only as an analysis comparator against the similarity-based scores.
pub fn majority_vote_scores(candidates: &[Candidate]) -> Vec<f64> {
    let norm: Vec<String> = candidates
        .iter()
        .map(|c| c.rq.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
        .collect();
    norm.iter().map(|a| norm.iter().filter(|b| *b == a).count() as f64).collect()
}

/// Per-dimension selections for one scored turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selections {
    pub rewrite: PairSelection,
    pub retrieval: PairSelection,
    pub response: PairSelection,
}

impl Selections {
    pub fn from_scores(scores: &ConsistencyScores) -> Result<Self> {
        Ok(Self {
            rewrite: select_indices(&scores.rw)?,
            retrieval: select_indices(&scores.rt)?,
            response: select_indices(&scores.rp)?,
        })
    }

    pub fn for_tag(&self, tag: PreferenceTag) -> PairSelection {
        match tag {
            PreferenceTag::Rewrite => self.rewrite,
            PreferenceTag::Retrieval => self.retrieval,
            PreferenceTag::Response => self.response,
        }
    }
}

/// One line of the scores export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub turn_key: TurnKey,
    pub rw: Vec<f64>,
    pub rt: Vec<f64>,
    pub rp: Vec<f64>,
    pub selected: Selections,
}

impl ScoreRecord {
    pub fn new(turn_key: TurnKey, scores: &ConsistencyScores) -> Result<Self> {
        Ok(Self {
            turn_key,
            selected: Selections::from_scores(scores)?,
            rw: scores.rw.clone(),
            rt: scores.rt.clone(),
            rp: scores.rp.clone(),
        })
    }

    pub fn scores(&self) -> ConsistencyScores {
        ConsistencyScores { rw: self.rw.clone(), rt: self.rt.clone(), rp: self.rp.clone() }
    }
}
