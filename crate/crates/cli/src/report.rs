//! Evaluate, analyze and mdpo-loss.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use cqr_core::corpus::{load_candidates, load_dialogues, load_qrels, CandidateSet};
use cqr_core::eval::{
    evaluate, intersection_ratio, kendall_tau, linguistic_stats, mean_stats, preference_correlation_report,
    CorrelationReport, EvalReport, LinguisticStats, DIMENSIONS,
};
use cqr_core::io::read_jsonl;
use cqr_core::preference::{mdpo_loss, mdpo_loss_grad, MdpoInputs};
use cqr_core::retriever::{InvertedIndex, RankedList, ScoredPassage, Tokenizer};
use cqr_core::scoring::{majority_vote_scores, ScoreRecord};
use cqr_core::eval::RunFile;
use serde::{Deserialize, Serialize};

use crate::config::*;
use crate::error::{usage, CliResult};
use crate::pipeline::{write_json, RewriteRecord};

/// Run query ids that have no judgments, sorted.
pub fn orphan_queries(run: &RunFile, qrels: &cqr_core::corpus::Qrels) -> Vec<String> {
    run.queries.keys().filter(|q| !qrels.is_judged(q)).cloned().collect()
}

pub fn cmd_evaluate(run_path: &Path, qrels_path: &Path, report: &Path, allow_unjudged: bool) -> CliResult<EvalReport> {
    let run = RunFile::load(run_path)?;
    let qrels = load_qrels(qrels_path)?;
    if qrels.is_empty() {
        return Err(usage(format!("{} has no judgments", qrels_path.display())));
    }
    let orphans = orphan_queries(&run, &qrels);
    if !orphans.is_empty() && !allow_unjudged {
        return Err(usage(format!(
            "{} run queries have no judgments in {}: {}",
            orphans.len(),
            qrels_path.display(),
            orphans.join(", ")
        )));
    }
    let result = evaluate(&run, &qrels)?;
    write_json(report, &result)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagIntersection {
    pub a: String,
    pub b: String,
    pub mean: f64,
    pub turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub correlation: CorrelationReport,
    /// Mean tau between majority-vote counts and each consistency score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majority_vote: Option<BTreeMap<String, Option<f64>>>,
    /// Means per inference tag, plus the original queries under `original`.
    pub linguistic: BTreeMap<String, LinguisticStats>,
    /// Mean pairwise overlap of candidates' top-t passages.
    pub candidate_intersection: Option<f64>,
    /// Mean pairwise overlap of top-t passages retrieved for each tag's rewrite.
    pub tag_intersections: Vec<TagIntersection>,
    pub depth: usize,
}

impl AnalysisReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let c = &self.correlation;
        let _ = writeln!(out, "kendall tau over {} scored sets", c.sets);
        let _ = writeln!(out, "{:<10}{:>10}{:>10}{:>10}", "", c.labels[0], c.labels[1], c.labels[2]);
        for (label, row) in c.labels.iter().zip(&c.matrix) {
            let cells: String = row
                .iter()
                .map(|v| v.map_or(format!("{:>10}", "n/a"), |v| format!("{v:>10.4}")))
                .collect();
            let _ = writeln!(out, "{label:<10}{cells}");
        }
        let _ = writeln!(out, "{:<10}{:>10}{:>10}{:>10}", "tag", "length", "bigram", "edit");
        for (tag, s) in &self.linguistic {
            let _ = writeln!(out, "{tag:<10}{:>10.3}{:>10.3}{:>10.3}", s.length, s.diversity, s.edit_distance);
        }
        if let Some(v) = self.candidate_intersection {
            let _ = writeln!(out, "candidate top-{} intersection {v:.4}", self.depth);
        }
        for t in &self.tag_intersections {
            let _ = writeln!(out, "{} vs {} top-{} intersection {:.4}", t.a, t.b, self.depth, t.mean);
        }
        out
    }
}

fn ranked(pids: &[String]) -> RankedList {
    let n = pids.len();
    RankedList { entries: pids.iter().enumerate().map(|(i, p)| ScoredPassage::new(p.clone(), (n - i) as f64)).collect() }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn candidate_intersection(sets: &[CandidateSet], depth: usize) -> CliResult<Option<f64>> {
    let mut per_set = Vec::new();
    for set in sets {
        let lists: Vec<RankedList> = set.candidates.iter().map(|c| ranked(&c.pids)).collect();
        let mut pairs = Vec::new();
        for i in 0..lists.len() {
            for j in i + 1..lists.len() {
                pairs.push(intersection_ratio(&lists[i], &lists[j], depth)?);
            }
        }
        per_set.extend(mean(&pairs));
    }
    Ok(mean(&per_set))
}

fn majority_vote_taus(sets: &[CandidateSet], scores: &[ScoreRecord]) -> BTreeMap<String, Option<f64>> {
    let by_key: HashMap<_, _> = sets.iter().map(|s| (&s.turn_key, s)).collect();
    let mut taus: [Vec<f64>; 3] = Default::default();
    for rec in scores {
        let Some(set) = by_key.get(&rec.turn_key) else { continue };
        let votes = majority_vote_scores(&set.candidates);
        for (i, dim) in [&rec.rw, &rec.rt, &rec.rp].into_iter().enumerate() {
            if let Ok(t) = kendall_tau(&votes, dim) {
                taus[i].push(t);
            }
        }
    }
    DIMENSIONS.iter().zip(&taus).map(|(d, t)| (d.to_string(), mean(t))).collect()
}

pub fn cmd_analyze(config: &PipelineConfig, majority_vote: bool) -> CliResult<AnalysisReport> {
    let scores_path = config.output(SCORES_FILE);
    if !scores_path.exists() {
        return Err(usage(format!("{} not found; run `cqr construct` first", scores_path.display())));
    }
    let scores: Vec<ScoreRecord> = read_jsonl(&scores_path)?;
    let sets = load_candidates(&config.output(CANDIDATES_FILE))?;
    let turns = load_dialogues(&config.dialogues)?;
    let known: std::collections::HashSet<_> = turns.iter().map(|t| t.key()).collect();
    let orphans: Vec<String> =
        scores.iter().filter(|s| !known.contains(&s.turn_key)).map(|s| s.turn_key.to_string()).collect();
    if !orphans.is_empty() {
        return Err(usage(format!("scored turns missing from {}: {}", config.dialogues.display(), orphans.join(", "))));
    }
    let correlation = preference_correlation_report(&scores.iter().map(ScoreRecord::scores).collect::<Vec<_>>())?;
    let tokenizer = Tokenizer::new(&config.retriever);

    let rewrites_path = config.output(REWRITES_FILE);
    let rewrites: Vec<RewriteRecord> = if rewrites_path.exists() { read_jsonl(&rewrites_path)? } else { Vec::new() };
    let originals: HashMap<_, _> = turns.iter().map(|t| (t.key(), tokenizer.tokenize(&t.query))).collect();
    let mut linguistic = BTreeMap::new();
    let original_stats: Vec<LinguisticStats> =
        turns.iter().map(|t| linguistic_stats(&originals[&t.key()], &originals[&t.key()])).collect();
    linguistic.insert("original".to_string(), mean_stats(&original_stats));
    let mut per_tag: BTreeMap<String, Vec<LinguisticStats>> = BTreeMap::new();
    for rec in &rewrites {
        let original = originals
            .get(&rec.turn_key)
            .ok_or_else(|| usage(format!("rewritten turn {} missing from dialogues", rec.turn_key)))?;
        for r in &rec.rewrites {
            per_tag.entry(r.tag.name().to_string()).or_default().push(linguistic_stats(&tokenizer.tokenize(&r.text), original));
        }
    }
    linguistic.extend(per_tag.iter().map(|(tag, stats)| (tag.clone(), mean_stats(stats))));

    let index_path = config.output(INDEX_FILE);
    let mut tag_intersections = Vec::new();
    if !rewrites.is_empty() && index_path.exists() {
        let index = InvertedIndex::load(&index_path, &config.retriever)?;
        let mut acc: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        let mut names = Vec::new();
        for rec in &rewrites {
            let lists: Vec<RankedList> =
                rec.rewrites.iter().map(|r| index.search(&r.text, config.t)).collect();
            names = rec.rewrites.iter().map(|r| r.tag.name().to_string()).collect();
            for i in 0..lists.len() {
                for j in i + 1..lists.len() {
                    acc.entry((i, j)).or_default().push(intersection_ratio(&lists[i], &lists[j], config.t)?);
                }
            }
        }
        tag_intersections = acc
            .into_iter()
            .map(|((i, j), v)| TagIntersection { a: names[i].clone(), b: names[j].clone(), mean: mean(&v).unwrap_or(0.0), turns: v.len() })
            .collect();
    }

    let report = AnalysisReport {
        correlation,
        majority_vote: majority_vote.then(|| majority_vote_taus(&sets, &scores)),
        linguistic,
        candidate_intersection: candidate_intersection(&sets, config.t)?,
        tag_intersections,
        depth: config.t,
    };
    write_json(&config.output(ANALYSIS_FILE), &report)?;
    Ok(report)
}

pub struct LossOutcome {
    pub loss: f64,
    pub margin: f64,
    pub grad: f64,
}

pub fn cmd_mdpo_loss(inputs: MdpoInputs) -> CliResult<LossOutcome> {
    let loss = mdpo_loss(&inputs)?;
    let margin = inputs.margin();
    Ok(LossOutcome { loss, margin, grad: mdpo_loss_grad(margin, inputs.beta) })
}
