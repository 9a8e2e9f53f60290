//! Retrieval metrics over run files and the analyses built on consistency scores
//! and rewrites: rank correlation, n-gram diversity, edit distance and passage overlap.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::io::{parse_error, write_atomic};
use crate::retriever::{RankedList, ScoredPassage};
use crate::scoring::{select_indices, ConsistencyScores};

pub const RUN_DEPTH: usize = 100;

/// Ranked lists per query id, as read from or written to a six-column run file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub queries: BTreeMap<String, RankedList>,
}

impl RunFile {
    pub fn insert(&mut self, qid: impl Into<String>, list: RankedList) {
        self.queries.insert(qid.into(), list);
    }

    pub fn get(&self, qid: &str) -> Option<&RankedList> {
        self.queries.get(qid)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// `qid Q0 pid rank score tag` lines, queries in id order.
    pub fn to_lines(&self, tag: &str) -> String {
        let mut out = String::new();
        for (qid, list) in &self.queries {
            for (i, e) in list.entries.iter().enumerate() {
                let _ = writeln!(out, "{qid} Q0 {} {} {} {tag}", e.pid, i + 1, e.score);
            }
        }
        out
    }

    pub fn write(&self, path: &Path, tag: &str) -> Result<()> {
        let body = self.to_lines(tag);
        write_atomic(path, |w| w.write_all(body.as_bytes()))
    }

    /// Parses a run file. Ranks must run 1..n per query and scores must not increase.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rows: BTreeMap<String, Vec<(usize, usize, ScoredPassage)>> = BTreeMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            if f.len() != 6 {
                return Err(parse_error(path, idx + 1, "expected `qid Q0 pid rank score tag`"));
            }
            let rank: usize = f[3].parse().map_err(|_| parse_error(path, idx + 1, "bad rank"))?;
            let score: f64 = f[4].parse().map_err(|_| parse_error(path, idx + 1, "bad score"))?;
            rows.entry(f[0].to_string()).or_default().push((rank, idx + 1, ScoredPassage::new(f[2], score)));
        }
        let mut run = RunFile::default();
        for (qid, mut entries) in rows {
            entries.sort_by_key(|(rank, _, _)| *rank);
            for (i, (rank, line, _)) in entries.iter().enumerate() {
                if *rank != i + 1 {
                    return Err(parse_error(path, *line, format!("query `{qid}`: ranks are not contiguous from 1")));
                }
            }
            let list = RankedList::new(entries.into_iter().map(|(_, _, e)| e).collect())
                .map_err(|e| Error::invalid(format!("{}: query `{qid}`: {e}", path.display())))?;
            run.insert(qid, list);
        }
        Ok(run)
    }
}

/// Reciprocal rank of the first relevant passage; 0 when none is ranked.
pub fn reciprocal_rank(ranked: &[&str], relevant: &BTreeSet<String>) -> f64 {
    ranked
        .iter()
        .position(|p| relevant.contains(*p))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Binary-relevance NDCG at `cutoff`; 0 when there is nothing relevant.
pub fn ndcg(ranked: &[&str], relevant: &BTreeSet<String>, cutoff: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(cutoff)
        .enumerate()
        .filter(|(_, p)| relevant.contains(**p))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..relevant.len().min(cutoff)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

/// Fraction of relevant passages in the top `k`; 0 when there is nothing relevant.
pub fn recall(ranked: &[&str], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let found = ranked.iter().take(k).filter(|p| relevant.contains(**p)).count();
    found as f64 / relevant.len() as f64
}

/// Per-query values of one metric and their mean over judged queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Run queries without any judgment; excluded from the mean.
    pub unjudged: usize,
}

/// Applies `metric` to every judged query. Judged queries missing from the run score 0.
fn per_query_metric<F>(run: &RunFile, qrels: &Qrels, metric: F) -> Result<MetricResult>
where
    F: Fn(&[&str], &BTreeSet<String>) -> f64,
{
    if qrels.is_empty() {
        return Err(Error::invalid("qrels are empty"));
    }
    let unjudged = run.queries.keys().filter(|q| !qrels.is_judged(q)).count();
    let mut per_query = BTreeMap::new();
    for qid in qrels.qids() {
        let relevant = qrels.relevant(qid).expect("judged");
        let ranked: Vec<&str> = run.get(qid).map(|l| l.pids().collect()).unwrap_or_default();
        per_query.insert(qid.to_string(), metric(&ranked, relevant));
    }
    let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MetricResult { per_query, mean, unjudged })
}

pub fn mrr(run: &RunFile, qrels: &Qrels) -> Result<MetricResult> {
    per_query_metric(run, qrels, reciprocal_rank)
}

pub fn ndcg_at(run: &RunFile, qrels: &Qrels, cutoff: usize) -> Result<MetricResult> {
    per_query_metric(run, qrels, |r, rel| ndcg(r, rel, cutoff))
}

pub fn recall_at(run: &RunFile, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    per_query_metric(run, qrels, |r, rel| recall(r, rel, k))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub mrr: f64,
    pub ndcg_3: f64,
    pub recall_10: f64,
    pub recall_100: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: usize,
    pub unjudged_queries: usize,
    pub mean: QueryMetrics,
    pub per_query: BTreeMap<String, QueryMetrics>,
}

impl EvalReport {
    pub fn summary_table(&self) -> String {
        let m = &self.mean;
        let mut out = String::new();
        let _ = writeln!(out, "{:<12}{:>10}", "metric", "value");
        let _ = writeln!(out, "{:<12}{:>10.4}", "MRR", m.mrr);
        let _ = writeln!(out, "{:<12}{:>10.4}", "NDCG@3", m.ndcg_3);
        let _ = writeln!(out, "{:<12}{:>10.4}", "R@10", m.recall_10);
        let _ = writeln!(out, "{:<12}{:>10.4}", "R@100", m.recall_100);
        let _ = writeln!(out, "{:<12}{:>10}", "queries", self.queries);
        let _ = writeln!(out, "{:<12}{:>10}", "unjudged", self.unjudged_queries);
        out
    }
}

/// MRR, NDCG@3, R@10 and R@100 over the judged queries.
pub fn evaluate(run: &RunFile, qrels: &Qrels) -> Result<EvalReport> {
    let mrr = mrr(run, qrels)?;
    let ndcg = ndcg_at(run, qrels, 3)?;
    let r10 = recall_at(run, qrels, 10)?;
    let r100 = recall_at(run, qrels, 100)?;
    let per_query = mrr
        .per_query
        .keys()
        .map(|q| {
            let m = QueryMetrics {
                mrr: mrr.per_query[q],
                ndcg_3: ndcg.per_query[q],
                recall_10: r10.per_query[q],
                recall_100: r100.per_query[q],
            };
            (q.clone(), m)
        })
        .collect();
    Ok(EvalReport {
        queries: mrr.per_query.len(),
        unjudged_queries: mrr.unjudged,
        mean: QueryMetrics { mrr: mrr.mean, ndcg_3: ndcg.mean, recall_10: r10.mean, recall_100: r100.mean },
        per_query,
    })
}

/// Kendall's tau-b. Errors when either input is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("kendall_tau: lengths {} and {} differ", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("kendall_tau needs at least two items"));
    }
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = a[i].total_cmp(&a[j]) as i32;
            let db = b[i].total_cmp(&b[j]) as i32;
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + ties_a) * (concordant + discordant + ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::invalid("kendall_tau is undefined for constant input"));
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Distinct n-grams over total n-grams; 0 when there are fewer than `n` tokens.
pub fn ngram_diversity<S: AsRef<str>>(tokens: &[S], n: usize) -> f64 {
    if n == 0 || tokens.len() < n {
        return 0.0;
    }
    let grams: Vec<Vec<&str>> = tokens.windows(n).map(|w| w.iter().map(AsRef::as_ref).collect()).collect();
    let distinct: HashSet<&Vec<&str>> = grams.iter().collect();
    distinct.len() as f64 / grams.len() as f64
}

/// Minimum insertions, deletions and substitutions turning `a` into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `|top-depth(a) ∩ top-depth(b)| / depth`.
pub fn intersection_ratio(a: &RankedList, b: &RankedList, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(Error::invalid("intersection depth must be >= 1"));
    }
    let top_a: HashSet<&str> = a.top(depth).iter().map(|e| e.pid.as_str()).collect();
    let shared = b.top(depth).iter().filter(|e| top_a.contains(e.pid.as_str())).count();
    Ok(shared as f64 / depth as f64)
}

pub const DIMENSIONS: [&str; 3] = ["rewrite", "retrieval", "response"];

/// Mean pairwise tau between the three consistency-score vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub labels: [String; 3],
    /// `None` when no set had a defined tau for that pair.
    pub matrix: [[Option<f64>; 3]; 3],
    pub sets: usize,
    /// Per-pair count of sets skipped because tau was undefined.
    pub skipped: [[usize; 3]; 3],
}

pub fn preference_correlation_report(sets: &[ConsistencyScores]) -> Result<CorrelationReport> {
    let usable: Vec<&ConsistencyScores> = sets
        .iter()
        .filter(|s| {
            [&s.rw, &s.rt, &s.rp]
                .iter()
                .any(|v| select_indices(v).map(|sel| !sel.degenerate).unwrap_or(false))
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid("correlation report needs at least one non-degenerate scored set"));
    }
    let mut matrix = [[None; 3]; 3];
    let mut skipped = [[0usize; 3]; 3];
    for (i, row) in matrix.iter_mut().enumerate() {
        row[i] = Some(1.0);
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let mut taus = Vec::new();
            for s in &usable {
                let v = [&s.rw, &s.rt, &s.rp];
                match kendall_tau(v[i], v[j]) {
                    Ok(t) => taus.push(t),
                    Err(_) => skipped[i][j] += 1,
                }
            }
            skipped[j][i] = skipped[i][j];
            let mean = (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64);
            matrix[i][j] = mean;
            matrix[j][i] = mean;
        }
    }
    Ok(CorrelationReport {
        labels: DIMENSIONS.map(String::from),
        matrix,
        sets: usable.len(),
        skipped,
    })
}

/// Length, bigram diversity and edit distance of a rewrite against the original query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinguisticStats {
    pub length: f64,
    pub diversity: f64,
    pub edit_distance: f64,
}

pub fn linguistic_stats<S: AsRef<str> + PartialEq>(rewrite: &[S], original: &[S]) -> LinguisticStats {
    LinguisticStats {
        length: rewrite.len() as f64,
        diversity: ngram_diversity(rewrite, 2),
        edit_distance: levenshtein(rewrite, original) as f64,
    }
}

pub fn mean_stats(stats: &[LinguisticStats]) -> LinguisticStats {
    if stats.is_empty() {
        return LinguisticStats::default();
    }
    let n = stats.len() as f64;
    LinguisticStats {
        length: stats.iter().map(|s| s.length).sum::<f64>() / n,
        diversity: stats.iter().map(|s| s.diversity).sum::<f64>() / n,
        edit_distance: stats.iter().map(|s| s.edit_distance).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reciprocal_rank_values() {
        assert_eq!(reciprocal_rank(&["g", "x"], &rel(&["g"])), 1.0);
        assert_eq!(reciprocal_rank(&["a", "b", "c", "g"], &rel(&["g"])), 0.25);
        assert_eq!(reciprocal_rank(&["a", "b"], &rel(&["g"])), 0.0);
    }

    #[test]
    fn ndcg_values() {
        assert_eq!(ndcg(&["g", "x", "y"], &rel(&["g"]), 3), 1.0);
        let v = ndcg(&["x", "g", "y"], &rel(&["g"]), 3);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.63093).abs() < 1e-5);
        let v = ndcg(&["g1", "x", "g2"], &rel(&["g1", "g2"]), 3);
        assert!((v - 1.5 / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-12);
        assert!((v - 0.91972).abs() < 1e-5);
        assert_eq!(ndcg(&["x"], &rel(&[]), 3), 0.0);
        assert_eq!(ndcg(&["x", "y", "z", "g"], &rel(&["g"]), 3), 0.0);
    }

    #[test]
    fn recall_values() {
        let ranked: Vec<String> = (0..100).map(|i| format!("p{i}")).collect();
        let r: Vec<&str> = ranked.iter().map(String::as_str).collect();
        assert_eq!(recall(&r, &rel(&["p3", "p50"]), 10), 0.5);
        assert_eq!(recall(&r, &rel(&["p3", "p50"]), 100), 1.0);
        assert_eq!(recall(&r, &rel(&["zz"]), 100), 0.0);
    }

    fn run(entries: &[(&str, &[&str])]) -> RunFile {
        let mut run = RunFile::default();
        for (qid, pids) in entries {
            let n = pids.len();
            run.insert(
                *qid,
                RankedList::new(pids.iter().enumerate().map(|(i, p)| ScoredPassage::new(*p, (n - i) as f64)).collect())
                    .unwrap(),
            );
        }
        run
    }

    #[test]
    fn judged_and_unjudged_queries() {
        let r = run(&[("q1", &["a", "g"]), ("q2", &["g"]), ("q9", &["g"])]);
        let mut qrels = Qrels::default();
        qrels.insert("q1", "g", true);
        qrels.insert("q2", "g", true);
        qrels.insert("q3", "g", true);
        let m = mrr(&r, &qrels).unwrap();
        assert_eq!(m.unjudged, 1);
        assert_eq!(m.per_query.len(), 3);
        assert_eq!(m.per_query["q3"], 0.0);
        assert!((m.mean - 1.5 / 3.0).abs() < 1e-12);
        assert!(mrr(&r, &Qrels::default()).is_err());
    }

    #[test]
    fn metrics_ignore_score_values() {
        let mut qrels = Qrels::default();
        qrels.insert("q", "b", true);
        let a = run(&[("q", &["a", "b", "c"])]);
        let mut b = a.clone();
        for (i, e) in b.queries.get_mut("q").unwrap().entries.iter_mut().enumerate() {
            e.score = 1000.0 - i as f64 * 0.001;
        }
        assert_eq!(evaluate(&a, &qrels).unwrap(), evaluate(&b, &qrels).unwrap());
    }

    #[test]
    fn run_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        let mut r = run(&[("q1", &["a", "b"]), ("q2", &["c"])]);
        r.queries.get_mut("q1").unwrap().entries[1].score = 0.1 + 0.2;
        r.write(&path, "test").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "q1 Q0 a 1 2 test");
        assert_eq!(RunFile::load(&path).unwrap(), r);

        std::fs::write(&path, "q1 Q0 a 1 1.0 t\nq1 Q0 b 3 0.5 t\n").unwrap();
        assert!(RunFile::load(&path).is_err());
        std::fs::write(&path, "q1 Q0 a 1 1.0 t\nq1 Q0 b 2 1.5 t\n").unwrap();
        assert!(RunFile::load(&path).is_err());
        std::fs::write(&path, "q1 Q0 a 1\n").unwrap();
        assert!(RunFile::load(&path).is_err());
    }

    #[test]
    fn kendall_spot_values() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn kendall_tau_b_with_ties() {
        // a = (1,1,2,3), b = (1,2,2,3): pairs (0,1) tie in a, (1,2) tie in b,
        // (0,2),(0,3),(1,3),(2,3) concordant.
        let t = kendall_tau(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert!((t - 4.0 / 25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diversity_values() {
        assert!((ngram_diversity(&["a", "b", "a", "b"], 2) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(ngram_diversity(&["a", "b", "c", "d"], 2), 1.0);
        assert_eq!(ngram_diversity(&["a"], 2), 0.0);
    }

    #[test]
    fn levenshtein_values() {
        let kitten: Vec<char> = "kitten".chars().collect();
        let sitting: Vec<char> = "sitting".chars().collect();
        assert_eq!(levenshtein(&kitten, &sitting), 3);
        assert_eq!(levenshtein(&kitten, &kitten), 0);
        assert_eq!(levenshtein(&kitten, &[]), 6);
        assert_eq!(levenshtein(&["when", "was", "it"], &["when", "was", "hello", "released"]), 2);
    }

    #[test]
    fn intersection_values() {
        let a = run(&[("q", &["a", "b", "c"])]).queries["q"].clone();
        let b = run(&[("q", &["c", "x", "a"])]).queries["q"].clone();
        assert_eq!(intersection_ratio(&a, &a, 3).unwrap(), 1.0);
        assert!((intersection_ratio(&a, &b, 3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(intersection_ratio(&a, &run(&[("q", &["z"])]).queries["q"], 3).unwrap(), 0.0);
        assert!(intersection_ratio(&a, &b, 0).is_err());
        let l1: Vec<String> = (0..100).map(|i| format!("p{i}")).collect();
        let l2: Vec<String> = (37..137).map(|i| format!("p{i}")).collect();
        let r1: Vec<&str> = l1.iter().map(String::as_str).collect();
        let r2: Vec<&str> = l2.iter().map(String::as_str).collect();
        let x = run(&[("a", &r1), ("b", &r2)]);
        assert!((intersection_ratio(&x.queries["a"], &x.queries["b"], 100).unwrap() - 0.63).abs() < 1e-12);
    }

    #[test]
    fn correlation_report_cases() {
        let same = ConsistencyScores { rw: vec![1.0, 2.0, 3.0], rt: vec![1.0, 2.0, 3.0], rp: vec![1.0, 2.0, 3.0] };
        let r = preference_correlation_report(&[same]).unwrap();
        assert!(r.matrix.iter().flatten().all(|v| *v == Some(1.0)));

        let rev = ConsistencyScores { rw: vec![1.0, 2.0, 3.0], rt: vec![3.0, 2.0, 1.0], rp: vec![1.0, 3.0, 2.0] };
        let r = preference_correlation_report(&[rev]).unwrap();
        assert_eq!(r.matrix[0][1], Some(-1.0));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r.matrix[i][j], r.matrix[j][i]);
            }
        }

        let flat_rt = ConsistencyScores { rw: vec![1.0, 2.0], rt: vec![5.0, 5.0], rp: vec![2.0, 1.0] };
        let r = preference_correlation_report(&[flat_rt]).unwrap();
        assert_eq!(r.skipped[0][1], 1);
        assert_eq!(r.matrix[0][1], None);
        assert_eq!(r.matrix[0][2], Some(-1.0));
        assert!(preference_correlation_report(&[]).is_err());
    }

    /// Textbook full-table edit distance.
    fn oracle_levenshtein(a: &[u8], b: &[u8]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn levenshtein_metric_properties(
            a in prop::collection::vec(0u8..4, 0..10),
            b in prop::collection::vec(0u8..4, 0..10),
            c in prop::collection::vec(0u8..4, 0..10),
        ) {
            let ab = levenshtein(&a, &b);
            prop_assert_eq!(ab, oracle_levenshtein(&a, &b));
            prop_assert_eq!(ab, levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
        }

        #[test]
        fn kendall_self_and_symmetry(
            a in prop::collection::vec(0u8..5, 2..12),
            b in prop::collection::vec(0u8..5, 2..12),
        ) {
            let n = a.len().min(b.len());
            let a: Vec<f64> = a[..n].iter().map(|&x| x as f64).collect();
            let b: Vec<f64> = b[..n].iter().map(|&x| x as f64).collect();
            if a.iter().any(|&x| x != a[0]) {
                prop_assert!((kendall_tau(&a, &a).unwrap() - 1.0).abs() < 1e-12);
            }
            match (kendall_tau(&a, &b), kendall_tau(&b, &a)) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x, y);
                    prop_assert!((-1.0..=1.0).contains(&x));
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric definedness"),
            }
        }

        #[test]
        fn diversity_in_unit_interval(tokens in prop::collection::vec("[a-c]", 2..15)) {
            let d = ngram_diversity(&tokens, 2);
            prop_assert!(d > 0.0 && d <= 1.0);
        }
    }
}
