//! Passage collections, dialogue turns, candidate sets and relevance judgments.
//!
//! Every record type maps one-to-one onto a newline-delimited JSON object, so
//! large collections can be streamed line by line.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_error, write_jsonl};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

/// An immutable passage collection with id lookup.
#[derive(Debug, Clone, Default)]
pub struct Collection {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl Collection {
    pub fn new(passages: Vec<Passage>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (idx, p) in passages.iter().enumerate() {
            validate_passage(p)?;
            if by_id.insert(p.id.clone(), idx).is_some() {
                return Err(Error::DuplicatePassage(p.id.clone()));
            }
        }
        Ok(Self { passages, by_id })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Passage> {
        self.passages.iter()
    }
}

fn validate_passage(p: &Passage) -> Result<()> {
    if p.id.is_empty() {
        return Err(Error::invalid("passage id is empty"));
    }
    if p.text.is_empty() {
        return Err(Error::invalid(format!("passage `{}` has empty text", p.id)));
    }
    Ok(())
}

/// Loads a JSONL passage file (`{"id", "text"}` per line).
pub fn load_corpus(path: &Path) -> Result<Collection> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut passages = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Passage =
            serde_json::from_str(&line).map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        validate_passage(&p).map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        if !seen.insert(p.id.clone()) {
            return Err(Error::DuplicatePassage(p.id));
        }
        passages.push(p);
    }
    if passages.is_empty() {
        log::warn!("{}: corpus is empty", path.display());
    } else {
        log::info!("{}: loaded {} passages", path.display(), passages.len());
    }
    Collection::new(passages)
}

pub fn write_corpus(path: &Path, collection: &Collection) -> Result<()> {
    write_jsonl(path, collection.passages())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPair {
    pub q: String,
    pub a: String,
}

impl HistoryPair {
    pub fn new(q: impl Into<String>, a: impl Into<String>) -> Self {
        Self { q: q.into(), a: a.into() }
    }
}

/// Identifies one turn of one conversation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TurnKey {
    pub conv_id: String,
    pub turn_id: u32,
}

impl TurnKey {
    pub fn new(conv_id: impl Into<String>, turn_id: u32) -> Self {
        Self { conv_id: conv_id.into(), turn_id }
    }

    /// Query id used in run and qrels files.
    pub fn qid(&self) -> String {
        format!("{}_{}", self.conv_id, self.turn_id)
    }
}

impl fmt::Display for TurnKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.conv_id, self.turn_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub conv_id: String,
    pub turn_id: u32,
    pub query: String,
    #[serde(default)]
    pub history: Vec<HistoryPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_pids: Option<BTreeSet<String>>,
}

impl DialogueTurn {
    pub fn new(conv_id: impl Into<String>, turn_id: u32, query: impl Into<String>) -> Self {
        Self {
            conv_id: conv_id.into(),
            turn_id,
            query: query.into(),
            history: Vec::new(),
            gold_pids: None,
        }
    }

    pub fn with_history(mut self, history: Vec<HistoryPair>) -> Self {
        self.history = history;
        self
    }

    pub fn key(&self) -> TurnKey {
        TurnKey::new(self.conv_id.clone(), self.turn_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.turn_id < 1 {
            return Err(Error::invalid(format!("{}: turn_id must be >= 1", self.key())));
        }
        if self.query.trim().is_empty() {
            return Err(Error::invalid(format!("{}: query is empty", self.key())));
        }
        Ok(())
    }

    /// Checks gold ids against a collection.
    pub fn check_gold(&self, collection: &Collection) -> Result<()> {
        if let Some(gold) = &self.gold_pids {
            if let Some(missing) = gold.iter().find(|id| !collection.contains(id)) {
                return Err(Error::invalid(format!(
                    "{}: gold passage `{missing}` not in collection",
                    self.key()
                )));
            }
        }
        Ok(())
    }
}

/// Loads a JSONL dialogue file, preserving file order.
pub fn load_dialogues(path: &Path) -> Result<Vec<DialogueTurn>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut turns = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let turn: DialogueTurn =
            serde_json::from_str(&line).map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        turn.validate().map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        if turn.history.len() + 1 != turn.turn_id as usize {
            log::debug!(
                "{}: history has {} pairs for turn {}",
                turn.key(),
                turn.history.len(),
                turn.turn_id
            );
        }
        turns.push(turn);
    }
    Ok(turns)
}

pub fn write_dialogues(path: &Path, turns: &[DialogueTurn]) -> Result<()> {
    write_jsonl(path, turns)
}

/// Renders the history as alternating `Q:`/`A:` lines followed by the current query.
pub fn serialize_history(turn: &DialogueTurn) -> String {
    let mut out = render_pairs(&turn.history);
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str("Q: ");
    out.push_str(&turn.query);
    out
}

/// Renders only the history pairs, without the current query.
pub fn render_pairs(history: &[HistoryPair]) -> String {
    let mut lines = Vec::with_capacity(history.len() * 2);
    for pair in history {
        lines.push(format!("Q: {}", pair.q));
        lines.push(format!("A: {}", pair.a));
    }
    lines.join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub rq: String,
    pub rs: String,
    pub pids: Vec<String>,
}

/// The K sampled candidates of one turn, in sampling order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    #[serde(flatten)]
    pub turn_key: TurnKey,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    /// Checks `K >= 2`, duplicate-free pid lists and (optionally) `|pids| <= depth`.
    pub fn validate(&self, depth: Option<usize>) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(Error::invalid(format!(
                "{}: candidate set needs K >= 2, got {}",
                self.turn_key,
                self.candidates.len()
            )));
        }
        for (i, c) in self.candidates.iter().enumerate() {
            let mut seen = HashSet::with_capacity(c.pids.len());
            if let Some(dup) = c.pids.iter().find(|p| !seen.insert(p.as_str())) {
                return Err(Error::invalid(format!(
                    "{}: candidate {i} lists passage `{dup}` twice",
                    self.turn_key
                )));
            }
            if let Some(t) = depth {
                if c.pids.len() > t {
                    return Err(Error::invalid(format!(
                        "{}: candidate {i} has {} pids, depth is {t}",
                        self.turn_key,
                        c.pids.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateSet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sets = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let set: CandidateSet =
            serde_json::from_str(&line).map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        set.validate(None).map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        sets.push(set);
    }
    Ok(sets)
}

pub fn write_candidates(path: &Path, sets: &[CandidateSet]) -> Result<()> {
    write_jsonl(path, sets)
}

/// Binary relevance judgments: qid -> relevant passage ids.
///
/// Queries whose judgments are all zero are still recorded (with an empty set)
/// so they count as judged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judged: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn insert(&mut self, qid: impl Into<String>, pid: impl Into<String>, relevant: bool) {
        let entry = self.judged.entry(qid.into()).or_default();
        if relevant {
            entry.insert(pid.into());
        }
    }

    pub fn relevant(&self, qid: &str) -> Option<&BTreeSet<String>> {
        self.judged.get(qid)
    }

    pub fn is_judged(&self, qid: &str) -> bool {
        self.judged.contains_key(qid)
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.judged.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judged.is_empty()
    }

    /// Builds judgments from turns that carry gold ids.
    pub fn from_turns<'a>(turns: impl IntoIterator<Item = &'a DialogueTurn>) -> Self {
        let mut qrels = Qrels::default();
        for turn in turns {
            if let Some(gold) = &turn.gold_pids {
                let qid = turn.key().qid();
                qrels.judged.entry(qid.clone()).or_default();
                for pid in gold {
                    qrels.insert(qid.clone(), pid.clone(), true);
                }
            }
        }
        qrels
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (qid, rel) in &self.judged {
            for pid in rel {
                out.push_str(&format!("{qid} 0 {pid} 1\n"));
            }
        }
        out
    }
}

/// Parses `qid 0 pid rel` lines.
pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut qrels = Qrels::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(parse_error(path, idx + 1, "expected `qid 0 pid rel`"));
        }
        let relevant = match fields[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(path, idx + 1, format!("relevance must be 0 or 1, got `{other}`")))
            }
        };
        qrels.insert(fields[0], fields[2], relevant);
    }
    Ok(qrels)
}
