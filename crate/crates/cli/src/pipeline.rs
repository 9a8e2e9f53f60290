//! Index, construct, rewrite and retrieve stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cqr_core::concurrency::bounded_map;
use cqr_core::corpus::{load_corpus, load_dialogues, write_candidates, CandidateSet, Candidate, Collection, DialogueTurn, Passage, TurnKey};
use cqr_core::fusion::{concat_queries, expand_query, rrf, RRF_K};
use cqr_core::eval::{RunFile, RUN_DEPTH};
use cqr_core::io::{read_jsonl, write_atomic, write_jsonl};
use cqr_core::llm::{
    generate_prefixed_rewrite, generate_response, generate_responses, sample_rewrites, turn_seed, DemoPool,
    LlmClient, ResponseMode,
};
use cqr_core::preference::{emit_preference_records, PreferenceRecord, PreferenceTag};
use cqr_core::retriever::{build_index, InvertedIndex, RankedList, Tokenizer};
use cqr_core::scoring::{score_candidate_set, ScoreRecord};
use cqr_core::similarity::{backend_from_config, Similarity};
use cqr_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::*;
use crate::error::{usage, CliResult};

pub struct IndexOutcome {
    pub path: PathBuf,
    pub fingerprint: String,
    pub doc_count: usize,
}

pub fn cmd_index(config: &PipelineConfig) -> CliResult<IndexOutcome> {
    let corpus = load_corpus(&config.corpus)?;
    let index = build_index(&corpus, &config.retriever)?;
    let path = config.output(INDEX_FILE);
    let fingerprint = index.save(&path)?;
    write_atomic(&config.output(FINGERPRINT_FILE), |w| writeln!(w, "{fingerprint}"))?;
    log::info!("indexed {} passages, {} terms", index.doc_count(), index.term_count());
    Ok(IndexOutcome { path, fingerprint, doc_count: index.doc_count() })
}

fn load_index(config: &PipelineConfig) -> CliResult<InvertedIndex> {
    let path = config.output(INDEX_FILE);
    if !path.exists() {
        return Err(usage(format!("{} not found; run `cqr index` first", path.display())));
    }
    Ok(InvertedIndex::load(&path, &config.retriever)?)
}

fn load_turns(config: &PipelineConfig) -> CliResult<Vec<DialogueTurn>> {
    let turns = load_dialogues(&config.dialogues)?;
    if turns.is_empty() {
        return Err(usage(format!("{} has no turns", config.dialogues.display())));
    }
    Ok(turns)
}

/// Per-turn failures either abort the run (`strict`) or are logged and listed.
fn partition<T>(turns: &[DialogueTurn], results: Vec<cqr_core::Result<T>>, strict: bool) -> CliResult<(Vec<T>, Vec<String>)> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (turn, result) in turns.iter().zip(results) {
        match result {
            Ok(v) => ok.push(v),
            Err(e) if strict => return Err(e.into()),
            Err(e) => {
                log::warn!("skipping turn {}: {e}", turn.key());
                failed.push(turn.key().qid());
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::Backend(format!("all {} turns failed", turns.len())).into());
    }
    Ok((ok, failed))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstructSummary {
    pub turns: usize,
    pub constructed: usize,
    pub failed_turns: Vec<String>,
    pub records: usize,
    /// Per-dimension count of turns whose pair was skipped.
    pub skipped: BTreeMap<String, usize>,
    pub k: usize,
    pub t: usize,
    pub beta: f64,
    pub seed: u64,
}

struct ConstructCtx<'a> {
    config: &'a PipelineConfig,
    corpus: &'a Collection,
    index: &'a InvertedIndex,
    client: &'a LlmClient,
    pool: &'a DemoPool,
    similarity: &'a dyn Similarity,
    tokenizer: &'a Tokenizer,
}

struct TurnOutput {
    set: CandidateSet,
    scores: ScoreRecord,
    records: Vec<PreferenceRecord>,
    skipped: Vec<PreferenceTag>,
}

fn top_passages(corpus: &Collection, list: &RankedList, n: usize) -> cqr_core::Result<Vec<Passage>> {
    list.top(n)
        .iter()
        .map(|e| {
            corpus.get(&e.pid).cloned().ok_or_else(|| Error::Index(format!("passage {} missing from corpus", e.pid)))
        })
        .collect()
}

fn construct_turn(ctx: &ConstructCtx, turn: &DialogueTurn) -> cqr_core::Result<TurnOutput> {
    let cfg = ctx.config;
    let seed = turn_seed(cfg.seed, &turn.key());
    let rewrites = sample_rewrites(ctx.client, turn, cfg.k, ctx.pool, seed)?;
    let lists: Vec<RankedList> = rewrites.iter().map(|q| ctx.index.search(q, cfg.t)).collect();
    let grounding = match cfg.response_mode {
        ResponseMode::Direct => None,
        ResponseMode::Grounded => {
            Some(lists.iter().map(|l| top_passages(ctx.corpus, l, 3)).collect::<cqr_core::Result<Vec<_>>>()?)
        }
    };
    let responses = generate_responses(ctx.client, turn, &rewrites, cfg.response_mode, grounding.as_deref(), ctx.pool)?;
    let candidates = rewrites
        .into_iter()
        .zip(responses)
        .zip(&lists)
        .map(|((rq, rs), list)| Candidate { rq, rs, pids: list.pids().map(String::from).collect() })
        .collect();
    let set = CandidateSet { turn_key: turn.key(), candidates };
    let scores = score_candidate_set(&set, ctx.similarity, ctx.tokenizer)?;
    let emitted = emit_preference_records(&set, &scores, turn)?;
    Ok(TurnOutput {
        scores: ScoreRecord::new(turn.key(), &scores)?,
        set,
        records: emitted.records,
        skipped: emitted.skipped,
    })
}

pub fn cmd_construct(config: &PipelineConfig, strict: bool) -> CliResult<ConstructSummary> {
    let corpus = load_corpus(&config.corpus)?;
    let turns = load_turns(config)?;
    let pool = DemoPool::load(config.demos_path()?)?;
    if config.response_mode == ResponseMode::Direct {
        pool.response_demos()?;
    }
    let index = load_index(config)?;
    let client = LlmClient::from_config(&config.llm, &config.base_dir)?;
    let similarity = backend_from_config(&config.similarity, &config.retriever)?;
    let tokenizer = Tokenizer::new(&config.retriever);
    let ctx = ConstructCtx {
        config,
        corpus: &corpus,
        index: &index,
        client: &client,
        pool: &pool,
        similarity: similarity.as_ref(),
        tokenizer: &tokenizer,
    };

    let results = bounded_map(&turns, config.workers, |i, turn| {
        let out = construct_turn(&ctx, turn);
        log::info!("turn {}/{} ({}) done", i + 1, turns.len(), turn.key());
        out
    });
    let (outputs, failed_turns) = partition(&turns, results, strict)?;

    let mut summary = ConstructSummary {
        turns: turns.len(),
        constructed: outputs.len(),
        failed_turns,
        k: config.k,
        t: config.t,
        beta: config.beta,
        seed: config.seed,
        skipped: PreferenceTag::ALL.iter().map(|t| (t.name().to_string(), 0)).collect(),
        ..Default::default()
    };
    let mut sets = Vec::new();
    let mut scores = Vec::new();
    let mut records = Vec::new();
    for out in outputs {
        for tag in &out.skipped {
            *summary.skipped.entry(tag.name().to_string()).or_default() += 1;
        }
        sets.push(out.set);
        scores.push(out.scores);
        records.extend(out.records);
    }
    summary.records = records.len();
    write_candidates(&config.output(CANDIDATES_FILE), &sets)?;
    write_jsonl(&config.output(SCORES_FILE), &scores)?;
    write_jsonl(&config.output(PREFERENCES_FILE), &records)?;
    write_json(&config.output(CONSTRUCT_SUMMARY_FILE), &summary)?;
    log::info!(
        "constructed {} of {} turns, {} preference records, {} turn(s) skipped",
        summary.constructed,
        summary.turns,
        summary.records,
        summary.failed_turns.len()
    );
    Ok(summary)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedRewrite {
    pub tag: PreferenceTag,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_response: Option<String>,
}

impl TaggedRewrite {
    /// The retrieval query: the rewrite, expanded when a pseudo response is present.
    pub fn query(&self) -> cqr_core::Result<String> {
        match &self.pseudo_response {
            Some(r) => expand_query(&self.text, r),
            None => Ok(self.text.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRecord {
    #[serde(flatten)]
    pub turn_key: TurnKey,
    pub rewrites: Vec<TaggedRewrite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PromptAudit {
    qid: String,
    tag: PreferenceTag,
    prompt: String,
}

pub struct RewriteOutcome {
    pub turns: usize,
    pub rewritten: usize,
    pub failed_turns: Vec<String>,
}

pub fn cmd_rewrite(config: &PipelineConfig, tags: &[PreferenceTag], strict: bool) -> CliResult<RewriteOutcome> {
    let tags = config.ordered_tags(tags);
    let turns = load_turns(config)?;
    let pool = if config.expand { Some(DemoPool::load(config.demos_path()?)?) } else { None };
    if let Some(p) = &pool {
        p.response_demos()?;
    }
    let client = LlmClient::from_config(&config.llm, &config.base_dir)?;

    let results = bounded_map(&turns, config.workers, |_, turn| -> cqr_core::Result<(RewriteRecord, Vec<PromptAudit>)> {
        let mut rewrites = Vec::new();
        let mut audit = Vec::new();
        for tag in &tags {
            let out = generate_prefixed_rewrite(&client, turn, tag.as_str())?;
            let pseudo_response = match &pool {
                Some(p) => Some(generate_response(&client, turn, &out.text, ResponseMode::Direct, None, p)?),
                None => None,
            };
            audit.push(PromptAudit { qid: turn.key().qid(), tag: out.tag, prompt: out.prompt });
            rewrites.push(TaggedRewrite { tag: out.tag, text: out.text, pseudo_response });
        }
        Ok((RewriteRecord { turn_key: turn.key(), rewrites }, audit))
    });
    let (outputs, failed_turns) = partition(&turns, results, strict)?;
    let (records, audits): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    let audits: Vec<PromptAudit> = audits.into_iter().flatten().collect();
    write_jsonl(&config.output(REWRITES_FILE), &records)?;
    write_jsonl(&config.output(REWRITE_PROMPTS_FILE), &audits)?;
    Ok(RewriteOutcome { turns: turns.len(), rewritten: records.len(), failed_turns })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fusion {
    /// One search on the concatenated rewrites.
    Concat,
    /// One search per rewrite, merged by reciprocal rank fusion.
    Rrf,
}

pub struct RetrieveOutcome {
    pub run: PathBuf,
    pub audit: PathBuf,
    pub queries: usize,
}

/// Audit file next to the run: `run.txt` gives `run.queries.tsv`.
pub fn audit_path(run: &Path) -> PathBuf {
    run.with_extension("queries.tsv")
}

pub fn cmd_retrieve(
    config: &PipelineConfig,
    tags: &[PreferenceTag],
    fusion: Fusion,
    rewrites: &Path,
    output: &Path,
    run_tag: &str,
) -> CliResult<RetrieveOutcome> {
    if run_tag.is_empty() || run_tag.contains(char::is_whitespace) {
        return Err(usage(format!("run tag `{run_tag}` must be one non-empty word")));
    }
    let tags = config.ordered_tags(tags);
    if !rewrites.exists() {
        return Err(usage(format!("{} not found; run `cqr rewrite` first", rewrites.display())));
    }
    let records: Vec<RewriteRecord> = read_jsonl(rewrites)?;
    let index = load_index(config)?;

    let results = bounded_map(&records, config.workers, |_, rec| -> cqr_core::Result<(String, RankedList, Vec<String>)> {
        let qid = rec.turn_key.qid();
        let queries = tags
            .iter()
            .map(|tag| {
                rec.rewrites
                    .iter()
                    .find(|r| r.tag == *tag)
                    .ok_or_else(|| Error::Invalid(format!("turn {} has no {tag} rewrite", rec.turn_key)))?
                    .query()
            })
            .collect::<cqr_core::Result<Vec<_>>>()?;
        match fusion {
            Fusion::Concat => {
                let fused = concat_queries(&queries)?;
                let list = index.search(&fused.text, RUN_DEPTH);
                Ok((qid, list, vec![fused.text]))
            }
            Fusion::Rrf => {
                let lists: Vec<RankedList> = queries.iter().map(|q| index.search(q, RUN_DEPTH)).collect();
                let mut fused = rrf(&lists, RRF_K)?;
                fused.truncate(RUN_DEPTH);
                Ok((qid, fused, queries))
            }
        }
    });
    let mut run = RunFile::default();
    let mut audit = String::new();
    let mode = match fusion {
        Fusion::Concat => "concat",
        Fusion::Rrf => "rrf",
    };
    for result in results {
        let (qid, list, queries) = result?;
        for q in &queries {
            audit.push_str(&format!("{qid}\t{mode}\t{}\n", q.replace(['\t', '\n'], " ")));
        }
        if list.is_empty() {
            log::warn!("query {qid} retrieved nothing");
        }
        run.insert(qid, list);
    }
    let audit_file = audit_path(output);
    write_atomic(&audit_file, |w| w.write_all(audit.as_bytes()))?;
    run.write(output, run_tag)?;
    Ok(RetrieveOutcome { run: output.to_path_buf(), audit: audit_file, queries: run.len() })
}
