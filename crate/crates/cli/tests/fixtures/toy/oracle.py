#!/usr/bin/env python3
"""Independent reference metrics for the toy fixtures.

Reads corpus.jsonl, dialogues.jsonl, responses.json and qrels.txt, takes each
turn's inference rewrites straight from the mock rules, scores the collection
with a from-scratch BM25 (k1=0.9, b=0.4, lowercase alphanumeric tokens) and
writes expected_metrics.json. Run from this directory: python3 oracle.py
"""
import json
import math
import re
from collections import Counter

K1, B, DEPTH, RRF_K = 0.9, 0.4, 100, 60.0
TAGS = ["rewrite", "retrieval", "response"]


def tokens(text):
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]


def load():
    corpus = [json.loads(l) for l in open("corpus.jsonl") if l.strip()]
    turns = [json.loads(l) for l in open("dialogues.jsonl") if l.strip()]
    rules = json.load(open("responses.json"))["rules"]
    qrels = {}
    for line in open("qrels.txt"):
        qid, _, pid, rel = line.split()
        if rel == "1":
            qrels.setdefault(qid, set()).add(pid)
    return corpus, turns, rules, qrels


class Bm25:
    def __init__(self, corpus):
        self.ids = [p["id"] for p in corpus]
        self.tf = [Counter(tokens(p["text"])) for p in corpus]
        self.len = [sum(c.values()) for c in self.tf]
        self.avg = sum(self.len) / len(self.len)
        self.df = Counter(t for c in self.tf for t in c)
        self.n = len(corpus)

    def score(self, q, i):
        s = 0.0
        for t in q:
            f = self.tf[i].get(t, 0)
            if f:
                idf = math.log(1 + (self.n - self.df[t] + 0.5) / (self.df[t] + 0.5))
                s += idf * f * (K1 + 1) / (f + K1 * (1 - B + B * self.len[i] / self.avg))
        return s

    def search(self, text, depth=DEPTH):
        q = tokens(text)
        hits = [(self.score(q, i), self.ids[i]) for i in range(self.n)]
        hits = [h for h in hits if h[0] > 0]
        hits.sort(key=lambda h: (-h[0], h[1]))
        return [pid for _, pid in hits[:depth]]


def rrf(lists):
    acc = {}
    for lst in lists:
        for r, pid in enumerate(lst, 1):
            acc[pid] = acc.get(pid, 0.0) + 1.0 / (RRF_K + r)
    return [pid for pid, _ in sorted(acc.items(), key=lambda kv: (-kv[1], kv[0]))][:DEPTH]


def metrics(ranked, rel):
    rr = next((1.0 / r for r, p in enumerate(ranked, 1) if p in rel), 0.0)
    dcg = sum(1 / math.log2(r + 1) for r, p in enumerate(ranked[:3], 1) if p in rel)
    idcg = sum(1 / math.log2(r + 1) for r in range(1, min(len(rel), 3) + 1))
    return {
        "mrr": rr,
        "ndcg_3": dcg / idcg,
        "recall_10": len(rel & set(ranked[:10])) / len(rel),
        "recall_100": len(rel & set(ranked[:100])) / len(rel),
    }


def mean(rows):
    return {k: sum(r[k] for r in rows) / len(rows) for k in rows[0]}


def inference_rewrite(rules, tag, query):
    for r in rules:
        if r.get("prefix") == f"[{tag.upper()}]" and r.get("suffix") == f"Q: {query}":
            return r["responses"][0].strip()
    raise KeyError((tag, query))


def main():
    corpus, turns, rules, qrels = load()
    bm = Bm25(corpus)
    runs = {name: {} for name in TAGS + ["concat", "rrf"]}
    for t in turns:
        qid = f"{t['conv_id']}_{t['turn_id']}"
        rws = [inference_rewrite(rules, tag, t["query"]) for tag in TAGS]
        singles = [bm.search(q) for q in rws]
        for tag, lst in zip(TAGS, singles):
            runs[tag][qid] = lst
        runs["concat"][qid] = bm.search(" ".join(rws))
        runs["rrf"][qid] = rrf(singles)
    out = {}
    for name, run in runs.items():
        out[name] = mean([metrics(run.get(q, []), rel) for q, rel in sorted(qrels.items())])
    with open("expected_metrics.json", "w") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    for name, m in out.items():
        print(f"{name:<10} R@10={m['recall_10']:.4f} MRR={m['mrr']:.4f}")


if __name__ == "__main__":
    main()
