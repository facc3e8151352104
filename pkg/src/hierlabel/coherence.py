"""Observed coherence of node labels via normalized pointwise mutual
information over a reference corpus.

The co-occurrence window is one whole reference document: unary counts are
document frequencies, pairwise counts the number of documents containing
both terms.  OC of a label sums NPMI over all unordered pairs of its top-P
terms; singleton and empty labels score exactly 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .corpus import Vocabulary
from .errors import ValidationError


@dataclass
class CooccurrenceCounts:
    n_windows: int
    n_terms: int
    unary: np.ndarray          # term -> number of windows containing it
    pair_keys: np.ndarray      # sorted packed keys a * n_terms + b, a < b
    pair_counts: np.ndarray

    def pairwise(self, a: int, b: int) -> int:
        if a == b:
            return int(self.unary[a])
        lo, hi = (a, b) if a < b else (b, a)
        key = lo * self.n_terms + hi
        i = np.searchsorted(self.pair_keys, key)
        if i < self.pair_keys.size and self.pair_keys[i] == key:
            return int(self.pair_counts[i])
        return 0


def load_reference_corpus(path) -> list:
    """One document per line, whitespace-separated tokens."""
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                docs.append(tokens)
    return docs


def count_cooccurrence(corpus, vocab: Vocabulary,
                       restrict_terms=None) -> CooccurrenceCounts:
    """Count unary and pairwise window occurrences for vocabulary terms.

    ``corpus`` is a sequence of token lists; tokens outside the vocabulary
    are ignored.  ``restrict_terms`` limits counting to a term subset (the
    results for those terms are unchanged, everything else reads as 0) -
    the pipeline uses it to count only label terms.
    """
    if not corpus:
        raise ValidationError("empty reference corpus")
    lookup = vocab.index()
    m = len(vocab)
    wanted = None
    if restrict_terms is not None:
        wanted = np.zeros(m, bool)
        wanted[np.asarray(sorted(set(int(t) for t in restrict_terms)), np.int64)] = True

    unary = np.zeros(m, np.int64)
    row_sets = []
    for tokens in corpus:
        ids = {lookup[t] for t in tokens if t in lookup}
        if wanted is not None:
            ids = {t for t in ids if wanted[t]}
        row = np.fromiter(sorted(ids), np.int64, len(ids))
        unary[row] += 1
        row_sets.append(row)

    indptr = np.zeros(len(row_sets) + 1, np.int64)
    indptr[1:] = np.cumsum([r.size for r in row_sets])
    indices = (np.concatenate(row_sets) if row_sets else np.empty(0, np.int64))
    keys = _kernels.pair_keys(indptr, indices, m)
    if keys.size:
        pair_keys, pair_counts = np.unique(keys, return_counts=True)
    else:
        pair_keys = np.empty(0, np.int64)
        pair_counts = np.empty(0, np.int64)
    return CooccurrenceCounts(len(corpus), m, unary, pair_keys, pair_counts)


def npmi(counts: CooccurrenceCounts, a: int, b: int,
         epsilon: float = 0.0) -> float:
    """Normalized PMI in [-1, 1]; 0 when either term never occurs in the
    reference, -1 for a zero joint count (or the epsilon-smoothed value
    when ``epsilon`` > 0), 1 for perfect co-occurrence."""
    ua, ub = int(counts.unary[a]), int(counts.unary[b])
    if ua == 0 or ub == 0:
        return 0.0
    joint = counts.pairwise(a, b)
    n = counts.n_windows
    p_ab = joint / n
    if joint == 0:
        if epsilon <= 0:
            return -1.0
        p_ab = epsilon
    if p_ab >= 1.0:
        return 1.0
    val = math.log(p_ab / ((ua / n) * (ub / n))) / (-math.log(p_ab))
    # the bound holds analytically; clamp float roundoff
    return max(-1.0, min(1.0, val))


def oc_npmi(counts: CooccurrenceCounts, label_terms, p_cap: int,
            epsilon: float = 0.0, aggregate: str = "sum") -> float:
    """Observed coherence: NPMI summed (or averaged) over all unordered
    pairs among the top-P label terms; fewer than two terms scores 0."""
    terms = list(label_terms)[:p_cap]
    if len(terms) < 2:
        return 0.0
    total = 0.0
    n_pairs = 0
    for i in range(1, len(terms)):
        for j in range(i):
            total += npmi(counts, terms[i], terms[j], epsilon)
            n_pairs += 1
    if aggregate == "mean":
        return total / n_pairs
    return total


@dataclass
class CoherenceReport:
    """Per-node OC values per method plus the upper-quartile/maximum summary.

    ``missing`` counts, per (method, node), label terms absent from the
    reference corpus (their pairs contribute the zero convention).
    """
    per_node: dict = field(default_factory=dict)   # method -> {node_id: oc}
    missing: dict = field(default_factory=dict)    # method -> {node_id: count}
    summary: dict = field(default_factory=dict)    # method -> (upper_q, max)


def summarize_coherence(per_node: dict) -> dict:
    """method -> (75th percentile via linear interpolation, maximum),
    computed over every node of the method including zeros."""
    out = {}
    for method, values in per_node.items():
        v = np.asarray(list(values.values()), np.float64)
        if v.size == 0:
            raise ValidationError(f"no coherence values for method {method!r}")
        out[method] = (float(np.percentile(v, 75)), float(v.max()))
    return out


def score_labels(counts: CooccurrenceCounts, assignments: dict,
                 hierarchy, p_cap: int, epsilon: float = 0.0,
                 aggregate: str = "sum") -> CoherenceReport:
    """OC for every (method, node) of the hierarchy."""
    report = CoherenceReport()
    for method in assignments:
        labels = assignments[method]
        vals, miss = {}, {}
        for i in range(hierarchy.n_nodes):
            nid = int(hierarchy.ids[i])
            terms = labels.terms(i)
            vals[nid] = oc_npmi(counts, terms, p_cap, epsilon, aggregate)
            miss[nid] = sum(1 for t in terms[:p_cap] if counts.unary[t] == 0)
        report.per_node[method] = vals
        report.missing[method] = miss
    report.summary = summarize_coherence(report.per_node)
    return report
