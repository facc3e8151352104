"""Boolean query construction from node labels and retrieval evaluation.

Specific queries OR a node's label terms together; a node with an empty
label inherits the nearest labeled ancestor's query, or, with no labeled
ancestor anywhere above it, ORs its children's queries.  Generic queries
AND a node's specific query onto its parent's generic query, so the
retrieved sets nest along every root path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .corpus import DocTermMatrix, Hierarchy
from .errors import ValidationError
from .labeling import LabelAssignment


@dataclass(frozen=True)
class Term:
    term: int


@dataclass(frozen=True)
class Or:
    children: tuple

    def __post_init__(self):
        if not self.children:
            raise ValidationError("OR node needs at least one child")


@dataclass(frozen=True)
class And:
    children: tuple

    def __post_init__(self):
        if not self.children:
            raise ValidationError("AND node needs at least one child")


def query_to_prefix(query) -> str:
    """Parenthesized prefix notation, e.g. (AND (OR t12 t77) (OR t3))."""
    if query is None:
        return "()"
    if isinstance(query, Term):
        return f"t{query.term}"
    op = "OR" if isinstance(query, Or) else "AND"
    return "(" + op + " " + " ".join(query_to_prefix(c) for c in query.children) + ")"


def _or_of(parts) -> object:
    """Canonical OR: nested ORs flattened, structural duplicates dropped,
    a single remaining operand returned bare."""
    flat = []
    for p in parts:
        for q in (p.children if isinstance(p, Or) else (p,)):
            if q not in flat:
                flat.append(q)
    if not flat:
        return None
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def derive_specific_queries(hierarchy: Hierarchy, labels: LabelAssignment) -> dict:
    """Map node index -> query (or None for unretrievable nodes).

    Two passes: bottom-up to resolve empty-label nodes into ORs over their
    children's resolved queries, then top-down to let nodes below a labeled
    ancestor inherit that ancestor's own query instead.
    """
    n = hierarchy.n_nodes
    own = {}
    for i in range(n):
        terms = labels.terms(i)
        own[i] = _or_of(Term(t) for t in terms) if terms else None

    down = dict(own)
    for i in hierarchy.order_bottom_up():
        i = int(i)
        if down[i] is not None or hierarchy.is_leaf(i):
            continue
        down[i] = _or_of(down[int(c)] for c in hierarchy.children[i]
                         if down[int(c)] is not None)

    out = {}
    nearest = {hierarchy.root: None}   # nearest labeled ancestor's own query
    for i in hierarchy.order_top_down():
        i = int(i)
        inherited = nearest.pop(i)
        if own[i] is not None:
            out[i] = own[i]
        elif inherited is not None:
            out[i] = inherited
        else:
            out[i] = down[i]
        for c in hierarchy.children[i]:
            nearest[int(c)] = own[i] if own[i] is not None else inherited
    return out


def derive_generic_queries(hierarchy: Hierarchy, specific: dict) -> dict:
    """AND each node's specific query onto its ancestors' conjuncts,
    skipping structurally duplicate conjuncts (inherited copies)."""
    conjuncts = {}
    out = {}
    for i in hierarchy.order_top_down():
        i = int(i)
        base = [] if i == hierarchy.root else list(conjuncts[int(hierarchy.parent[i])])
        q = specific.get(i)
        if q is not None and q not in base:
            base.append(q)
        conjuncts[i] = base
        if not base:
            out[i] = None
        elif len(base) == 1:
            out[i] = base[0]
        else:
            out[i] = And(tuple(base))
    return out


def _eval_mask(matrix: DocTermMatrix, query) -> np.ndarray:
    if isinstance(query, Term):
        if not (0 <= query.term < matrix.n_terms):
            raise ValidationError(f"query term {query.term} out of range")
        mask = np.zeros(matrix.n_docs, bool)
        mask[matrix.doc_ids_for_term(query.term)] = True
        return mask
    if isinstance(query, Or):
        flat = [c.term for c in query.children if isinstance(c, Term)]
        if len(flat) == len(query.children):
            csc = matrix.presence_csc
            mask = np.zeros(matrix.n_docs, bool)
            return _kernels.mark_union(
                csc.indptr, csc.indices,
                np.asarray(flat, np.int64), mask,
            )
        mask = np.zeros(matrix.n_docs, bool)
        for c in query.children:
            mask |= _eval_mask(matrix, c)
        return mask
    if isinstance(query, And):
        mask = _eval_mask(matrix, query.children[0])
        for c in query.children[1:]:
            mask &= _eval_mask(matrix, c)
        return mask
    raise ValidationError(f"not a query node: {query!r}")


def retrieve(matrix: DocTermMatrix, query) -> set:
    """Documents satisfying the query; presence-only semantics."""
    if query is None:
        return set()
    return set(np.flatnonzero(_eval_mask(matrix, query)).tolist())


@dataclass(frozen=True)
class RetrievalMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f: float


def _metrics_from_counts(tp, n_retrieved, n_group, n_docs) -> RetrievalMetrics:
    fp = n_retrieved - tp
    fn = n_group - tp
    tn = n_docs - tp - fp - fn
    precision = tp / n_retrieved if n_retrieved else 0.0
    recall = tp / n_group if n_group else 0.0
    # zero rule: with either factor zero the harmonic mean is taken as 0
    f = 2.0 * precision * recall / (precision + recall) \
        if precision > 0 and recall > 0 else 0.0
    return RetrievalMetrics(tp, fp, fn, tn, precision, recall, f)


def evaluate_node(hierarchy: Hierarchy, node: int, retrieved) -> RetrievalMetrics:
    docset = hierarchy.docsets[node]
    if len(docset) == 0:
        raise ValidationError(f"node {node} has an empty document set")
    got = retrieved if isinstance(retrieved, set) else set(retrieved)
    tp = sum(1 for d in docset if int(d) in got)
    return _metrics_from_counts(tp, len(got), len(docset), hierarchy.n_docs)


@dataclass
class ObservationRow:
    method: str
    node_id: int
    level: int
    kind: str          # "specific" | "generic"
    precision: float
    recall: float
    f: float

    def measure(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class ObservationTable:
    """Rectangular record set: one row per (method, node, query kind)."""
    rows: list = field(default_factory=list)

    def filter(self, method=None, kind=None) -> "ObservationTable":
        out = [r for r in self.rows
               if (method is None or r.method == method)
               and (kind is None or r.kind == kind)]
        return ObservationTable(out)

    def methods(self):
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def levels(self):
        return sorted({r.level for r in self.rows})

    def values(self, measure: str) -> np.ndarray:
        return np.asarray([r.measure(measure) for r in self.rows])


def evaluate_all(matrix: DocTermMatrix, hierarchy: Hierarchy,
                 assignments: dict, threads: int = 1):
    """Metrics for every (method, node, kind); also returns the derived
    queries as {method: {"specific": {...}, "generic": {...}}}."""
    methods = list(assignments)

    def one(method):
        labels = assignments[method]
        specific = derive_specific_queries(hierarchy, labels)
        generic = derive_generic_queries(hierarchy, specific)
        rows = []
        spec_masks = {}
        for i in range(hierarchy.n_nodes):
            q = specific[i]
            spec_masks[i] = (np.zeros(matrix.n_docs, bool) if q is None
                             else _eval_mask(matrix, q))
        gen_masks = {}
        for i in hierarchy.order_top_down():
            i = int(i)
            if i == hierarchy.root:
                gen_masks[i] = spec_masks[i]
            else:
                parent_mask = gen_masks[int(hierarchy.parent[i])]
                q = specific[i]
                if q is None:
                    gen_masks[i] = parent_mask
                else:
                    gen_masks[i] = parent_mask & spec_masks[i]
        for i in range(hierarchy.n_nodes):
            group = hierarchy.docsets[i]
            nid = int(hierarchy.ids[i])
            lvl = int(hierarchy.level[i])
            for kind, mask in (("specific", spec_masks[i]),
                               ("generic", gen_masks[i])):
                tp = int(mask[group].sum())
                m = _metrics_from_counts(tp, int(mask.sum()), len(group),
                                         matrix.n_docs)
                rows.append(ObservationRow(method, nid, lvl, kind,
                                           m.precision, m.recall, m.f))
        return rows, {"specific": specific, "generic": generic}

    queries = {}
    table = ObservationTable()
    if threads > 1 and len(methods) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, methods))
    else:
        results = [one(m) for m in methods]
    for method, (rows, qs) in zip(methods, results):
        table.rows.extend(rows)
        queries[method] = qs
    return table, queries
