"""Document-term matrix, cluster hierarchy, and per-node term statistics.

File formats:
  matrix      plain text, first line "n_docs n_terms", then one
              "doc term count" triplet per line in any order
  vocabulary  one "term_id<TAB>surface" line per term
  hierarchy   JSON {"nodes": [{"id", "parent", "children", "docs"}]}

All ids are 0-based.  Documents may be attached to leaves only; node
levels are always recomputed from the parent links, never read from the
file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class Vocabulary:
    """Ordered term id -> surface mapping with contiguous ids 0..m-1."""

    surfaces: tuple

    def __post_init__(self):
        seen = set()
        for i, s in enumerate(self.surfaces):
            if not s:
                raise ValidationError(f"vocabulary: empty surface at term {i}")
            if s in seen:
                raise ValidationError(f"vocabulary: duplicate surface {s!r}")
            seen.add(s)

    def __len__(self):
        return len(self.surfaces)

    def surface(self, term_id: int) -> str:
        return self.surfaces[term_id]

    def index(self) -> dict:
        """surface -> term id lookup table."""
        return {s: i for i, s in enumerate(self.surfaces)}

    def subset(self, keep_terms) -> "Vocabulary":
        """New vocabulary containing only ``keep_terms``, recompacted."""
        return Vocabulary(tuple(self.surfaces[t] for t in keep_terms))


class DocTermMatrix:
    """Sparse nonnegative term counts per document (CSR, int64).

    Retrieval only cares about presence (count > 0); stored cells are
    therefore required to be strictly positive.
    """

    def __init__(self, n_docs: int, n_terms: int, csr: sp.csr_matrix):
        if csr.shape != (n_docs, n_terms):
            raise ValidationError("matrix shape mismatch")
        self.n_docs = n_docs
        self.n_terms = n_terms
        self.csr = csr
        self._presence = None
        self._presence_csc = None

    @classmethod
    def from_cells(cls, n_docs, n_terms, docs, terms, counts) -> "DocTermMatrix":
        docs = np.asarray(docs, np.int64)
        terms = np.asarray(terms, np.int64)
        counts = np.asarray(counts, np.int64)
        if docs.size:
            if docs.min() < 0 or docs.max() >= n_docs:
                bad = docs[(docs < 0) | (docs >= n_docs)][0]
                raise ValidationError(f"doc-id out of range: {bad}")
            if terms.min() < 0 or terms.max() >= n_terms:
                bad = terms[(terms < 0) | (terms >= n_terms)][0]
                raise ValidationError(f"term-id out of range: {bad}")
            if counts.min() <= 0:
                raise ValidationError("zero or negative count in matrix cell")
            key = docs * n_terms + terms
            if np.unique(key).size != key.size:
                raise ValidationError("duplicate (doc, term) cell")
        csr = sp.csr_matrix(
            (counts, (docs, terms)), shape=(n_docs, n_terms), dtype=np.int64
        )
        csr.sort_indices()
        return cls(n_docs, n_terms, csr)

    @property
    def presence(self) -> sp.csr_matrix:
        """Boolean CSR: does term occur in doc."""
        if self._presence is None:
            p = self.csr.copy()
            p.data = np.ones_like(p.data)
            self._presence = p
        return self._presence

    @property
    def presence_csc(self) -> sp.csc_matrix:
        """Boolean CSC, for per-term document lists."""
        if self._presence_csc is None:
            c = self.presence.tocsc()
            c.sort_indices()
            self._presence_csc = c
        return self._presence_csc

    def doc_ids_for_term(self, term: int) -> np.ndarray:
        c = self.presence_csc
        return c.indices[c.indptr[term]:c.indptr[term + 1]]

    def term_doc_freq(self) -> np.ndarray:
        """Document frequency of every term (dense, int64)."""
        return np.asarray(self.presence.sum(axis=0), np.int64).ravel()

    def scale(self, factor: int) -> "DocTermMatrix":
        """All counts multiplied by a positive integer (testing aid)."""
        if factor <= 0:
            raise ValidationError("scale factor must be positive")
        return DocTermMatrix(self.n_docs, self.n_terms, self.csr * int(factor))


def load_matrix(path) -> DocTermMatrix:
    """Parse the documented triplet format, validating as it goes."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}:1: missing header line")
    head = lines[0].split()
    if len(head) != 2:
        raise ParseError(f"{path}:1: header must be 'n_docs n_terms'")
    try:
        n_docs, n_terms = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError(f"{path}:1: non-integer header") from None
    if n_docs < 0 or n_terms < 0:
        raise ParseError(f"{path}:1: negative dimension")
    docs, terms, counts = [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"{path}:{ln}: expected 'doc term count'")
        try:
            d, t, c = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError(f"{path}:{ln}: non-integer field") from None
        docs.append(d)
        terms.append(t)
        counts.append(c)
    return DocTermMatrix.from_cells(n_docs, n_terms, docs, terms, counts)


def save_matrix(matrix: DocTermMatrix, path) -> None:
    """Deterministic writer: cells sorted by (doc, term)."""
    coo = matrix.csr.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.n_docs} {matrix.n_terms}\n")
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]}\n")


def load_vocabulary(path) -> Vocabulary:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{ln}: expected 'term_id<TAB>surface'")
            try:
                tid = int(parts[0])
            except ValueError:
                raise ParseError(f"{path}:{ln}: non-integer term id") from None
            if tid in entries:
                raise ValidationError(f"{path}:{ln}: duplicate term id {tid}")
            entries[tid] = parts[1]
    if sorted(entries) != list(range(len(entries))):
        raise ValidationError(f"{path}: term ids are not contiguous 0..m-1")
    return Vocabulary(tuple(entries[i] for i in range(len(entries))))


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, s in enumerate(vocab.surfaces):
            fh.write(f"{i}\t{s}\n")


@dataclass
class Hierarchy:
    """Validated cluster tree over the documents of one matrix.

    ``ids`` holds the external node ids in deterministic (sorted) order;
    all array fields are indexed by internal position.  ``docsets`` are
    sorted arrays of doc ids, inclusive of all descendant leaves.
    """

    ids: np.ndarray
    parent: np.ndarray            # internal index of parent; root points to itself
    children: list                # list of int arrays (internal indices)
    leaf_docs: list               # list of int arrays, empty for internal nodes
    level: np.ndarray
    root: int
    n_docs: int
    docsets: list = field(default_factory=list)

    def __len__(self):
        return len(self.ids)

    @property
    def n_nodes(self):
        return len(self.ids)

    def is_leaf(self, i: int) -> bool:
        return len(self.children[i]) == 0

    def index_of(self, node_id: int) -> int:
        return int(np.searchsorted(self.ids, node_id))

    def order_top_down(self) -> np.ndarray:
        """Node indices sorted by (level, id) - parents before children."""
        return np.lexsort((self.ids, self.level))

    def order_bottom_up(self) -> np.ndarray:
        return self.order_top_down()[::-1]

    def ancestors(self, i: int):
        """Proper ancestors of node i, nearest first."""
        out = []
        while i != self.root:
            i = int(self.parent[i])
            out.append(i)
        return out

    def descendants(self, i: int):
        """(descendant index, edge distance) pairs for all proper descendants."""
        out = []
        stack = [(int(c), 1) for c in self.children[i]]
        while stack:
            g, e = stack.pop()
            out.append((g, e))
            for c in self.children[g]:
                stack.append((int(c), e + 1))
        return out

    def docset_mask(self, i: int) -> np.ndarray:
        mask = np.zeros(self.n_docs, bool)
        mask[self.docsets[i]] = True
        return mask

    def nodes_at_level(self, lvl: int) -> np.ndarray:
        return np.flatnonzero(self.level == lvl)


def _build_hierarchy(records, n_docs) -> Hierarchy:
    ids = sorted(r["id"] for r in records)
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate node id in hierarchy")
    pos = {nid: k for k, nid in enumerate(ids)}
    n = len(ids)
    parent = np.full(n, -1, np.int64)
    children = [None] * n
    leaf_docs = [None] * n
    declared_children = [None] * n

    roots = []
    for r in records:
        k = pos[r["id"]]
        p = r.get("parent")
        if p is None:
            roots.append(k)
            parent[k] = k
        else:
            if p not in pos:
                raise ValidationError(
                    f"orphan node {r['id']}: unknown parent {p}"
                )
            if p == r["id"]:
                raise ValidationError(f"cycle: node {r['id']} is its own parent")
            parent[k] = pos[p]
        declared_children[k] = [pos.get(c, -1) for c in r.get("children", [])]
        if any(c < 0 for c in declared_children[k]):
            raise ValidationError(f"node {r['id']} lists unknown child")
        leaf_docs[k] = np.asarray(sorted(r.get("docs", [])), np.int64)

    if len(roots) == 0:
        raise ValidationError("hierarchy has no root")
    if len(roots) > 1:
        raise ValidationError(
            "multiple roots: " + ", ".join(str(ids[r]) for r in roots)
        )
    root = roots[0]

    # parent fields are the source of truth; declared children must agree
    derived = [[] for _ in range(n)]
    for k in range(n):
        if k != root:
            derived[int(parent[k])].append(k)
    for k in range(n):
        if sorted(declared_children[k]) != sorted(derived[k]):
            raise ValidationError(
                f"node {ids[k]}: children list disagrees with parent links"
            )
        children[k] = np.asarray(declared_children[k], np.int64)

    # levels via BFS from the root; unreached nodes sit on a cycle
    level = np.full(n, -1, np.int64)
    level[root] = 0
    queue = [root]
    while queue:
        u = queue.pop(0)
        for c in children[u]:
            level[c] = level[u] + 1
            queue.append(int(c))
    if (level < 0).any():
        bad = ids[int(np.flatnonzero(level < 0)[0])]
        raise ValidationError(f"cycle: node {bad} is unreachable from the root")

    seen_docs = np.zeros(n_docs, np.int64)
    for k in range(n):
        if len(children[k]) == 0:
            if leaf_docs[k].size == 0:
                raise ValidationError(f"empty leaf: node {ids[k]}")
            if leaf_docs[k].min() < 0 or leaf_docs[k].max() >= n_docs:
                raise ValidationError(f"node {ids[k]}: doc-id out of range")
            seen_docs[leaf_docs[k]] += 1
        elif leaf_docs[k].size:
            raise ValidationError(
                f"node {ids[k]}: documents attached to an internal node"
            )
    if (seen_docs > 1).any():
        d = int(np.flatnonzero(seen_docs > 1)[0])
        raise ValidationError(f"doc {d} assigned to two leaves")
    if (seen_docs == 0).any():
        d = int(np.flatnonzero(seen_docs == 0)[0])
        raise ValidationError(f"doc {d} not assigned to any leaf")

    h = Hierarchy(
        ids=np.asarray(ids, np.int64), parent=parent, children=children,
        leaf_docs=leaf_docs, level=level, root=root, n_docs=n_docs,
    )
    # docsets bottom-up: union of descendant leaf docs
    docsets = [None] * n
    for k in h.order_bottom_up():
        k = int(k)
        if h.is_leaf(k):
            docsets[k] = leaf_docs[k]
        else:
            docsets[k] = np.sort(np.concatenate([docsets[int(c)] for c in children[k]]))
    h.docsets = docsets
    return h


def load_hierarchy(path, matrix: DocTermMatrix) -> Hierarchy:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
    if not isinstance(blob, dict) or "nodes" not in blob:
        raise ParseError(f"{path}: expected an object with a 'nodes' list")
    return _build_hierarchy(blob["nodes"], matrix.n_docs)


def save_hierarchy(hierarchy: Hierarchy, path) -> None:
    """Deterministic writer: nodes sorted by id, canonical key order."""
    nodes = []
    for k in range(hierarchy.n_nodes):
        pid = (None if k == hierarchy.root
               else int(hierarchy.ids[int(hierarchy.parent[k])]))
        nodes.append({
            "id": int(hierarchy.ids[k]),
            "parent": pid,
            "children": sorted(int(hierarchy.ids[int(c)]) for c in hierarchy.children[k]),
            "docs": [int(d) for d in hierarchy.leaf_docs[k]],
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"nodes": nodes}, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def salton_df_filter(matrix: DocTermMatrix, low: float, high: float):
    """Drop terms whose document frequency falls outside the Salton band.

    Bounds are the fractions rounded to the nearest document count (half
    away from zero), inclusive on both ends; e.g. 328 docs with
    (0.01, 0.10) keeps terms with 3 <= df <= 33.  Returns the reduced
    matrix and an old-id -> new-id array (-1 for dropped terms).
    """
    if not (0 <= low < high <= 1):
        raise ValidationError("df filter requires 0 <= low < high <= 1")
    df = matrix.term_doc_freq()
    lo = math.floor(low * matrix.n_docs + 0.5)
    hi = math.floor(high * matrix.n_docs + 0.5)
    keep = np.flatnonzero((df >= lo) & (df <= hi))
    if keep.size == 0:
        raise ValidationError("empty vocabulary after filter")
    remap = np.full(matrix.n_terms, -1, np.int64)
    remap[keep] = np.arange(keep.size)
    sub = matrix.csr[:, keep].tocsr()
    sub.sort_indices()
    return DocTermMatrix(matrix.n_docs, keep.size, sub), remap


class NodeTermStats:
    """Everything the labeling methods consume, precomputed in one pass.

    freq[i, k]       cumulated count of term k in node i's subtree
    docfreq[i, k]    docs in node i's subtree containing term k
    child_support[i, k]  direct children of i whose subtree contains k
    node_total[i]    sum of freq row i
    node_size[i]     number of docs in node i's subtree
    parent_or_self   parent index, with the root mapped to itself
    """

    def __init__(self, matrix: DocTermMatrix, hierarchy: Hierarchy):
        self.matrix = matrix
        self.hierarchy = hierarchy
        n, m = hierarchy.n_nodes, matrix.n_terms

        rows = np.concatenate(
            [np.full(len(hierarchy.docsets[i]), i, np.int64) for i in range(n)]
        ) if n else np.empty(0, np.int64)
        cols = np.concatenate(hierarchy.docsets) if n else np.empty(0, np.int64)
        incidence = sp.csr_matrix(
            (np.ones(rows.size, np.int64), (rows, cols)),
            shape=(n, matrix.n_docs),
        )
        self.freq = (incidence @ matrix.csr).tocsr()
        self.freq.sort_indices()
        self.docfreq = (incidence @ matrix.presence).tocsr()
        self.docfreq.sort_indices()

        self.node_total = np.asarray(self.freq.sum(axis=1), np.int64).ravel()
        self.node_size = np.asarray(
            [len(hierarchy.docsets[i]) for i in range(n)], np.int64
        )
        self.child_count = np.asarray(
            [len(hierarchy.children[i]) for i in range(n)], np.int64
        )
        self.parent_or_self = hierarchy.parent.copy()

        present = self.docfreq.copy()
        present.data = np.ones_like(present.data)
        child = sp.csr_matrix(
            (np.ones(sum(len(c) for c in hierarchy.children), np.int64),
             (np.concatenate([np.full(len(c), i, np.int64)
                              for i, c in enumerate(hierarchy.children)])
              if any(len(c) for c in hierarchy.children) else np.empty(0, np.int64),
              np.concatenate([np.asarray(c, np.int64)
                              for c in hierarchy.children])
              if any(len(c) for c in hierarchy.children) else np.empty(0, np.int64))),
            shape=(n, n),
        )
        self.child_incidence = child
        self.child_support = (child @ present).tocsr()
        self.child_support.sort_indices()

        self.n_docs = matrix.n_docs
        self.n_terms = m
        self.n_nodes = n
        self.global_freq = self._dense_row(self.freq, hierarchy.root)
        self.global_df = self._dense_row(self.docfreq, hierarchy.root)
        self._level_freq = {}

    @staticmethod
    def _dense_row(csr, i):
        out = np.zeros(csr.shape[1], np.int64)
        out[csr.indices[csr.indptr[i]:csr.indptr[i + 1]]] = \
            csr.data[csr.indptr[i]:csr.indptr[i + 1]]
        return out

    def freq_row(self, i: int) -> np.ndarray:
        return self._dense_row(self.freq, i)

    def docfreq_row(self, i: int) -> np.ndarray:
        return self._dense_row(self.docfreq, i)

    def child_support_row(self, i: int) -> np.ndarray:
        return self._dense_row(self.child_support, i)

    def freq_of(self, i: int, term: int) -> int:
        return int(self.freq[i, term])

    def docfreq_of(self, i: int, term: int) -> int:
        return int(self.docfreq[i, term])

    def level_freq(self, lvl: int) -> np.ndarray:
        """Summed term counts over every node at a given level (dense)."""
        if lvl not in self._level_freq:
            nodes = self.hierarchy.nodes_at_level(lvl)
            if nodes.size == 0:
                self._level_freq[lvl] = np.zeros(self.n_terms, np.int64)
            else:
                self._level_freq[lvl] = np.asarray(
                    self.freq[nodes].sum(axis=0), np.int64
                ).ravel()
        return self._level_freq[lvl]


def build_node_stats(matrix: DocTermMatrix, hierarchy: Hierarchy) -> NodeTermStats:
    return NodeTermStats(matrix, hierarchy)
