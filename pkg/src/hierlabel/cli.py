"""Benchmark driver: label a document hierarchy with all sixteen methods,
evaluate the labels by boolean retrieval, fit the variance models, and
score label coherence, emitting CSV reports plus gnuplot-ready per-level
curves.

Stages are independently re-runnable; each consumes the previous stage's
CSV outputs.  Given identical inputs and configuration, every report is
byte-identical across runs and thread counts.

Exit codes: 0 success, 2 configuration error, 3 input validation error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import coherence as coh
from . import corpus as corp
from . import labeling as lab
from . import queryeval as qe
from . import stats as st
from .errors import (ConfigError, HierlabelError, NumericalError, ParseError,
                     ValidationError)

MEASURES = ("precision", "recall", "f")
KINDS = ("specific", "generic")


def fmt(x) -> str:
    """Report formatting: floats with 6 significant digits."""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


@dataclass
class RunConfig:
    matrix: Path
    vocabulary: Path
    hierarchy: Path
    out_dir: Path
    reference_corpus: Path | None = None
    p_cap: int = 10
    alpha: float = 0.05
    methods: list = field(default_factory=lambda: list(lab.METHODS))
    chi2_shape: str = "full_table"
    rcl_fp: str = "corrected"
    oc_aggregate: str = "sum"
    big_threshold: int = 5
    npmi_epsilon: float = 0.0
    df_filter: tuple | None = None
    threads: int = 1

    def validate(self):
        if self.p_cap < 1:
            raise ConfigError("p_cap must be >= 1")
        if not (0 < self.alpha < 1):
            raise ConfigError("alpha must be in (0, 1)")
        if not self.methods:
            raise ConfigError("method list is empty")
        bad = [m for m in self.methods if m not in lab.METHODS]
        if bad:
            raise ConfigError("unknown methods: " + ", ".join(bad))
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate method in method list")
        if self.oc_aggregate not in ("sum", "mean"):
            raise ConfigError(f"unknown oc_aggregate {self.oc_aggregate!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.df_filter is not None:
            low, high = self.df_filter
            if not (0 <= low < high <= 1):
                raise ConfigError("df_filter requires 0 <= low < high <= 1")
        for name in ("matrix", "vocabulary", "hierarchy"):
            p = getattr(self, name)
            if not Path(p).is_file():
                raise ConfigError(f"{name} file not found: {p}")
        if self.reference_corpus is not None \
                and not Path(self.reference_corpus).is_file():
            raise ConfigError(
                f"reference corpus not found: {self.reference_corpus}")
        # construction re-checks chi2_shape / rcl_fp / big_threshold
        self.label_config()

    def label_config(self) -> lab.LabelConfig:
        return lab.LabelConfig(
            p_cap=self.p_cap, alpha=self.alpha, chi2_shape=self.chi2_shape,
            rcl_fp=self.rcl_fp, big_threshold=self.big_threshold,
        )

    def echo(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, Path):
                d[k] = str(v)
        if d["reference_corpus"] is not None:
            d["reference_corpus"] = str(d["reference_corpus"])
        if d["df_filter"] is not None:
            d["df_filter"] = list(d["df_filter"])
        return d


def load_config(path, overrides: dict) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        blob = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e.msg}") from None
    if not isinstance(blob, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    known = {
        "matrix", "vocabulary", "hierarchy", "reference_corpus", "out_dir",
        "p_cap", "alpha", "methods", "chi2_shape", "rcl_fp", "oc_aggregate",
        "big_threshold", "npmi_epsilon", "df_filter", "threads",
    }
    unknown = set(blob) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
    base = path.parent

    def respath(v):
        p = Path(v)
        return p if p.is_absolute() else base / p

    kwargs = {}
    for name in ("matrix", "vocabulary", "hierarchy", "out_dir"):
        if name not in blob:
            raise ConfigError(f"{path}: missing required key {name!r}")
        kwargs[name] = respath(blob[name])
    if blob.get("reference_corpus") is not None:
        kwargs["reference_corpus"] = respath(blob["reference_corpus"])
    for name in ("p_cap", "alpha", "methods", "chi2_shape", "rcl_fp",
                 "oc_aggregate", "big_threshold", "npmi_epsilon", "threads"):
        if name in blob:
            kwargs[name] = blob[name]
    if blob.get("df_filter") is not None:
        f = blob["df_filter"]
        if not isinstance(f, dict) or "low" not in f or "high" not in f:
            raise ConfigError(f"{path}: df_filter needs 'low' and 'high'")
        kwargs["df_filter"] = (float(f["low"]), float(f["high"]))

    for k, v in overrides.items():
        if v is not None:
            kwargs[k] = v
    try:
        cfg = RunConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad config: {e}") from None
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# input assembly
# ---------------------------------------------------------------------------

@dataclass
class InputBundle:
    matrix: corp.DocTermMatrix        # df-filtered when configured
    vocab: corp.Vocabulary            # filtered vocabulary
    vocab_full: corp.Vocabulary       # as loaded from disk
    hierarchy: corp.Hierarchy
    remap: np.ndarray                 # original term id -> working id, -1 dropped
    orig_id: np.ndarray               # working id -> original term id


def load_inputs(cfg: RunConfig) -> InputBundle:
    matrix = corp.load_matrix(cfg.matrix)
    vocab_full = corp.load_vocabulary(cfg.vocabulary)
    if len(vocab_full) != matrix.n_terms:
        raise ValidationError(
            f"vocabulary has {len(vocab_full)} terms, matrix has "
            f"{matrix.n_terms}"
        )
    if cfg.df_filter is not None:
        matrix, remap = corp.salton_df_filter(matrix, *cfg.df_filter)
        orig_id = np.flatnonzero(remap >= 0)
        vocab = vocab_full.subset(orig_id)
    else:
        remap = np.arange(matrix.n_terms, dtype=np.int64)
        orig_id = remap
        vocab = vocab_full
    hierarchy = corp.load_hierarchy(cfg.hierarchy, matrix)
    return InputBundle(matrix, vocab, vocab_full, hierarchy, remap, orig_id)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class OutputTracker:
    """Registers written files so a failed stage leaves no partial output."""

    def __init__(self, out_dir: Path, dry_run: bool = False):
        self.out_dir = Path(out_dir)
        self.dry_run = dry_run
        self.written = []
        if not dry_run:
            try:
                self.out_dir.mkdir(parents=True, exist_ok=True)
                (self.out_dir / "plots").mkdir(exist_ok=True)
            except OSError as e:
                raise ConfigError(f"cannot create output dir: {e}") from None

    def open(self, relname: str):
        path = self.out_dir / relname
        self.written.append(path)
        return open(path, "w", encoding="utf-8", newline="")

    def cleanup(self):
        for p in self.written:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


def write_manifest(tracker: OutputTracker, cfg: RunConfig, stage: str,
                   extra_inputs=()):
    inputs = {"matrix": cfg.matrix, "vocabulary": cfg.vocabulary,
              "hierarchy": cfg.hierarchy}
    if cfg.reference_corpus is not None:
        inputs["reference_corpus"] = cfg.reference_corpus
    for name, path in extra_inputs:
        inputs[name] = path
    manifest = {
        "stage": stage,
        "config": cfg.echo(),
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)}
                   for k, v in inputs.items()},
    }
    with tracker.open("run_manifest.json") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# stage: label
# ---------------------------------------------------------------------------

def stage_label(cfg: RunConfig, tracker: OutputTracker):
    bundle = load_inputs(cfg)
    stats = corp.build_node_stats(bundle.matrix, bundle.hierarchy)
    assignments = lab.label_all(stats, cfg.methods, cfg.label_config(),
                                threads=cfg.threads)
    with tracker.open("labels.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "node_id", "rank", "term_id", "term_surface",
                    "score"])
        for method in cfg.methods:
            labels = assignments[method].labels
            for i in range(bundle.hierarchy.n_nodes):
                nid = int(bundle.hierarchy.ids[i])
                for rank, (t, score) in enumerate(labels.get(i, []), start=1):
                    orig = int(bundle.orig_id[t])
                    w.writerow([method, nid, rank, orig,
                                bundle.vocab_full.surface(orig), fmt(score)])
    return bundle, assignments


def read_labels_csv(path) -> dict:
    """method -> {node_id: [(original term id, score)] in rank order}."""
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            method = row["method"]
            nid = int(row["node_id"])
            out.setdefault(method, {}).setdefault(nid, []).append(
                (int(row["rank"]), int(row["term_id"]), float(row["score"]))
            )
    for method in out:
        for nid in out[method]:
            out[method][nid] = [(t, s) for _, t, s in sorted(out[method][nid])]
    return out


def _assignments_from_csv(rows: dict, bundle: InputBundle, methods) -> dict:
    """Rebuild LabelAssignments (internal node indices, working term ids)."""
    assignments = {}
    for method in methods:
        a = lab.LabelAssignment(method)
        per_node = rows.get(method, {})
        for i in range(bundle.hierarchy.n_nodes):
            nid = int(bundle.hierarchy.ids[i])
            pairs = []
            for orig, score in per_node.get(nid, []):
                if orig < 0 or orig >= bundle.remap.size or bundle.remap[orig] < 0:
                    raise ValidationError(
                        f"labels.csv references term {orig} absent from the "
                        f"working vocabulary"
                    )
                pairs.append((int(bundle.remap[orig]), score))
            a.labels[i] = pairs
        assignments[method] = a
    return assignments


# ---------------------------------------------------------------------------
# stage: evaluate
# ---------------------------------------------------------------------------

def stage_evaluate(cfg: RunConfig, tracker: OutputTracker):
    bundle = load_inputs(cfg)
    labels_path = tracker.out_dir / "labels.csv"
    if not labels_path.is_file():
        raise ConfigError(f"labels.csv not found in {tracker.out_dir}; "
                          "run the label stage first")
    rows = read_labels_csv(labels_path)
    assignments = _assignments_from_csv(rows, bundle, cfg.methods)
    table, queries = qe.evaluate_all(bundle.matrix, bundle.hierarchy,
                                     assignments, threads=cfg.threads)
    with tracker.open("metrics.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "node_id", "level", "kind",
                    "precision", "recall", "f"])
        by_key = {(r.method, r.node_id, r.kind): r for r in table.rows}
        for method in cfg.methods:
            for i in range(bundle.hierarchy.n_nodes):
                nid = int(bundle.hierarchy.ids[i])
                for kind in KINDS:
                    r = by_key[(method, nid, kind)]
                    w.writerow([method, nid, r.level, kind,
                                fmt(r.precision), fmt(r.recall), fmt(r.f)])
    with tracker.open("queries.txt") as fh:
        for method in cfg.methods:
            for kind in KINDS:
                qmap = queries[method][kind]
                for i in range(bundle.hierarchy.n_nodes):
                    nid = int(bundle.hierarchy.ids[i])
                    fh.write(f"{method} {nid} {kind} "
                             f"{qe.query_to_prefix(qmap[i])}\n")
    return table


def read_metrics_csv(path) -> qe.ObservationTable:
    table = qe.ObservationTable()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            table.rows.append(qe.ObservationRow(
                method=row["method"], node_id=int(row["node_id"]),
                level=int(row["level"]), kind=row["kind"],
                precision=float(row["precision"]), recall=float(row["recall"]),
                f=float(row["f"]),
            ))
    return table


# ---------------------------------------------------------------------------
# stage: stats
# ---------------------------------------------------------------------------

def emit_level_plot_data(fits: dict, measure: str, kind: str,
                         tracker: OutputTracker):
    """One gnuplot-compatible (level, mean) file per method."""
    for method, fit in fits.items():
        with tracker.open(f"plots/{method}_{measure}_{kind}.dat") as fh:
            for lvl in fit.factors["level"]:
                fh.write(f"{lvl} {fmt(fit.adjusted_means['level'][lvl])}\n")


def stage_stats(cfg: RunConfig, tracker: OutputTracker):
    metrics_path = tracker.out_dir / "metrics.csv"
    if not metrics_path.is_file():
        raise ConfigError(f"metrics.csv not found in {tracker.out_dir}; "
                          "run the evaluate stage first")
    table = read_metrics_csv(metrics_path)
    wanted = set(cfg.methods)
    table = qe.ObservationTable([r for r in table.rows if r.method in wanted])
    for kind in KINDS:
        sub = table.filter(kind=kind)
        for measure in MEASURES:
            if len(cfg.methods) >= 2:
                fit = st.fit_additive_model(sub, measure, methods=cfg.methods)
                entries = st.snk_compare(fit, "method", cfg.alpha).entries
            else:
                # single-method run: the method factor degenerates; the
                # level-only fit supplies the mean and variance
                fit = st.fit_level_model(sub, measure)
                entries = [(cfg.methods[0], fit.mu, "a")]
            with tracker.open(f"stats_{measure}_{kind}.csv") as fh:
                fh.write(f"# df_r={fit.df_resid},V_E={fmt(fit.resid_var)},"
                         f"alpha={fmt(cfg.alpha)}\n")
                w = csv.writer(fh)
                w.writerow(["method", "adjusted_mean", "letters"])
                for lv, mean, letters in entries:
                    w.writerow([lv, fmt(mean), letters])

            level_fits = {}
            for method in cfg.methods:
                mtab = sub.filter(method=method)
                level_fits[method] = st.fit_level_model(mtab, measure)
            with tracker.open(f"level_means_{measure}_{kind}.csv") as fh:
                w = csv.writer(fh)
                w.writerow(["method", "level", "mean"])
                for method in cfg.methods:
                    fitm = level_fits[method]
                    for lvl in fitm.factors["level"]:
                        w.writerow([method, lvl,
                                    fmt(fitm.adjusted_means["level"][lvl])])
            emit_level_plot_data(level_fits, measure, kind, tracker)


# ---------------------------------------------------------------------------
# stage: coherence
# ---------------------------------------------------------------------------

def stage_coherence(cfg: RunConfig, tracker: OutputTracker):
    if cfg.reference_corpus is None:
        raise ConfigError("coherence stage requires a reference_corpus path")
    bundle = load_inputs(cfg)
    labels_path = tracker.out_dir / "labels.csv"
    if not labels_path.is_file():
        raise ConfigError(f"labels.csv not found in {tracker.out_dir}; "
                          "run the label stage first")
    rows = read_labels_csv(labels_path)
    corpus = coh.load_reference_corpus(cfg.reference_corpus)
    if not corpus:
        raise ValidationError(
            f"reference corpus {cfg.reference_corpus} has no documents")

    label_terms = set()
    for method in cfg.methods:
        for pairs in rows.get(method, {}).values():
            label_terms.update(t for t, _ in pairs)
    counts = coh.count_cooccurrence(corpus, bundle.vocab_full,
                                    restrict_terms=sorted(label_terms))

    per_node, missing = {}, {}
    for method in cfg.methods:
        vals, miss = {}, {}
        per = rows.get(method, {})
        for i in range(bundle.hierarchy.n_nodes):
            nid = int(bundle.hierarchy.ids[i])
            terms = [t for t, _ in per.get(nid, [])]
            vals[nid] = coh.oc_npmi(counts, terms, cfg.p_cap,
                                    cfg.npmi_epsilon, cfg.oc_aggregate)
            miss[nid] = sum(1 for t in terms[:cfg.p_cap]
                            if counts.unary[t] == 0)
        per_node[method] = vals
        missing[method] = miss
    summary = coh.summarize_coherence(per_node)

    with tracker.open("coherence.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "node_id", "oc"])
        for method in cfg.methods:
            for nid in sorted(per_node[method]):
                w.writerow([method, nid, fmt(per_node[method][nid])])
    with tracker.open("coherence_summary.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "upper_quartile", "maximum"])
        for method in cfg.methods:
            uq, mx = summary[method]
            w.writerow([method, fmt(uq), fmt(mx)])


# ---------------------------------------------------------------------------
# stage: validate
# ---------------------------------------------------------------------------

def stage_validate(cfg: RunConfig):
    bundle = load_inputs(cfg)
    lines = [
        f"matrix: {bundle.matrix.n_docs} docs x {bundle.matrix.n_terms} terms "
        f"({bundle.matrix.csr.nnz} cells)",
        f"hierarchy: {bundle.hierarchy.n_nodes} nodes, "
        f"depth {int(bundle.hierarchy.level.max())}",
        f"methods: {len(cfg.methods)}",
    ]
    if cfg.df_filter is not None:
        kept = bundle.matrix.n_terms
        lines.append(f"df filter kept {kept} of {len(bundle.vocab_full)} terms")
    if cfg.reference_corpus is not None:
        corpus = coh.load_reference_corpus(cfg.reference_corpus)
        if not corpus:
            raise ValidationError(
                f"reference corpus {cfg.reference_corpus} has no documents")
        lines.append(f"reference corpus: {len(corpus)} documents")
    return lines


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

STAGES = ("validate", "label", "evaluate", "stats", "coherence", "all")


def run_stage(stage: str, cfg: RunConfig, dry_run: bool = False) -> list:
    """Execute one subcommand; returns human-readable summary lines."""
    summary = stage_validate(cfg)
    if dry_run or stage == "validate":
        return summary + (["dry run: no outputs written"] if dry_run else [])
    tracker = OutputTracker(cfg.out_dir)
    try:
        if stage in ("label", "all"):
            stage_label(cfg, tracker)
        if stage in ("evaluate", "all"):
            stage_evaluate(cfg, tracker)
        if stage in ("stats", "all"):
            stage_stats(cfg, tracker)
        if stage in ("coherence", "all"):
            if stage == "all" and cfg.reference_corpus is None:
                summary.append("coherence skipped: no reference corpus")
            else:
                stage_coherence(cfg, tracker)
        extra = []
        for name in ("labels.csv", "metrics.csv"):
            p = tracker.out_dir / name
            if p.is_file():
                extra.append((name, p))
        write_manifest(tracker, cfg, stage, extra)
    except BaseException:
        tracker.cleanup()
        raise
    summary.append(f"wrote {len(tracker.written)} files to {tracker.out_dir}")
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierlabel",
        description="Benchmark label selection methods for hierarchical "
                    "document clusters.",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--methods", default=None,
                       help="comma-separated subset of the sixteen methods")
        p.add_argument("--p-cap", type=int, default=None, dest="p_cap")
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--dry-run", action="store_true", dest="dry_run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "threads": args.threads,
        "p_cap": args.p_cap,
        "alpha": args.alpha,
        "methods": args.methods.split(",") if args.methods else None,
        "out_dir": Path(args.out) if args.out else None,
    }
    try:
        cfg = load_config(args.config, overrides)
        for line in run_stage(args.stage, cfg, args.dry_run):
            print(line)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ParseError, ValidationError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 4
    except HierlabelError as e:  # pragma: no cover - safety net
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
