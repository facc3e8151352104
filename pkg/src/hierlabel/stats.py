"""Additive variance decomposition of the retrieval measures and the
Student-Newman-Keuls multiple mean comparison.

The measure is modeled as grand mean + hierarchy-level effect + labeling-
method effect (sum-to-zero coding, plain least squares), so balanced and
unbalanced observation tables are both handled.  SNK letter groups are
computed over the adjusted (least-squares) means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats as _sps

from .errors import NumericalError
from .queryeval import ObservationTable


@dataclass
class GlmFit:
    mu: float
    factors: dict                  # name -> ordered list of level labels
    effects: dict                  # name -> {level: effect}
    adjusted_means: dict           # name -> {level: mu + effect}
    group_sizes: dict              # name -> {level: observation count}
    resid_var: float
    df_resid: int
    n_obs: int


def _encode_sum_to_zero(values, levels):
    """n x (k-1) sum-to-zero contrast columns for one categorical factor."""
    k = len(levels)
    pos = {lv: j for j, lv in enumerate(levels)}
    x = np.zeros((len(values), k - 1))
    for i, v in enumerate(values):
        j = pos[v]
        if j < k - 1:
            x[i, j] = 1.0
        else:
            x[i, :] = -1.0
    return x


def _fit(y, factor_values: dict, factor_levels: dict) -> GlmFit:
    n = y.size
    names = list(factor_values)
    blocks = [np.ones((n, 1))]
    for name in names:
        levels = factor_levels[name]
        if len(levels) < 2:
            raise NumericalError(
                f"factor {name!r} needs at least two levels, got {levels}"
            )
        counts = {lv: 0 for lv in levels}
        for v in factor_values[name]:
            if v not in counts:
                raise NumericalError(f"unexpected {name} level {v!r}")
            counts[v] += 1
        empty = [lv for lv, c in counts.items() if c == 0]
        if empty:
            raise NumericalError(
                f"factor {name!r} level {empty[0]!r} has no observations"
            )
        blocks.append(_encode_sum_to_zero(factor_values[name], levels))
    x = np.hstack(blocks)
    beta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    rss = float(resid @ resid)
    df = n - int(rank)
    resid_var = rss / df if df > 0 else 0.0

    mu = float(beta[0])
    effects, adjusted, sizes = {}, {}, {}
    col = 1
    for name in names:
        levels = factor_levels[name]
        k = len(levels)
        coef = beta[col:col + k - 1]
        col += k - 1
        eff = {lv: float(coef[j]) for j, lv in enumerate(levels[:-1])}
        eff[levels[-1]] = float(-coef.sum())
        effects[name] = eff
        adjusted[name] = {lv: mu + e for lv, e in eff.items()}
        cnt = {lv: 0 for lv in levels}
        for v in factor_values[name]:
            cnt[v] += 1
        sizes[name] = cnt
    return GlmFit(
        mu=mu, factors={n_: list(factor_levels[n_]) for n_ in names},
        effects=effects, adjusted_means=adjusted, group_sizes=sizes,
        resid_var=resid_var, df_resid=df, n_obs=n,
    )


def fit_additive_model(table: ObservationTable, measure: str,
                       methods=None, levels=None) -> GlmFit:
    """measure ~ mean + hierarchy level + labeling method, least squares.

    The table must already be restricted to a single query kind.  Explicit
    ``methods``/``levels`` lists let the caller pin the factor levels; by
    default they are taken from the data.
    """
    if not table.rows:
        raise NumericalError("empty observation table")
    y = table.values(measure).astype(np.float64)
    lv = [r.level for r in table.rows]
    mt = [r.method for r in table.rows]
    levels = list(levels) if levels is not None else sorted(set(lv))
    methods = list(methods) if methods is not None else table.methods()
    return _fit(y, {"level": lv, "method": mt},
                {"level": levels, "method": methods})


def fit_level_model(table: ObservationTable, measure: str,
                    levels=None) -> GlmFit:
    """measure ~ mean + hierarchy level, for a single method's rows."""
    if not table.rows:
        raise NumericalError("empty observation table")
    methods = {r.method for r in table.rows}
    if len(methods) > 1:
        raise NumericalError(
            f"level model expects one method, got {sorted(methods)}"
        )
    y = table.values(measure).astype(np.float64)
    lv = [r.level for r in table.rows]
    levels = list(levels) if levels is not None else sorted(set(lv))
    return _fit(y, {"level": lv}, {"level": levels})


@lru_cache(maxsize=None)
def _srq_cached(alpha: float, k: int, df: float) -> float:
    q = float(_sps.studentized_range.ppf(1.0 - alpha, k, df))
    if not math.isfinite(q):
        raise NumericalError(
            f"studentized range quantile failed for alpha={alpha}, k={k}, df={df}"
        )
    return q


def studentized_range_quantile(alpha: float, k: int, df) -> float:
    """Upper-alpha quantile of the studentized range distribution.

    ``df`` may be math.inf for the limiting (known-variance) case.
    """
    if not 0 < alpha < 1:
        raise NumericalError("alpha must be in (0, 1)")
    if k < 2:
        raise NumericalError("range size k must be >= 2")
    df = float(df)
    if df < 1:
        raise NumericalError("df must be >= 1 (or inf)")
    return _srq_cached(alpha, int(k), df)


@dataclass
class SnkGrouping:
    """Factor levels sorted by adjusted mean (descending) with letter sets;
    two levels share a letter iff SNK could not separate them."""
    factor: str
    alpha: float
    entries: list = field(default_factory=list)  # (level, mean, letters)


def snk_compare(fit: GlmFit, factor: str, alpha: float = 0.05) -> SnkGrouping:
    """Stepwise Student-Newman-Keuls over the factor's adjusted means.

    A span of p adjacent sorted means is homogeneous when its range is at
    most q(alpha, p, df) * sqrt(resid_var / n~), with n~ the harmonic mean
    of the group sizes.  Once a span is homogeneous its sub-spans are not
    tested (the usual protection rule).  With zero residual variance only
    exactly equal means share a group.
    """
    if factor not in fit.adjusted_means:
        raise NumericalError(f"fit has no factor {factor!r}")
    means = fit.adjusted_means[factor]
    levels = sorted(means, key=lambda lv: (-means[lv], str(lv)))
    k = len(levels)
    if k < 2:
        raise NumericalError("SNK needs at least two levels")
    sizes = [fit.group_sizes[factor][lv] for lv in levels]
    n_harm = len(sizes) / sum(1.0 / s for s in sizes)
    m = np.asarray([means[lv] for lv in levels])

    degenerate = fit.resid_var <= 0.0 or fit.df_resid <= 0

    def critical(p):
        if degenerate:
            return 0.0
        q = studentized_range_quantile(alpha, p, fit.df_resid)
        return q * math.sqrt(fit.resid_var / n_harm)

    homogeneous = set()
    tested = {}

    def walk(i, j):
        if i >= j or (i, j) in tested:
            return
        span = j - i + 1
        ok = (m[i] - m[j]) <= critical(span) + 1e-12 * max(1.0, abs(m[i]))
        tested[(i, j)] = ok
        if ok:
            homogeneous.add((i, j))
        else:
            walk(i, j - 1)
            walk(i + 1, j)

    walk(0, k - 1)

    # maximal homogeneous spans, plus singletons for uncovered levels
    spans = sorted(homogeneous)
    maximal = [s for s in spans
               if not any(o != s and o[0] <= s[0] and s[1] <= o[1] for o in spans)]
    covered = set()
    for a, b in maximal:
        covered.update(range(a, b + 1))
    for i in range(k):
        if i not in covered:
            maximal.append((i, i))
    maximal.sort()

    letters = [set() for _ in range(k)]
    for rank, (a, b) in enumerate(maximal):
        mark = _letter(rank)
        for i in range(a, b + 1):
            letters[i].add(mark)
    grouping = SnkGrouping(factor=factor, alpha=alpha)
    for i, lv in enumerate(levels):
        grouping.entries.append((lv, float(m[i]), "".join(sorted(letters[i]))))
    return grouping


def _letter(rank: int) -> str:
    out = ""
    rank += 1
    while rank:
        rank, r = divmod(rank - 1, 26)
        out = chr(ord("a") + r) + out
    return out
