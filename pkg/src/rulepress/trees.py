"""Depth-limited regression trees, CART-style or with test-based variable selection.

In ``"cart"`` mode every candidate (variable, cut) pair is scored by the
weighted reduction in squared error. In ``"unbiased"`` mode the split variable
is chosen first, as the candidate with the smallest Bonferroni-adjusted
association p-value (Pearson t-test for numeric candidates, one-way ANOVA F
test for unordered factors), and the node is not split when that p-value
exceeds ``alpha``; the cut is then chosen by squared-error reduction within
the selected variable only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .dataio import CONTINUOUS, ORDERED, Dataset
from .rules import GT, IN, LE, Condition

CART = "cart"
UNBIASED = "unbiased"


@dataclass(frozen=True)
class TreeConfig:
    maxdepth: float = 3
    mtry: float = math.inf
    mode: str = UNBIASED
    alpha: float = 0.05
    minsplit: int = 20
    minbucket: int = 7
    ordinal_as_continuous: bool = True

    def __post_init__(self):
        if not (self.maxdepth >= 1):
            raise ValueError("maxdepth must be >= 1")
        if not (self.mtry >= 1):
            raise ValueError("mtry must be >= 1")
        if self.mode not in (CART, UNBIASED):
            raise ValueError(f"unknown tree mode {self.mode!r}")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.minbucket < 1:
            raise ValueError("minbucket must be >= 1")
        if self.minsplit < 2 * self.minbucket:
            raise ValueError("minsplit must be >= 2 * minbucket")


@dataclass(frozen=True)
class SplitSpec:
    """Binary split: ``variable <= cut`` (numeric) or ``variable in left_levels``.

    ``levels`` is the variable's full level list for categorical variables;
    the right branch of a level split takes every level not in ``left_levels``.
    """

    variable: str
    cut: Optional[float] = None
    left_levels: Optional[tuple[str, ...]] = None
    levels: Optional[tuple[str, ...]] = None

    def conditions(self) -> tuple[Condition, Condition]:
        if self.left_levels is None:
            return (Condition(self.variable, LE, self.cut, self.levels),
                    Condition(self.variable, GT, self.cut, self.levels))
        right = tuple(l for l in self.levels if l not in self.left_levels)
        return (Condition(self.variable, IN, self.left_levels, self.levels),
                Condition(self.variable, IN, right, self.levels))


@dataclass
class TreeNode:
    id: int
    prediction: float
    depth: int
    n_node: int
    weight: float = 0.0
    split: Optional[SplitSpec] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    def nodes(self):
        """Pre-order traversal."""
        yield self
        if not self.is_leaf:
            yield from self.left.nodes()
            yield from self.right.nodes()

    def max_depth(self) -> int:
        return max(n.depth for n in self.nodes())


class FeatureMatrix:
    """Numeric encoding of a dataset's predictors for split search.

    Continuous columns (and ordered factors when treated as continuous, via
    their 1-based level index) are ``numeric``; the remaining categorical
    columns are ``nominal`` with 0-based level codes.
    """

    def __init__(self, data: Dataset, names=None, ordinal_as_continuous: bool = True):
        self.names = list(names) if names is not None else data.predictors
        self.schemas = [data.column_schema(n) for n in self.names]
        p = len(self.names)
        self.X = np.empty((data.n_rows, p))
        self.nominal = np.zeros(p, dtype=bool)
        self.nlevels = np.zeros(p, dtype=np.int64)
        for j, col in enumerate(self.schemas):
            if col.kind == CONTINUOUS or (col.kind == ORDERED and ordinal_as_continuous):
                self.X[:, j] = data.numeric(col.name)
            else:
                self.X[:, j] = data.codes(col.name)
                self.nominal[j] = True
                self.nlevels[j] = len(col.levels)
        self.ordinal_as_continuous = ordinal_as_continuous

    @property
    def p(self) -> int:
        return len(self.names)

    def split_spec(self, j: int, cut=None, left_codes=None) -> SplitSpec:
        col = self.schemas[j]
        if left_codes is None:
            return SplitSpec(col.name, cut=float(cut), levels=col.levels)
        left = tuple(col.levels[c] for c in sorted(int(c) for c in left_codes))
        return SplitSpec(col.name, left_levels=left, levels=col.levels)


# -- split scoring -----------------------------------------------------------

def _numeric_cut(x, y, w, minbucket):
    """Best ``x <= cut`` split by weighted SSE reduction; ``y`` is node-centred."""
    n = x.shape[0]
    if n < 2 * minbucket:
        return -np.inf, None
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cw = np.cumsum(w[order])
    cwy = np.cumsum(w[order] * y[order])
    W, S = cw[-1], cwy[-1]
    i = np.arange(minbucket - 1, n - minbucket)
    i = i[xs[i] < xs[i + 1]]
    if i.size == 0:
        return -np.inf, None
    WL, SL = cw[i], cwy[i]
    WR, SR = W - WL, S - SL
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = SL * SL / WL + SR * SR / WR - S * S / W
    gain = np.where((WL > 0) & (WR > 0), gain, -np.inf)
    b = int(np.argmax(gain))
    return gain[b], xs[i[b]]


def _nominal_cut(codes, y, w, minbucket, nlev):
    """Best level-subset split: levels ordered by node mean, contiguous partitions."""
    codes = codes.astype(np.int64)
    cnt = np.bincount(codes, minlength=nlev)
    present = np.flatnonzero(cnt)
    if present.size < 2:
        return -np.inf, None
    Wg = np.bincount(codes, weights=w, minlength=nlev)[present]
    Sg = np.bincount(codes, weights=w * y, minlength=nlev)[present]
    cg = cnt[present]
    with np.errstate(divide="ignore", invalid="ignore"):
        means = np.where(Wg > 0, Sg / Wg, 0.0)
    order = np.argsort(means, kind="stable")
    cWL, cSL, cN = np.cumsum(Wg[order]), np.cumsum(Sg[order]), np.cumsum(cg[order])
    W, S, N = cWL[-1], cSL[-1], cN[-1]
    WL, SL, NL = cWL[:-1], cSL[:-1], cN[:-1]
    WR, SR = W - WL, S - SL
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = SL * SL / WL + SR * SR / WR - S * S / W
    ok = (NL >= minbucket) & (N - NL >= minbucket) & (WL > 0) & (WR > 0)
    gain = np.where(ok, gain, -np.inf)
    if not np.any(ok):
        return -np.inf, None
    b = int(np.argmax(gain))
    return gain[b], present[order[: b + 1]]


def association_pvalues(fm: FeatureMatrix, cols, rows, y, w) -> np.ndarray:
    """Unadjusted p-values for association of each candidate column with ``y``."""
    n = rows.shape[0]
    W = w.sum()
    yc = y - (w @ y) / W
    syy = w @ (yc * yc)
    out = np.ones(len(cols))
    if syy <= 0 or n < 3:
        return out
    cols = np.asarray(cols)
    num = cols[~fm.nominal[cols]]
    if num.size:
        Xn = fm.X[np.ix_(rows, num)]
        Xc = Xn - (w @ Xn) / W
        sxx = w @ (Xc * Xc)
        sxy = (Xc * w[:, None]).T @ yc
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(sxx > 0, sxy / np.sqrt(sxx * syy), 0.0)
        r = np.clip(r, -1.0, 1.0)
        df = n - 2
        with np.errstate(divide="ignore"):
            t = np.abs(r) * np.sqrt(df / np.maximum(1.0 - r * r, 1e-300))
        p = 2.0 * special.stdtr(df, -t)
        p = np.where(sxx > 0, p, 1.0)
        out[~fm.nominal[cols]] = p
    for pos in np.flatnonzero(fm.nominal[cols]):
        j = cols[pos]
        codes = fm.X[rows, j].astype(np.int64)
        nlev = fm.nlevels[j]
        Wg = np.bincount(codes, weights=w, minlength=nlev)
        present = Wg > 0
        g = int(present.sum())
        if g < 2 or n - g < 1:
            continue
        Sg = np.bincount(codes, weights=w * yc, minlength=nlev)[present]
        ssb = np.sum(Sg * Sg / Wg[present])
        ssw = max(syy - ssb, 0.0)
        if ssw <= 1e-14 * syy:
            out[pos] = 0.0 if ssb > 0 else 1.0
            continue
        F = (ssb / (g - 1)) / (ssw / (n - g))
        out[pos] = special.fdtrc(g - 1, n - g, F)
    return out


def select_split(fm: FeatureMatrix, rows, y, w, config: TreeConfig, rng=None) -> Optional[SplitSpec]:
    """Choose the split for a node, or ``None`` when the node should stay a leaf."""
    n = rows.shape[0]
    if n < config.minsplit or n < 2 * config.minbucket:
        return None
    W = w.sum()
    if W <= 0:
        return None
    yc = y - (w @ y) / W
    sst = w @ (yc * yc)
    if sst <= 0:
        return None
    p = fm.p
    if config.mtry < p:
        rng = np.random.default_rng(rng)
        cols = np.sort(rng.choice(p, size=int(config.mtry), replace=False))
    else:
        cols = np.arange(p)

    if config.mode == UNBIASED:
        pv = association_pvalues(fm, cols, rows, y, w)
        adj = np.minimum(pv * len(cols), 1.0)
        b = int(np.argmin(adj))
        if adj[b] > config.alpha:
            return None
        cols = cols[b:b + 1]

    best_gain, best = 1e-12 * sst, None
    for j in cols:
        x = fm.X[rows, j]
        if fm.nominal[j]:
            gain, left = _nominal_cut(x, yc, w, config.minbucket, fm.nlevels[j])
            if gain > best_gain:
                best_gain, best = gain, (j, None, left)
        else:
            gain, cut = _numeric_cut(x, yc, w, config.minbucket)
            if gain > best_gain:
                best_gain, best = gain, (j, cut, None)
    if best is None:
        return None
    j, cut, left = best
    return fm.split_spec(j, cut=cut, left_codes=left)


def _goes_left(fm: FeatureMatrix, spec: SplitSpec, rows) -> np.ndarray:
    j = fm.names.index(spec.variable)
    x = fm.X[rows, j]
    if spec.left_levels is None:
        return x <= spec.cut
    col = fm.schemas[j]
    codes = [col.levels.index(l) for l in spec.left_levels]
    return np.isin(x.astype(np.int64), codes)


def grow_tree(data, y, weights=None, config: TreeConfig = TreeConfig(), rng=None,
              rows=None) -> TreeNode:
    """Grow a regression tree on ``y`` over ``rows`` of ``data``.

    ``data`` is a :class:`Dataset` or a prebuilt :class:`FeatureMatrix`;
    ``y`` and ``weights`` are aligned with ``rows`` (all rows when ``None``).
    """
    fm = data if isinstance(data, FeatureMatrix) else FeatureMatrix(
        data, ordinal_as_continuous=config.ordinal_as_continuous)
    if rows is None:
        rows = np.arange(fm.X.shape[0])
    rows = np.asarray(rows, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != rows.shape:
        raise ValueError("y must have one value per row")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng(rng)
    counter = iter(range(1 << 62))

    def build(idx, depth):
        sub_y, sub_w = y[idx], w[idx]
        W = sub_w.sum()
        pred = float(sub_w @ sub_y / W) if W > 0 else float(sub_y.mean())
        node = TreeNode(next(counter), pred, depth, idx.shape[0], float(W))
        if depth >= config.maxdepth:
            return node
        spec = select_split(fm, rows[idx], sub_y, sub_w, config, rng)
        if spec is None:
            return node
        left = _goes_left(fm, spec, rows[idx])
        node.split = spec
        node.left = build(idx[left], depth + 1)
        node.right = build(idx[~left], depth + 1)
        return node

    return build(np.arange(rows.shape[0]), 0)


def predict_tree(tree: TreeNode, row: dict) -> float:
    """Prediction of the leaf whose path conditions ``row`` satisfies."""
    node = tree
    while not node.is_leaf:
        left_cond, _ = node.split.conditions()
        if node.split.variable not in row:
            raise ValueError(f"row lacks variable {node.split.variable!r}")
        node = node.left if left_cond.holds(row[node.split.variable]) else node.right
    return node.prediction


def apply_tree(tree: TreeNode, data) -> np.ndarray:
    """Vectorised :func:`predict_tree` over every row of ``data``."""
    if isinstance(data, FeatureMatrix):
        fm = data
        out = np.empty(fm.X.shape[0])

        def walk(node, idx):
            if node.is_leaf:
                out[idx] = node.prediction
                return
            left = _goes_left(fm, node.split, idx)
            walk(node.left, idx[left])
            walk(node.right, idx[~left])

        walk(tree, np.arange(fm.X.shape[0]))
        return out
    out = np.empty(data.n_rows)

    def walk_ds(node, mask):
        if node.is_leaf:
            out[mask] = node.prediction
            return
        left_cond, _ = node.split.conditions()
        lm = left_cond.mask(data)
        walk_ds(node.left, mask & lm)
        walk_ds(node.right, mask & ~lm)

    walk_ds(tree, np.ones(data.n_rows, dtype=bool))
    return out
