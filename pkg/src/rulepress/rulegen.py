"""Initial rule ensemble: sampled, optionally boosted trees turned into rules."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dataio import Dataset, subsample
from .rules import Rule
from .trees import FeatureMatrix, TreeConfig, TreeNode, apply_tree, grow_tree

GAUSSIAN, BINOMIAL, POISSON = "gaussian", "binomial", "poisson"
FAMILIES = (GAUSSIAN, BINOMIAL, POISSON)


def check_family(family: str, y=None) -> str:
    if family not in FAMILIES:
        raise ValueError(f"unsupported family {family!r}; choose from {', '.join(FAMILIES)}")
    if y is None:
        return family
    y = np.asarray(y, dtype=np.float64)
    if family == BINOMIAL and not np.all((y == 0) | (y == 1)):
        raise ValueError("binomial response must be coded 0/1 (or a two-level factor)")
    if family == POISSON and (np.any(y < 0) or np.any(y != np.round(y))):
        raise ValueError("poisson response must be nonnegative integer counts")
    return family


@dataclass(frozen=True)
class BoostState:
    eta: np.ndarray
    nu: float
    family: str

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        if not np.all(np.isfinite(eta)):
            raise ValueError("eta must be finite")
        object.__setattr__(self, "eta", eta)


def init_eta(family: str, y, weights=None) -> float:
    """Starting value of the boosting state (log-odds or log-mean; 0 for gaussian)."""
    check_family(family, y)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    if family == GAUSSIAN:
        return 0.0
    mean = float(w @ y / w.sum())
    if family == BINOMIAL:
        if mean <= 0 or mean >= 1:
            raise ValueError("binomial response needs both classes present")
        return math.log(mean / (1 - mean))
    if mean <= 0:
        raise ValueError("poisson response has mean 0")
    return math.log(mean)


def pseudo_response(family: str, y, state) -> np.ndarray:
    """Working response for the next tree given the current ``eta``."""
    eta = state.eta if isinstance(state, BoostState) else np.asarray(state, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if family == GAUSSIAN:
        return y - eta
    if family == BINOMIAL:
        p = 1.0 / (1.0 + np.exp(-eta))
        return (y - p) / np.sqrt(p * (1.0 - p))
    if family == POISSON:
        return y - np.exp(eta)
    raise ValueError(f"unsupported family {family!r}")


def update_eta(state: BoostState, tree: TreeNode, data) -> BoostState:
    """Add ``nu`` times the tree's predictions on every row of ``data``."""
    if state.nu == 0:
        return state
    return BoostState(state.eta + state.nu * apply_tree(tree, data), state.nu, state.family)


def sample_maxdepth(rng, avg_terminal_nodes: float = 4.0, size=None):
    """Random tree depth with on average ``avg_terminal_nodes`` terminal nodes.

    The terminal-node count is ``2 + floor(g)`` with ``g`` exponential of mean
    ``avg_terminal_nodes - 2``; the depth is ``ceil(log2(count))``.
    """
    if avg_terminal_nodes < 2:
        raise ValueError("average number of terminal nodes must be >= 2")
    rng = np.random.default_rng(rng)
    if avg_terminal_nodes == 2:
        g = np.zeros(size if size is not None else ())
    else:
        g = rng.exponential(avg_terminal_nodes - 2.0, size=size)
    return depth_from_gamma(g)


def depth_from_gamma(g):
    t = 2 + np.floor(g)
    depth = np.maximum(1, np.ceil(np.log2(t)).astype(np.int64))
    return int(depth) if np.ndim(depth) == 0 else depth


def extract_rules(tree: TreeNode, tree_index: int = 0) -> list[Rule]:
    """One rule per non-root node: the conjunction of conditions on its path."""
    out = []

    def walk(node, path):
        if node.is_leaf:
            return
        left_cond, right_cond = node.split.conditions()
        for child, cond in ((node.left, left_cond), (node.right, right_cond)):
            conds = path + (cond,)
            out.append(Rule(conds, (tree_index, child.id)))
            walk(child, conds)

    walk(tree, ())
    return out


class _MaskCache:
    def __init__(self, data: Dataset):
        self.data = data
        self.cache = {}

    def rule(self, rule: Rule) -> np.ndarray:
        out = None
        for c in rule.conditions:
            m = self.cache.get(c)
            if m is None:
                m = c.mask(self.data)
                self.cache[c] = m
            out = m.copy() if out is None else out & m
        return out


def rule_matrix(rules, data: Dataset) -> np.ndarray:
    """0/1 matrix with one column per rule."""
    cache = _MaskCache(data)
    X = np.empty((data.n_rows, len(rules)), order="F")
    for k, r in enumerate(rules):
        X[:, k] = cache.rule(r)
    return X


def prune_redundant(rules, data: Dataset, removeduplicates: bool = True,
                    removecomplements: bool = True, return_matrix: bool = False):
    """Drop rules whose 0/1 vector on ``data`` repeats, or complements, an earlier kept rule."""
    cache = _MaskCache(data)
    seen = set()
    kept, cols = [], []
    for r in rules:
        v = cache.rule(r)
        key = np.packbits(v).tobytes()
        if removeduplicates and key in seen:
            continue
        if removecomplements and np.packbits(~v).tobytes() in seen:
            continue
        seen.add(key)
        kept.append(r)
        cols.append(v)
    if not return_matrix:
        return kept
    X = np.asarray(cols, dtype=np.float64).T if cols else np.empty((data.n_rows, 0))
    return kept, np.asfortranarray(X)


# -- the generation loop -----------------------------------------------------

@dataclass(frozen=True)
class GenerationConfig:
    family: str = GAUSSIAN
    ntrees: int = 500
    sampfrac: object = 0.5
    maxdepth: object = 3
    learnrate: float = 0.01
    tree: TreeConfig = TreeConfig()
    removeduplicates: bool = True
    removecomplements: bool = True

    def __post_init__(self):
        check_family(self.family)
        if self.ntrees < 1:
            raise ValueError("ntrees must be >= 1")
        if self.learnrate < 0:
            raise ValueError("learnrate must be >= 0")
        if not isinstance(self.maxdepth, (str, int, float)) and len(self.maxdepth) != self.ntrees:
            raise ValueError("a maxdepth sequence must have length ntrees")


def tree_streams(seed, ntrees: int) -> list[np.random.SeedSequence]:
    """One independent seed sequence per tree index."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return root.spawn(ntrees)


def depth_for(config: GenerationConfig, b: int, rng) -> float:
    md = config.maxdepth
    if isinstance(md, str):
        if md != "sampler":
            raise ValueError(f"unknown maxdepth specification {md!r}")
        return sample_maxdepth(rng)
    if isinstance(md, (int, float)):
        return md
    return md[b]


def grow_member(fm: FeatureMatrix, y, weights, config: GenerationConfig, b: int,
                stream, eta=None):
    """Grow the ``b``-th tree with its own random stream; returns (tree, rows)."""
    rng = np.random.default_rng(stream)
    depth = depth_for(config, b, rng)
    n = fm.X.shape[0]
    rows = subsample(n, config.sampfrac, weights, rng)
    target = y[rows] if eta is None else pseudo_response(config.family, y[rows], eta[rows])
    tcfg = replace(config.tree, maxdepth=depth)
    tree = grow_tree(fm, target, weights[rows], tcfg, rng, rows=rows)
    return tree, rows


def grow_ensemble(data: Dataset, config: GenerationConfig, seed=0, threads: int = 1):
    """Grow ``config.ntrees`` trees; returns (trees, final BoostState)."""
    y = data.y
    check_family(config.family, y)
    w = data.weights
    fm = FeatureMatrix(data, ordinal_as_continuous=config.tree.ordinal_as_continuous)
    streams = tree_streams(seed, config.ntrees)
    eta0 = init_eta(config.family, y, w)
    state = BoostState(np.full(data.n_rows, eta0), config.learnrate, config.family)

    if config.learnrate == 0:
        eta = None if config.family == GAUSSIAN else state.eta
        work = lambda b: grow_member(fm, y, w, config, b, streams[b], eta)[0]
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                trees = list(pool.map(work, range(config.ntrees)))
        else:
            trees = [work(b) for b in range(config.ntrees)]
        return trees, state

    trees = []
    for b in range(config.ntrees):
        tree, _ = grow_member(fm, y, w, config, b, streams[b], state.eta)
        trees.append(tree)
        state = update_eta(state, tree, fm)
    return trees, state


def generate_initial_ensemble(data: Dataset, config: GenerationConfig, seed=0,
                              threads: int = 1, return_matrix: bool = False):
    """Rules from every non-root node of every tree, with redundant rules removed."""
    trees, _ = grow_ensemble(data, config, seed, threads)
    rules = []
    for b, tree in enumerate(trees):
        rules.extend(extract_rules(tree, b))
    return prune_redundant(rules, data, config.removeduplicates, config.removecomplements,
                           return_matrix=return_matrix)
