import numpy as np
import pytest

from rulepress.dataio import CONTINUOUS, ORDERED, UNORDERED, ColumnSchema, Dataset
from rulepress.trees import SplitSpec, TreeNode
from rulepress.validate import gen_friedman1

X3_LEVELS = ("a", "b", "c", "d", "e")
X5_LEVELS = ("never", "seldom", "often", "always")


def example_tree():
    """x4 <= 82.7 splits into x3 in {a, c} and x5 <= seldom subtrees."""
    left = TreeNode(1, 0.0, 1, 0, split=SplitSpec("x3", left_levels=("a", "c"), levels=X3_LEVELS),
                    left=TreeNode(2, 0.0, 2, 0), right=TreeNode(3, 0.0, 2, 0))
    right = TreeNode(4, 0.0, 1, 0, split=SplitSpec("x5", cut=2.0, levels=X5_LEVELS),
                     left=TreeNode(5, 0.0, 2, 0), right=TreeNode(6, 0.0, 2, 0))
    return TreeNode(0, 0.0, 0, 0, split=SplitSpec("x4", cut=82.7), left=left, right=right)


def example_data(n=400, seed=0):
    rng = np.random.default_rng(seed)
    schema = [ColumnSchema("x3", UNORDERED, X3_LEVELS), ColumnSchema("x4", CONTINUOUS),
              ColumnSchema("x5", ORDERED, X5_LEVELS), ColumnSchema("y", CONTINUOUS)]
    cols = {"x3": rng.integers(0, 5, n), "x4": rng.uniform(0, 200, n),
            "x5": rng.integers(0, 4, n), "y": rng.normal(size=n)}
    return Dataset(schema, cols, "y")


@pytest.fixture
def fig1_tree():
    return example_tree()


@pytest.fixture
def fig1_data():
    return example_data()


@pytest.fixture(scope="session")
def friedman_small():
    return gen_friedman1(200, 6, 1.0, seed=11)


@pytest.fixture(scope="session")
def friedman_model(friedman_small):
    from rulepress.config import FitSettings
    from rulepress.ensemble import fit
    return fit(friedman_small, FitSettings(ntrees=60, seed=5))


@pytest.fixture
def mixed_data():
    rng = np.random.default_rng(3)
    n = 120
    g = rng.integers(0, 3, n)
    x = rng.normal(size=n)
    o = rng.integers(0, 4, n)
    y = 2.0 * (g == 1) + x + 0.5 * o + rng.normal(scale=0.3, size=n)
    schema = [ColumnSchema("g", UNORDERED, ("p", "q", "r")), ColumnSchema("x", CONTINUOUS),
              ColumnSchema("o", ORDERED, ("lo", "mid", "high", "top")),
              ColumnSchema("y", CONTINUOUS)]
    return Dataset(schema, {"g": g, "x": x, "o": o, "y": y}, "y")
