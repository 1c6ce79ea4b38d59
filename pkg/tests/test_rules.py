import numpy as np
import pytest

from rulepress.dataio import DataError
from rulepress.rules import GT, IN, LE, Condition, Rule, evaluate_rule

LEVELS = ("a", "b", "c")


def test_condition_holds():
    assert Condition("x", LE, 2.5).holds(2.5)
    assert not Condition("x", GT, 2.5).holds(2.5)
    c = Condition("g", IN, ("a", "c"), LEVELS)
    assert c.holds("c") and not c.holds("b")
    with pytest.raises(DataError, match="unseen level"):
        c.holds("z")


def test_ordered_threshold_by_label():
    c = Condition("o", LE, 2, ("never", "seldom", "often"))
    assert c.holds("seldom") and not c.holds("often")
    assert c.describe() == "o <= seldom"


def test_empty_level_set_rejected():
    with pytest.raises(ValueError):
        Condition("g", IN, ())


def test_describe_and_round_trip():
    r = Rule((Condition("n4", GT, 15), Condition("open4", LE, 13)))
    assert r.describe() == "n4 > 15 & open4 <= 13"
    g = Rule((Condition("x", LE, 0.1234567891), Condition("g", IN, ("a", "b"), LEVELS)))
    assert g.describe() == "x <= 0.1234568 & g ∈ {a, b}"
    assert Rule.from_dict(g.to_dict()) == g


def test_evaluate_rule_on_record():
    r = Rule((Condition("x", GT, 0), Condition("g", IN, ("b",), LEVELS)))
    assert evaluate_rule(r, {"x": 1.0, "g": "b"}) == 1
    assert evaluate_rule(r, {"x": -1.0, "g": "b"}) == 0


def test_rule_mask_matches_records(mixed_data):
    r = Rule((Condition("x", GT, 0.0), Condition("g", IN, ("p", "r"), ("p", "q", "r"))))
    vec = r.evaluate(mixed_data)
    recs = [evaluate_rule(r, mixed_data.row(i)) for i in range(mixed_data.n_rows)]
    np.testing.assert_array_equal(vec, recs)


def test_rule_needs_conditions():
    with pytest.raises(ValueError):
        Rule(())
