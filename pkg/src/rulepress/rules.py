"""Split conditions and conjunctive prediction rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import DataError, Dataset

LE, GT, IN = "<=", ">", "in"


def format_number(v: float) -> str:
    return f"{v:.7g}"


@dataclass(frozen=True)
class Condition:
    """``variable <= value``, ``variable > value`` or ``variable in {levels}``.

    Thresholds on ordered factors are 1-based level indices. ``levels`` holds
    the variable's full level list for categorical variables, so labels can
    be evaluated, validated and printed.
    """

    variable: str
    op: str
    value: object
    levels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.op in (LE, GT):
            object.__setattr__(self, "value", float(self.value))
        elif self.op == IN:
            vals = tuple(str(v) for v in self.value)
            if not vals:
                raise ValueError(f"empty level set in condition on {self.variable!r}")
            object.__setattr__(self, "value", vals)
        else:
            raise ValueError(f"unknown relation {self.op!r}")

    def holds(self, value) -> bool:
        """Evaluate on a single cell (number, or level label)."""
        if self.op == IN:
            if self.levels is not None and str(value) not in self.levels:
                raise DataError(f"unseen level {value!r} for variable {self.variable!r}")
            return str(value) in self.value
        if isinstance(value, str):
            if self.levels is None:
                raise DataError(f"non-numeric value {value!r} for variable {self.variable!r}")
            try:
                value = self.levels.index(value) + 1
            except ValueError:
                raise DataError(f"unseen level {value!r} for variable {self.variable!r}") from None
        return value <= self.value if self.op == LE else value > self.value

    def mask(self, data: Dataset) -> np.ndarray:
        col = data.column_schema(self.variable)
        if self.op == IN:
            if not col.is_categorical:
                raise DataError(f"level-set condition on continuous column {self.variable!r}")
            wanted = [col.levels.index(v) for v in self.value if v in col.levels]
            return np.isin(data.codes(self.variable), wanted)
        x = data.numeric(self.variable)
        return x <= self.value if self.op == LE else x > self.value

    def describe(self) -> str:
        if self.op == IN:
            return f"{self.variable} ∈ {{{', '.join(self.value)}}}"
        if self.levels is not None:
            shown = self.levels[int(self.value) - 1]
        else:
            shown = format_number(self.value)
        return f"{self.variable} {self.op} {shown}"

    def to_dict(self) -> dict:
        d = {"variable": self.variable, "op": self.op,
             "value": list(self.value) if self.op == IN else self.value}
        if self.levels is not None:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Condition":
        levels = d.get("levels")
        return cls(d["variable"], d["op"], d["value"], tuple(levels) if levels else None)


@dataclass(frozen=True)
class Rule:
    conditions: tuple[Condition, ...]
    origin: tuple[int, int] = field(default=(0, 0), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if not self.conditions:
            raise ValueError("a rule needs at least one condition")

    @property
    def length(self) -> int:
        return len(self.conditions)

    @property
    def variables(self) -> list[str]:
        """Variables in condition order, repeats kept."""
        return [c.variable for c in self.conditions]

    def evaluate(self, data: Dataset) -> np.ndarray:
        out = np.ones(data.n_rows, dtype=bool)
        for c in self.conditions:
            out &= c.mask(data)
        return out.astype(np.float64)

    def describe(self) -> str:
        return " & ".join(c.describe() for c in self.conditions)

    def to_dict(self) -> dict:
        return {"conditions": [c.to_dict() for c in self.conditions], "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d: dict) -> "Rule":
        return cls(tuple(Condition.from_dict(c) for c in d["conditions"]),
                   tuple(d.get("origin", (0, 0))))


def evaluate_rule(rule: Rule, row: dict) -> int:
    """1 if every condition holds for the record ``row``, else 0."""
    for c in rule.conditions:
        if c.variable not in row:
            raise DataError(f"row lacks variable {c.variable!r}")
        if not c.holds(row[c.variable]):
            return 0
    return 1
