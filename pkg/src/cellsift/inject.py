"""Synthetic error injection for benchmark construction.

Five corruption families over a clean table: missing values, typos (1-3
character edits), pattern violations (a format unseen in the clean column),
outliers (x10 / /10 numeric scaling or a rare-token substitution), and rule
violations (dependent value swapped across tuples with different determinant
values). Deterministic under the spec seed; each corrupted cell is guaranteed
to differ from its clean value, so the returned mask is exactly the cell diff.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from collections import Counter

import numpy as np

from .patterns import generalize_pattern
from .table import CellMask, Dataset, diff_mask

_LOWER = "abcdefghijklmnopqrstuvwxyz"
_UPPER = _LOWER.upper()
_DIGITS = "0123456789"


class InjectionError(ValueError):
    pass


@dataclass(frozen=True)
class InjectionSpec:
    """Per-type corruption rates as fractions of all cells."""

    missing_rate: float = 0.0
    typo_rate: float = 0.0
    pattern_rate: float = 0.0
    outlier_rate: float = 0.0
    rule_rate: float = 0.0
    rule_pairs: tuple[tuple[str, str], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        rates = (
            self.missing_rate,
            self.typo_rate,
            self.pattern_rate,
            self.outlier_rate,
            self.rule_rate,
        )
        for r in rates:
            if not 0.0 <= r <= 1.0:
                raise InjectionError(f"rate {r} outside [0, 1]")
        if sum(rates) > 1.0 + 1e-12:
            raise InjectionError("corruption rates sum to more than 1")
        if self.rule_rate > 0 and not self.rule_pairs:
            raise InjectionError("rule_rate > 0 requires rule_pairs")


def _same_class_char(ch: str, rng: random.Random) -> str:
    if ch.islower():
        pool = _LOWER
    elif ch.isupper():
        pool = _UPPER
    elif ch.isdigit():
        pool = _DIGITS
    else:
        pool = _LOWER
    out = rng.choice(pool)
    while out == ch:
        out = rng.choice(pool)
    return out


def typo_variant(value: str, rng: random.Random) -> str:
    """Apply 1-3 single-character edits; result differs from the input."""
    for _ in range(20):
        chars = list(value)
        for _ in range(rng.randint(1, 3)):
            if not chars:
                chars.append(rng.choice(_LOWER))
                continue
            op = rng.choice(("sub", "ins", "del", "swap"))
            pos = rng.randrange(len(chars))
            if op == "sub":
                chars[pos] = _same_class_char(chars[pos], rng)
            elif op == "ins":
                chars.insert(pos, _same_class_char(chars[pos], rng))
            elif op == "del" and len(chars) > 1:
                del chars[pos]
            elif op == "swap" and len(chars) > 1:
                other = pos + 1 if pos + 1 < len(chars) else pos - 1
                chars[pos], chars[other] = chars[other], chars[pos]
        candidate = "".join(chars)
        if candidate != value:
            return candidate
    return value + rng.choice(_LOWER)


def pattern_variant(value: str, seen_l3: set[str], rng: random.Random) -> str:
    """Mangle the value's format into one whose L3 pattern the column has not seen."""
    candidates = [
        value.swapcase(),
        value.upper(),
        value.lower(),
        f"{value[: max(1, len(value) // 2)]}_{value[max(1, len(value) // 2):]}",
        f" {value}",
        f"{value} ",
        f"({value})",
        f"{value}.",
    ]
    rng.shuffle(candidates)
    for cand in candidates:
        if cand != value and generalize_pattern(cand, 3) not in seen_l3:
            return cand
    cand = value + "#~"
    while generalize_pattern(cand, 3) in seen_l3 or cand == value:
        cand += "#"
    return cand


def _parse_number(value: str) -> float | None:
    try:
        x = float(value)
    except ValueError:
        return None
    return x if np.isfinite(x) else None


def _format_scaled(value: str, up: bool) -> str:
    x = _parse_number(value)
    assert x is not None
    scaled = x * 10 if up else x / 10
    if scaled == int(scaled) and "." not in value and "e" not in value.lower():
        return str(int(scaled))
    return repr(scaled)


def outlier_variant(value: str, column: tuple[str, ...], rng: random.Random) -> str:
    """Scale numerics by x10 or /10; substitute a rare column token otherwise."""
    if _parse_number(value) is not None:
        cand = _format_scaled(value, up=rng.random() < 0.5)
        if cand != value:
            return cand
    counts = Counter(column)
    rare = sorted(
        (v for v in counts if v != value and v != ""),
        key=lambda v: (counts[v], v),
    )
    if rare:
        return rare[0]
    return value + "_x"


def missing_variant(value: str) -> str | None:
    return "" if value != "" else None


def _rule_violation(
    ds: Dataset, i: int, det_j: int, dep_j: int, rng: random.Random
) -> str | None:
    """Dependent value copied from a tuple with a different determinant value."""
    det_val, dep_val = ds.cell(i, det_j), ds.cell(i, dep_j)
    donors = [
        r
        for r in range(ds.n_rows)
        if ds.cell(r, det_j) != det_val and ds.cell(r, dep_j) != dep_val
    ]
    if not donors:
        return None
    return ds.cell(rng.choice(donors), dep_j)


def inject_errors(clean: Dataset, spec: InjectionSpec) -> tuple[Dataset, CellMask]:
    """Corrupt a clean table per the spec; returns (dirty, mask of changed cells)."""
    rng = random.Random(spec.seed)
    n, m = clean.n_rows, clean.n_attrs
    total = n * m
    counts = {
        "missing": round(spec.missing_rate * total),
        "typo": round(spec.typo_rate * total),
        "pattern": round(spec.pattern_rate * total),
        "outlier": round(spec.outlier_rate * total),
        "rule": round(spec.rule_rate * total),
    }

    rows = [list(r) for r in clean.rows]
    bits = np.zeros((n, m), dtype=bool)
    used: set[tuple[int, int]] = set()
    col_l3 = {
        j: {generalize_pattern(v, 3) for v in clean.column(j)} for j in range(m)
    }

    # Rule violations first: they are restricted to dependent columns.
    if counts["rule"]:
        pairs = [
            (clean.attr_index(det), clean.attr_index(dep))
            for det, dep in spec.rule_pairs
        ]
        candidates = [(i, dep_j, det_j) for i in range(n) for det_j, dep_j in pairs]
        rng.shuffle(candidates)
        made = 0
        for i, dep_j, det_j in candidates:
            if made >= counts["rule"]:
                break
            if (i, dep_j) in used:
                continue
            swapped = _rule_violation(clean, i, det_j, dep_j, rng)
            if swapped is None or swapped == rows[i][dep_j]:
                continue
            rows[i][dep_j] = swapped
            bits[i, dep_j] = True
            used.add((i, dep_j))
            made += 1

    cells = [(i, j) for i in range(n) for j in range(m)]
    rng.shuffle(cells)
    queue = iter(cells)
    for kind in ("missing", "typo", "pattern", "outlier"):
        made = 0
        while made < counts[kind]:
            try:
                i, j = next(queue)
            except StopIteration:
                break
            if (i, j) in used:
                continue
            value = clean.cell(i, j)
            if kind == "missing":
                cand = missing_variant(value)
            elif kind == "typo":
                cand = typo_variant(value, rng)
            elif kind == "pattern":
                cand = pattern_variant(value, col_l3[j], rng)
            else:
                cand = outlier_variant(value, clean.column(j), rng)
            if cand is None or cand == value:
                continue
            rows[i][j] = cand
            bits[i, j] = True
            used.add((i, j))
            made += 1

    dirty = Dataset(clean.name + "_dirty", clean.attributes, tuple(tuple(r) for r in rows))
    mask = CellMask(clean.attributes, bits)
    assert np.array_equal(mask.bits, diff_mask(dirty, clean).bits)
    return dirty, mask
