"""Per-cell feature extraction and unified feature assembly.

Each cell gets a base vector made of four blocks, concatenated in this order:

  stat      (M)   value frequency at its own attribute position, conditional
                  co-occurrence frequency at every other position
  pattern   (3)   share of the column matching the cell's level-1/2/3 pattern
  semantic  (d)   mean token embedding of the value
  criteria  (C)   one pass/fail bit per retained validation predicate,
                  zero-padded to a common width across attributes

The unified vector for a cell is its own base block followed by the base
blocks of its k most correlated attributes (descending NMI, ties broken by
attribute index), giving a fixed width of base_width * (1 + k) everywhere.

Correlation between attributes is normalized mutual information with plug-in
probability estimates (natural log); constant columns have zero entropy and
correlate with nothing.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingTable, embed_value
from .patterns import LEVELS, generalize_pattern
from .table import Dataset


class FeatureExtractor:
    """Caches column statistics of one dataset for fast per-cell features."""

    def __init__(self, ds: Dataset, embeddings: EmbeddingTable):
        self.ds = ds
        self.embeddings = embeddings
        n, m = ds.n_rows, ds.n_attrs
        self._value_counts: list[Counter] = [Counter(ds.column(j)) for j in range(m)]
        self._pair_counts: dict[tuple[int, int], Counter] = {}
        self._pattern_of: list[dict[str, tuple[str, str, str]]] = []
        self._pattern_counts: list[list[Counter]] = []
        for j in range(m):
            col = ds.column(j)
            pat_of = {
                v: tuple(generalize_pattern(v, lv) for lv in LEVELS)
                for v in self._value_counts[j]
            }
            self._pattern_of.append(pat_of)
            per_level = []
            for lv_idx in range(len(LEVELS)):
                ctr: Counter = Counter()
                for v, cnt in self._value_counts[j].items():
                    ctr[pat_of[v][lv_idx]] += cnt
                per_level.append(ctr)
            self._pattern_counts.append(per_level)
        self._embed_cache: dict[str, np.ndarray] = {}
        self._n = n
        self._m = m

    # -- column statistics -------------------------------------------------

    def _pairs(self, q: int, j: int) -> Counter:
        key = (q, j)
        if key not in self._pair_counts:
            self._pair_counts[key] = Counter(
                zip(self.ds.column(q), self.ds.column(j))
            )
        return self._pair_counts[key]

    def _embed(self, value: str) -> np.ndarray:
        vec = self._embed_cache.get(value)
        if vec is None:
            vec = embed_value(value, self.embeddings)
            self._embed_cache[value] = vec
        return vec

    # -- per-cell features ---------------------------------------------------

    def stat_vector(self, i: int, j: int, override: str | None = None) -> np.ndarray:
        """Value frequency at position j, vicinity frequency elsewhere.

        With an override value v for cell (i, j), counts are taken as if the
        column held v at row i instead of its original value.
        """
        value = self.ds.cell(i, j) if override is None else override
        orig = self.ds.cell(i, j)
        out = np.empty(self._m, dtype=np.float64)
        for q in range(self._m):
            if q == j:
                cnt = self._value_counts[j][value]
                if override is not None and value != orig:
                    cnt += 1
                out[q] = cnt / self._n
            else:
                vq = self.ds.cell(i, q)
                pair_cnt = self._pairs(q, j)[(vq, value)]
                if override is not None and value != orig:
                    pair_cnt += 1
                out[q] = pair_cnt / self._value_counts[q][vq]
        return out

    def pattern_vector(self, i: int, j: int, override: str | None = None) -> np.ndarray:
        value = self.ds.cell(i, j) if override is None else override
        orig = self.ds.cell(i, j)
        out = np.empty(len(LEVELS), dtype=np.float64)
        for lv_idx in range(len(LEVELS)):
            pat = self._pattern_for(j, value, lv_idx)
            cnt = self._pattern_counts[j][lv_idx][pat]
            if override is not None and value != orig:
                # the override displaces the original cell in its column
                cnt += 1
                if self._pattern_for(j, orig, lv_idx) == pat:
                    cnt -= 1
            out[lv_idx] = cnt / self._n
        return out

    def _pattern_for(self, j: int, value: str, lv_idx: int) -> str:
        pats = self._pattern_of[j].get(value)
        if pats is not None:
            return pats[lv_idx]
        return generalize_pattern(value, LEVELS[lv_idx])

    def semantic_vector(self, i: int, j: int, override: str | None = None) -> np.ndarray:
        value = self.ds.cell(i, j) if override is None else override
        return self._embed(value)

    # -- per-attribute matrices ----------------------------------------------

    def stat_matrix(self, j: int) -> np.ndarray:
        return np.stack([self.stat_vector(i, j) for i in range(self._n)])

    def pattern_matrix(self, j: int) -> np.ndarray:
        return np.stack([self.pattern_vector(i, j) for i in range(self._n)])

    def semantic_matrix(self, j: int) -> np.ndarray:
        return np.stack(
            [self._embed(self.ds.cell(i, j)) for i in range(self._n)]
        )


# -- spec-level convenience wrappers (one-shot, small inputs) ---------------


def stat_frequencies(ds: Dataset, i: int, j: int) -> np.ndarray:
    return FeatureExtractor(ds, EmbeddingTable.hashing()).stat_vector(i, j)


def pattern_frequencies(ds: Dataset, i: int, j: int) -> np.ndarray:
    return FeatureExtractor(ds, EmbeddingTable.hashing()).pattern_vector(i, j)


# -- correlation -------------------------------------------------------------


def _entropy(counts: Counter, n: int) -> float:
    return -sum((c / n) * math.log(c / n) for c in counts.values())


def nmi(ds: Dataset, a: int, b: int) -> float:
    """Normalized mutual information of two columns, plug-in estimates.

    Natural log; zero when either column is constant (zero entropy).
    """
    n = ds.n_rows
    ca, cb = Counter(ds.column(a)), Counter(ds.column(b))
    h_a, h_b = _entropy(ca, n), _entropy(cb, n)
    if h_a <= 0.0 or h_b <= 0.0:
        return 0.0
    joint = Counter(zip(ds.column(a), ds.column(b)))
    info = 0.0
    for (x, y), c in joint.items():
        p_xy = c / n
        info += p_xy * math.log(p_xy / ((ca[x] / n) * (cb[y] / n)))
    return info / math.sqrt(h_a * h_b)


@dataclass(frozen=True)
class CorrelationMap:
    attributes: tuple[str, ...]
    matrix: np.ndarray  # (M, M), symmetric

    @classmethod
    def compute(cls, ds: Dataset) -> "CorrelationMap":
        m = ds.n_attrs
        mat = np.zeros((m, m), dtype=np.float64)
        for a in range(m):
            for b in range(a, m):
                v = nmi(ds, a, b)
                mat[a, b] = v
                mat[b, a] = v
        return cls(ds.attributes, mat)

    def top_correlated(self, j: int, k: int) -> list[int]:
        """The k attributes most correlated with j, descending NMI, ties by index."""
        m = len(self.attributes)
        if not 0 <= k <= m - 1:
            raise ValueError(f"k must be in [0, {m - 1}], got {k}")
        others = [q for q in range(m) if q != j]
        others.sort(key=lambda q: (-self.matrix[j, q], q))
        return others[:k]

    def to_dict(self) -> dict:
        return {
            "attributes": list(self.attributes),
            "matrix": [[float(v) for v in row] for row in self.matrix],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationMap":
        return cls(tuple(d["attributes"]), np.asarray(d["matrix"], dtype=np.float64))


def correlated_attributes(cm: CorrelationMap, a: int, k: int) -> list[int]:
    return cm.top_correlated(a, k)


# -- unified assembly ----------------------------------------------------------


@dataclass(frozen=True)
class SegmentLayout:
    """Widths of the four blocks inside one base vector."""

    stat: int
    pattern: int
    semantic: int
    criteria: int

    @property
    def base_width(self) -> int:
        return self.stat + self.pattern + self.semantic + self.criteria

    def to_dict(self) -> dict:
        return {
            "stat": self.stat,
            "pattern": self.pattern,
            "semantic": self.semantic,
            "criteria": self.criteria,
        }


class UnifiedFeatureBuilder:
    """Concatenates base blocks of a cell and its correlated attributes.

    Criteria bit vectors differ in length across attributes, so every criteria
    segment is zero-padded at its tail to the maximum criterion count, keeping
    one fixed layout for all attributes.
    """

    def __init__(
        self,
        extractor: FeatureExtractor,
        crit_bits: dict[int, np.ndarray],
        cm: CorrelationMap,
        k: int,
    ):
        self.extractor = extractor
        self.ds = extractor.ds
        self.cm = cm
        self.k = k
        self.crit_bits = crit_bits
        crit_width = max((b.shape[1] for b in crit_bits.values()), default=0)
        self.layout = SegmentLayout(
            stat=self.ds.n_attrs,
            pattern=len(LEVELS),
            semantic=extractor.embeddings.dim,
            criteria=crit_width,
        )
        self._base_cache: dict[int, np.ndarray] = {}

    def _padded_bits(self, j: int, row_bits: np.ndarray) -> np.ndarray:
        width = self.layout.criteria
        out = np.zeros(width, dtype=np.float64)
        out[: row_bits.shape[0]] = row_bits
        return out

    def base_matrix(self, j: int) -> np.ndarray:
        if j not in self._base_cache:
            n = self.ds.n_rows
            blocks = [
                self.extractor.stat_matrix(j),
                self.extractor.pattern_matrix(j),
                self.extractor.semantic_matrix(j),
            ]
            crit = np.zeros((n, self.layout.criteria), dtype=np.float64)
            bits = self.crit_bits.get(j)
            if bits is not None and bits.shape[1] > 0:
                crit[:, : bits.shape[1]] = bits
            blocks.append(crit)
            self._base_cache[j] = np.hstack(blocks)
        return self._base_cache[j]

    def block_order(self, j: int) -> list[int]:
        """Self first, then correlates by descending NMI."""
        return [j, *self.cm.top_correlated(j, self.k)]

    def unified_matrix(self, j: int) -> np.ndarray:
        return np.hstack([self.base_matrix(q) for q in self.block_order(j)])

    def base_row_with_override(
        self, i: int, j: int, value: str, crit_bits_row: np.ndarray
    ) -> np.ndarray:
        """Base block of cell (i, j) as if it held `value` instead."""
        return np.concatenate(
            [
                self.extractor.stat_vector(i, j, override=value),
                self.extractor.pattern_vector(i, j, override=value),
                self.extractor.semantic_vector(i, j, override=value),
                self._padded_bits(j, crit_bits_row),
            ]
        )

    def unified_row_with_override(
        self, i: int, j: int, value: str, crit_bits_row: np.ndarray
    ) -> np.ndarray:
        """Unified vector for a substituted value; correlate blocks unchanged."""
        own = self.base_row_with_override(i, j, value, crit_bits_row)
        rest = [self.base_matrix(q)[i] for q in self.cm.top_correlated(j, self.k)]
        return np.concatenate([own, *rest])


def assemble_unified(
    ds: Dataset,
    j: int,
    crit_bits: dict[int, np.ndarray],
    cm: CorrelationMap,
    k: int,
    embeddings: EmbeddingTable | None = None,
) -> np.ndarray:
    """One-shot unified matrix for attribute j (small inputs / tests)."""
    table = embeddings or EmbeddingTable.hashing()
    builder = UnifiedFeatureBuilder(FeatureExtractor(ds, table), crit_bits, cm, k)
    return builder.unified_matrix(j)


def save_matrix(arr: np.ndarray, path) -> None:
    np.ascontiguousarray(arr, dtype="<f4").tofile(path)


def load_matrix(path, n_rows: int, n_cols: int) -> np.ndarray:
    arr = np.fromfile(path, dtype="<f4")
    return arr.reshape(n_rows, n_cols).astype(np.float64)
