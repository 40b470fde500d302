"""Token embedding table: text `.vec` loader plus an offline hashing fallback.

The `.vec` text format is the usual one: a ``count dim`` header line, then one
``token v1 .. vd`` line per entry. Vectors are L2-normalized at load so that
distances over concatenated feature blocks stay comparable.

The hashing fallback maps any token to a fixed 64-dim +-1 sign pattern derived
from a seeded SHA-256 digest, L2-normalized; it needs no vector file and is
deterministic across processes and platforms.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HASH_DIM = 64

# 50 common English function words; values made of these carry no content.
STOP_WORDS = frozenset(
    """a an and are as at be but by for from had has have he her his i if in
    into is it its me my no not of on or our she so that the their them they
    this to was we were what when which who will with you your""".split()
)

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(value: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stop words."""
    return [
        tok
        for tok in _TOKEN_SPLIT.split(value.lower())
        if tok and tok not in STOP_WORDS
    ]


def _hash_vector(token: str, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
    bits = np.unpackbits(np.frombuffer(digest[: HASH_DIM // 8], dtype=np.uint8))
    vec = bits.astype(np.float64) * 2.0 - 1.0
    return vec / np.sqrt(HASH_DIM)


@dataclass
class EmbeddingTable:
    """token -> d-vector lookup; unknown tokens are out-of-vocabulary."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    hashing_seed: int | None = None  # set -> every token is in-vocabulary

    def lookup(self, token: str) -> np.ndarray | None:
        vec = self.entries.get(token)
        if vec is not None:
            return vec
        if self.hashing_seed is not None:
            return _hash_vector(token, self.hashing_seed)
        return None

    @classmethod
    def hashing(cls, seed: int = 0, dim: int = HASH_DIM) -> "EmbeddingTable":
        if dim != HASH_DIM:
            raise ValueError(f"hashing table is fixed at {HASH_DIM} dims")
        return cls(dim=dim, hashing_seed=seed)

    @classmethod
    def from_vec_file(cls, path: str | Path, limit: int | None = None) -> "EmbeddingTable":
        """Load a text `.vec` file; vectors are L2-normalized."""
        path = Path(path)
        entries: dict[str, np.ndarray] = {}
        with path.open(encoding="utf-8", errors="replace") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ValueError(f"{path}: expected 'count dim' header")
            dim = int(header[1])
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    continue  # malformed line; skip rather than abort a 6 GB load
                token = parts[0]
                vec = np.asarray(parts[1:], dtype=np.float64)
                norm = float(np.linalg.norm(vec))
                if norm > 0:
                    vec /= norm
                entries[token] = vec
                if limit is not None and len(entries) >= limit:
                    break
        return cls(dim=dim, entries=entries)


def embed_value(value: str, table: EmbeddingTable) -> np.ndarray:
    """Average the embeddings of the value's surviving tokens.

    Returns the zero vector when no token survives preprocessing (empty value,
    all stop words, or all out-of-vocabulary).
    """
    vecs = [v for tok in tokenize(value) if (v := table.lookup(tok)) is not None]
    if not vecs:
        return np.zeros(table.dim, dtype=np.float64)
    return np.mean(vecs, axis=0)
