"""Word embedding providers for class and relation tokens.

Two providers share one lookup contract: a file provider reads the standard
text vector format (`token v1 v2 ... vq` per line) so pretrained
knowledge-base vectors can be dropped in, and a synthetic provider builds
unit-norm vectors whose cosine structure follows a category map. Both are
total: unknown tokens fall back to the synthetic construction, so the policy
can always score objects it has never seen.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

DEFAULT_DIM = 300
CATEGORY_WEIGHT = 0.7
TOKEN_WEIGHT = 0.3


def _hash_gaussian(token: str, dim: int, salt: str) -> np.ndarray:
    """Seeded hash-to-gaussian map; stable across runs and platforms."""
    digest = hashlib.sha256(("%s|%s" % (salt, token)).encode()).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim)


class EmbeddingTable:
    """Token -> dense vector map with deterministic synthetic fallback."""

    def __init__(self, dim: int = DEFAULT_DIM,
                 categories: Optional[Mapping[str, str]] = None,
                 vectors: Optional[Mapping[str, np.ndarray]] = None,
                 provider: str = "synthetic",
                 category_weight: float = CATEGORY_WEIGHT,
                 token_weight: float = TOKEN_WEIGHT):
        self.dim = dim
        self.provider = provider
        self.categories = dict(categories or {})
        self.category_weight = category_weight
        self.token_weight = token_weight
        self._vectors: dict[str, np.ndarray] = {}
        for token, vec in (vectors or {}).items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dim,):
                raise ValueError("vector for %r has shape %r, expected (%d,)"
                                 % (token, arr.shape, dim))
            self._vectors[token] = arr
        self._cache: dict[str, np.ndarray] = {}

    def category(self, token: str) -> str:
        return self.categories.get(token, token)

    def _synthetic(self, token: str) -> np.ndarray:
        mixed = (self.category_weight * _hash_gaussian(self.category(token), self.dim, "cat")
                 + self.token_weight * _hash_gaussian(token, self.dim, "tok"))
        return mixed / np.linalg.norm(mixed)

    def lookup(self, token: str) -> np.ndarray:
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        vec = self._vectors.get(token)
        if vec is None:
            vec = self._synthetic(token)
        self._cache[token] = vec
        return vec

    def cosine(self, a: str, b: str) -> float:
        va, vb = self.lookup(a), self.lookup(b)
        return float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))

    def serialize(self, path: str | Path, tokens: Optional[list[str]] = None) -> None:
        """Write vectors in the text format the file provider reads back."""
        tokens = sorted(self._vectors) if tokens is None else tokens
        with open(path, "w") as fh:
            for token in tokens:
                vec = self.lookup(token)
                fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def load_embeddings(path: str | Path, dim: Optional[int] = None,
                    categories: Optional[Mapping[str, str]] = None) -> EmbeddingTable:
    """Parse a `token v1 ... vq` text file; OOV lookups fall back to synthetic."""
    vectors: dict[str, np.ndarray] = {}
    with open(path) as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            vectors[parts[0]] = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
    if not vectors:
        raise ValueError("no vectors found in %s" % path)
    inferred = len(next(iter(vectors.values())))
    if dim is not None and dim != inferred:
        raise ValueError("requested dim %d but file has %d" % (dim, inferred))
    for token, vec in vectors.items():
        if len(vec) != inferred:
            raise ValueError("ragged vector for %r" % token)
    return EmbeddingTable(dim=inferred, categories=categories, vectors=vectors,
                          provider="file")


def make_embeddings(spec: str, dim: int, categories: Optional[Mapping[str, str]]) -> EmbeddingTable:
    """Build a table from a CLI-style spec: `synthetic` or `file:<path>`."""
    if spec == "synthetic":
        return EmbeddingTable(dim=dim, categories=categories)
    if spec.startswith("file:"):
        return load_embeddings(spec[5:], categories=categories)
    raise ValueError("embedding spec must be 'synthetic' or 'file:<path>', got %r" % spec)
