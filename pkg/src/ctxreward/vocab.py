"""Object vocabularies and word-embedding tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import NULL_TOKEN


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Ordered object-class list with per-class movability and a reserved null token.

    The null token stands in for the empty hand. It is flagged movable (it rides
    with the agent) and is always present exactly once.
    """

    names: tuple[str, ...]
    movable: tuple[bool, ...]
    _index: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.names) != len(set(self.names)):
            raise VocabularyError("duplicate class names")
        if len(self.names) != len(self.movable):
            raise VocabularyError("names/movable length mismatch")
        if NULL_TOKEN not in self.names:
            raise VocabularyError(f"vocabulary must contain {NULL_TOKEN}")
        if not self.movable[self.names.index(NULL_TOKEN)]:
            raise VocabularyError("null token must be flagged movable")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @classmethod
    def build(cls, movable_classes, fixed_classes) -> "Vocabulary":
        """Assemble a vocabulary from movable and fixed class lists, appending the null token."""
        names = tuple(movable_classes) + tuple(fixed_classes) + (NULL_TOKEN,)
        movable = (True,) * len(tuple(movable_classes)) + (False,) * len(tuple(fixed_classes)) + (True,)
        return cls(names, movable)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise VocabularyError(f"unknown class {name!r}") from None

    @property
    def null_index(self) -> int:
        return self._index[NULL_TOKEN]

    def is_movable(self, name: str) -> bool:
        return self.movable[self.index(name)]

    def movable_names(self, include_null: bool = False):
        return [n for n, m in zip(self.names, self.movable) if m and (include_null or n != NULL_TOKEN)]

    def fixed_names(self):
        return [n for n, m in zip(self.names, self.movable) if not m]


class EmbeddingTable:
    """Class name -> unit-normalized embedding vector.

    Vectors are L2-normalized at load so dot products are cosine similarities.
    """

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise VocabularyError("empty embedding table")
        dims = {v.shape for v in vectors.values()}
        if len(dims) != 1 or next(iter(dims))[0] < 1:
            raise VocabularyError(f"inconsistent embedding dimensions: {dims}")
        self.vectors = {}
        for name, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise VocabularyError(f"zero embedding for {name!r}")
            self.vectors[name] = vec / norm

    @property
    def dim(self) -> int:
        return next(iter(self.vectors.values())).shape[0]

    def __contains__(self, name: str) -> bool:
        return name in self.vectors

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.vectors[name]
        except KeyError:
            raise VocabularyError(f"no embedding for class {name!r}") from None

    def similarity(self, a: str, b: str) -> float:
        return float(np.dot(self[a], self[b]))

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        """Read `<class> <v1> ... <vd>` lines, whitespace-separated."""
        vectors = {}
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                parts = line.split()
                if not parts:
                    continue
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        return cls(vectors)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for name, vec in self.vectors.items():
                f.write(name + " " + " ".join(repr(float(x)) for x in vec) + "\n")
