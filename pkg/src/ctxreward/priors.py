"""Inter-object compatibility priors from egocentric detection records.

The pipeline goes: detection corpus (one frame per line) -> label transfer onto
class-agnostic active boxes -> per-frame activity-context pairs -> per-clip pair
fractions -> corpus-level compatibility table. Alternate prior constructions
(uniform / embedding-similarity / spatial co-occurrence / interaction-sequence
bigrams) produce tables with the same shape for ablation runs.

Pair convention: the first element of every (object, context-object) pair is a
movable class or the null token; the second may be any class. Rows of a
compatibility table for fixed classes are therefore all-zero, and the null
column is structurally zero (the null token is never a context target).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import NULL_TOKEN
from .vocab import EmbeddingTable, Vocabulary, VocabularyError

log = logging.getLogger(__name__)

Box = tuple[float, float, float, float]


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionFrame:
    """One video frame: class-agnostic active boxes plus labeled instance boxes."""

    video_id: str
    frame_index: int
    active_boxes: tuple[Box, ...]
    instance_boxes: tuple[tuple[Box, str, float], ...]  # (box, class, confidence)

    def __post_init__(self):
        for box in self.active_boxes:
            _check_box(box)
        for box, _, conf in self.instance_boxes:
            _check_box(box)
            if not 0.0 <= conf <= 1.0:
                raise CorpusError(f"confidence {conf} outside [0, 1]")
        if self.frame_index < 0:
            raise CorpusError(f"negative frame index {self.frame_index}")


def _check_box(box: Box) -> None:
    x1, y1, x2, y2 = box
    if x2 <= x1 or y2 <= y1:
        raise CorpusError(f"box {box} has non-positive area")


@dataclass(frozen=True)
class LabeledActiveSet:
    """Active boxes with transferred class labels for one frame."""

    entries: frozenset[tuple[Box, str]]

    def classes(self) -> set[str]:
        return {cls for _, cls in self.entries}


@dataclass(frozen=True)
class ActivityContext:
    """Ordered (object-class, context-class) pairs active in one frame."""

    pairs: frozenset[tuple[str, str]]


@dataclass
class CompatibilityTable:
    """Dense matrix of compatibility scores over a vocabulary.

    scores[i, j] is the score for (class i, class j). Rows for fixed classes
    and the null column are zero; every row with nonzero mass sums to 1.
    """

    vocabulary: Vocabulary
    scores: np.ndarray

    def __post_init__(self):
        n = len(self.vocabulary)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (n, n):
            raise ValueError(f"scores shape {self.scores.shape} != ({n}, {n})")

    def score(self, obj: str, context: str) -> float:
        return float(self.scores[self.vocabulary.index(obj), self.vocabulary.index(context)])

    def column_max(self, context: str) -> float:
        """Max score over movable rows for a context class (reward normalizer)."""
        j = self.vocabulary.index(context)
        rows = [self.vocabulary.index(n) for n in self.vocabulary.movable_names(include_null=True)]
        return float(self.scores[rows, j].max())

    def validate(self, atol: float = 1e-9) -> None:
        if (self.scores < 0).any():
            raise ValueError("negative compatibility score")
        if np.diag(self.scores).any():
            raise ValueError("nonzero diagonal entry")
        sums = self.scores.sum(axis=1)
        bad = np.abs(sums[sums > 0] - 1.0) > atol
        if bad.any():
            raise ValueError(f"non-stochastic rows, sums {sums[sums > 0][bad]}")

    def save(self, path) -> None:
        """Header row of class names, then dense float rows; lossless round-trip."""
        with open(path, "w", encoding="utf-8") as f:
            f.write("\t".join(self.vocabulary.names) + "\n")
            f.write("\t".join("1" if m else "0" for m in self.vocabulary.movable) + "\n")
            for row in self.scores:
                f.write("\t".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, path) -> "CompatibilityTable":
        with open(path, "r", encoding="utf-8") as f:
            names = tuple(f.readline().rstrip("\n").split("\t"))
            movable = tuple(x == "1" for x in f.readline().rstrip("\n").split("\t"))
            rows = [[float(x) for x in line.split("\t")] for line in f if line.strip()]
        vocab = Vocabulary(names, movable)
        return cls(vocab, np.array(rows, dtype=np.float64))


# ---------------------------------------------------------------------------
# Corpus ingestion


def parse_detection_frame(line: str) -> DetectionFrame:
    rec = json.loads(line)
    active = tuple(tuple(float(v) for v in b) for b in rec["active_boxes"])
    instances = tuple(
        (tuple(float(v) for v in inst["box"]), str(inst["class"]), float(inst["confidence"]))
        for inst in rec["instances"]
    )
    return DetectionFrame(str(rec["video_id"]), int(rec["frame_index"]), active, instances)


def parse_detection_corpus(path) -> Iterator[tuple[str, list[DetectionFrame]]]:
    """Stream (video_id, frames ordered by frame_index) groups from a JSONL corpus.

    Malformed lines are skipped with a warning; the per-file skip count is
    logged and available as `parse_detection_corpus.last_warnings` after the
    stream is exhausted. Frames of one video must be contiguous in the file.
    """
    parse_detection_corpus.last_warnings = 0
    warnings = 0
    current_id: str | None = None
    frames: list[DetectionFrame] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                frame = parse_detection_frame(line)
            except (CorpusError, ValueError, KeyError, TypeError) as exc:
                warnings += 1
                log.warning("skipping malformed line %d of %s: %s", lineno, path, exc)
                continue
            if frame.video_id != current_id:
                if current_id is not None:
                    yield current_id, sorted(frames, key=lambda fr: fr.frame_index)
                current_id, frames = frame.video_id, []
            frames.append(frame)
    if current_id is not None:
        yield current_id, sorted(frames, key=lambda fr: fr.frame_index)
    parse_detection_corpus.last_warnings = warnings
    if warnings:
        log.warning("%d malformed lines skipped in %s", warnings, path)


def box_iou(a: Box, b: Box) -> float:
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    if ix2 <= ix1 or iy2 <= iy1:
        return 0.0
    inter = (ix2 - ix1) * (iy2 - iy1)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def transfer_labels(
    frame: DetectionFrame,
    iou_threshold: float = 0.5,
    confidence_threshold: float = 0.5,
    class_order: dict[str, int] | None = None,
) -> LabeledActiveSet:
    """Label each active box with the class of its best-overlapping confident instance.

    Active boxes with no instance above both thresholds are dropped. Ties on IoU
    break by higher confidence, then by lowest class index (alphabetical when no
    class_order is given).
    """
    if not 0.0 < iou_threshold < 1.0 or not 0.0 < confidence_threshold < 1.0:
        raise ValueError("thresholds must lie in (0, 1)")
    entries = set()
    candidates = [inst for inst in frame.instance_boxes if inst[2] >= confidence_threshold]
    for active in frame.active_boxes:
        best = None
        for box, cls, conf in candidates:
            iou = box_iou(active, box)
            if iou <= iou_threshold:
                continue
            rank = class_order.get(cls, len(class_order)) if class_order is not None else cls
            key = (iou, conf, _Reversed(rank))
            if best is None or key > best[0]:
                best = (key, cls)
        if best is not None:
            entries.add((active, best[1]))
    return LabeledActiveSet(frozenset(entries))


class _Reversed:
    """Wrapper inverting comparison order, for lowest-index tie-breaking."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __lt__(self, other):
        return other.value < self.value

    def __gt__(self, other):
        return other.value > self.value

    def __eq__(self, other):
        return other.value == self.value


# ---------------------------------------------------------------------------
# Activity contexts and compatibility aggregation


def frame_activity_context(
    labeled: LabeledActiveSet, vocab: Vocabulary, strict: bool = False
) -> ActivityContext:
    """Ordered pairs of distinct active classes; first element movable (or null).

    Duplicate instances of one class collapse to a single occurrence. When the
    frame has active objects but none are movable, the null token pairs with
    each present class (the empty-handed case). With strict=True the second
    element must also be movable.
    """
    classes = sorted(labeled.classes())
    for cls in classes:
        if cls not in vocab:
            raise VocabularyError(f"class {cls!r} not in vocabulary")
    movers = [c for c in classes if vocab.is_movable(c)]
    pairs = set()
    if movers:
        for a in movers:
            for b in classes:
                if a != b and (not strict or vocab.is_movable(b)):
                    pairs.add((a, b))
    else:
        for b in classes:
            pairs.add((NULL_TOKEN, b))
    return ActivityContext(frozenset(pairs))


def clip_pair_fraction(clip_frames: list[ActivityContext]) -> dict[tuple[str, str], float]:
    """Fraction of the clip's frames in which each pair is active."""
    if not clip_frames:
        raise CorpusError("empty clip")
    counts: dict[tuple[str, str], int] = {}
    for ctx in clip_frames:
        for pair in ctx.pairs:
            counts[pair] = counts.get(pair, 0) + 1
    n = len(clip_frames)
    return {pair: c / n for pair, c in counts.items()}


def aggregate_compatibility(
    corpus: Iterable[dict[tuple[str, str], float]], vocab: Vocabulary
) -> CompatibilityTable:
    """Sum per-clip pair fractions and normalize each row by its total mass.

    score[i, j] = sum_v S_v(i, j) / sum_v sum_{k != i} S_v(i, k). Rows with zero
    accumulated mass stay all-zero.
    """
    n = len(vocab)
    numer = np.zeros((n, n), dtype=np.float64)
    for fractions in corpus:
        for (a, b), s in fractions.items():
            numer[vocab.index(a), vocab.index(b)] += s
    return _row_normalized(vocab, numer)


def _row_normalized(vocab: Vocabulary, numer: np.ndarray) -> CompatibilityTable:
    np.fill_diagonal(numer, 0.0)
    denom = numer.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(denom > 0, numer / denom, 0.0)
    return CompatibilityTable(vocab, scores)


def compatibility_from_corpus(
    path,
    vocab: Vocabulary,
    iou_threshold: float = 0.5,
    confidence_threshold: float = 0.5,
    strict: bool = False,
) -> CompatibilityTable:
    """Full pipeline: corpus file -> label transfer -> activity contexts -> table."""
    class_order = {name: i for i, name in enumerate(vocab.names)}

    def clips():
        for _, frames in parse_detection_corpus(path):
            contexts = [
                frame_activity_context(
                    transfer_labels(fr, iou_threshold, confidence_threshold, class_order),
                    vocab,
                    strict=strict,
                )
                for fr in frames
            ]
            if contexts:
                yield clip_pair_fraction(contexts)

    return aggregate_compatibility(clips(), vocab)


# ---------------------------------------------------------------------------
# Vocabulary mapping (video classes -> environment classes)


def map_vocabulary(
    video_table: CompatibilityTable,
    video_emb: EmbeddingTable,
    env_vocab: Vocabulary,
    env_emb: EmbeddingTable,
    similarity_threshold: float = 0.6,
) -> CompatibilityTable:
    """Project a compatibility table onto a new vocabulary via embedding neighbors.

    mapped[m, n] = sum_{i in N(m)} sum_{j in N(n)} sigma(m,i) sigma(n,j) score[i, j],
    where N(o) are the source classes with dot-product similarity >= threshold,
    then rows are re-normalized. The null token maps to itself with weight 1.
    Environment classes with an empty neighbor set get an all-zero row (logged).
    """
    if not 0.0 < similarity_threshold < 1.0:
        raise ValueError("similarity threshold must lie in (0, 1)")
    src_vocab = video_table.vocabulary
    src_names = [n for n in src_vocab.names if n != NULL_TOKEN]

    neighbors: dict[str, list[tuple[str, float]]] = {}
    for name in env_vocab.names:
        if name == NULL_TOKEN:
            neighbors[name] = [(NULL_TOKEN, 1.0)]
            continue
        vec = env_emb[name]
        hits = []
        for src in src_names:
            if src not in video_emb:
                continue
            sim = float(np.dot(vec, video_emb[src]))
            if sim >= similarity_threshold:
                hits.append((src, sim))
        if not hits:
            log.warning("no video-vocabulary neighbor for %r above %.2f", name, similarity_threshold)
        neighbors[name] = hits

    n = len(env_vocab)
    numer = np.zeros((n, n), dtype=np.float64)
    for m, name_m in enumerate(env_vocab.names):
        if not env_vocab.movable[m]:
            continue
        for name_n in env_vocab.names:
            if name_n == NULL_TOKEN or name_n == name_m:
                continue
            total = 0.0
            for src_i, sim_i in neighbors[name_m]:
                for src_j, sim_j in neighbors[name_n]:
                    total += sim_i * sim_j * video_table.score(src_i, src_j)
            numer[m, env_vocab.index(name_n)] = total
    return _row_normalized(env_vocab, numer)


# ---------------------------------------------------------------------------
# Ablation priors


def uniform_prior(vocab: Vocabulary) -> CompatibilityTable:
    """Equal compatibility from every movable class (and null) to every other class."""
    n = len(vocab)
    numer = np.zeros((n, n), dtype=np.float64)
    null = vocab.null_index
    for i, movable in enumerate(vocab.movable):
        if not movable:
            continue
        numer[i, :] = 1.0
        numer[i, null] = 0.0
    return _row_normalized(vocab, numer)


def embed_prior(vocab: Vocabulary, emb: EmbeddingTable) -> CompatibilityTable:
    """Compatibility proportional to clamped cosine similarity of class embeddings."""
    n = len(vocab)
    numer = np.zeros((n, n), dtype=np.float64)
    for i, name_i in enumerate(vocab.names):
        if not vocab.movable[i] or name_i == NULL_TOKEN:
            continue
        for j, name_j in enumerate(vocab.names):
            if i == j or name_j == NULL_TOKEN:
                continue
            numer[i, j] = max(0.0, float(np.dot(emb[name_i], emb[name_j])))
    return _row_normalized(vocab, numer)


def cooc_prior(colocation_records: Iterable[Iterable[str]], vocab: Vocabulary) -> CompatibilityTable:
    """Compatibility from counts of scenes where two classes are co-located."""
    n = len(vocab)
    numer = np.zeros((n, n), dtype=np.float64)
    empty = True
    for record in colocation_records:
        empty = False
        classes = sorted(set(record))
        for a in classes:
            if not vocab.is_movable(a) or a == NULL_TOKEN:
                continue
            for b in classes:
                if a != b and b != NULL_TOKEN:
                    numer[vocab.index(a), vocab.index(b)] += 1.0
    if empty:
        raise CorpusError("empty co-location stream")
    return _row_normalized(vocab, numer)


def intseq_prior(
    labeled_clip_sequences: Iterable[Iterable[tuple[str, str]]], vocab: Vocabulary
) -> CompatibilityTable:
    """Compatibility from bigram counts of consecutive interaction targets.

    Each sequence is the ordered (action, object) clip labels of one video; only
    the objects are used. Self-transitions and fixed-class sources are dropped.
    """
    n = len(vocab)
    numer = np.zeros((n, n), dtype=np.float64)
    for seq in labeled_clip_sequences:
        objects = [obj for _, obj in seq]
        for a, b in zip(objects, objects[1:]):
            if a == b or not vocab.is_movable(a) or a == NULL_TOKEN or b == NULL_TOKEN:
                continue
            numer[vocab.index(a), vocab.index(b)] += 1.0
    return _row_normalized(vocab, numer)
