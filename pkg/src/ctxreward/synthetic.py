"""Synthetic detection corpora with known pair statistics.

Each activity names a set of classes and per-frame presence probabilities.
Every present class emits one instance box at a fixed per-class location plus an
identical class-agnostic active box, so label transfer recovers the class
exactly. Detector noise displaces the active box, which drops the class from
that frame. The generator also reports the ground-truth compatibility table
computed from its own intended emissions, independent of the box pipeline.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

import numpy as np

from . import NULL_TOKEN
from .priors import CompatibilityTable
from .vocab import Vocabulary

BOX_SIZE = 40.0
CONFIDENCE = 0.9


@dataclass(frozen=True)
class Activity:
    name: str
    clips: int
    frames: int
    classes: dict[str, float]  # per-frame presence probability

    def __post_init__(self):
        for cls, p in self.classes.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"presence probability {p} for {cls} outside [0, 1]")


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    vocabulary: Vocabulary
    activities: tuple[Activity, ...]
    noise_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise rate outside [0, 1]")
        for act in self.activities:
            for cls in act.classes:
                if cls not in self.vocabulary:
                    raise ValueError(f"activity {act.name} uses unknown class {cls}")

    @classmethod
    def from_json(cls, text: str) -> "SyntheticCorpusSpec":
        rec = json.loads(text)
        vocab = Vocabulary.build(rec["movable"], rec["fixed"])
        activities = tuple(
            Activity(a["name"], int(a["clips"]), int(a["frames"]), dict(a["classes"]))
            for a in rec["activities"]
        )
        return cls(vocab, activities, float(rec.get("noise_rate", 0.0)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "movable": self.vocabulary.movable_names(),
                "fixed": self.vocabulary.fixed_names(),
                "activities": [
                    {"name": a.name, "clips": a.clips, "frames": a.frames, "classes": a.classes}
                    for a in self.activities
                ],
                "noise_rate": self.noise_rate,
            },
            indent=2,
        )


def _class_box(vocab: Vocabulary, cls: str) -> list[float]:
    """Fixed, mutually disjoint box per class."""
    i = vocab.index(cls)
    x = (i % 8) * (BOX_SIZE + 10.0)
    y = (i // 8) * (BOX_SIZE + 10.0)
    return [x, y, x + BOX_SIZE, y + BOX_SIZE]


def _frame_pairs(vocab: Vocabulary, classes: set[str]) -> set[tuple[str, str]]:
    """Intended activity-context pairs of one frame (generator-side bookkeeping)."""
    movers = [c for c in classes if vocab.is_movable(c)]
    if movers:
        return {(a, b) for a in movers for b in classes if a != b}
    return {(NULL_TOKEN, b) for b in classes}


def generate_corpus(
    spec: SyntheticCorpusSpec, seed: int, corpus_path
) -> CompatibilityTable:
    """Write a JSONL detection corpus; return the ground-truth table.

    The ground truth aggregates the noise-free intended class sets with the
    same fraction-of-frames statistic the extraction pipeline estimates.
    """
    rng = random.Random(seed)
    vocab = spec.vocabulary
    n = len(vocab)
    numer = np.zeros((n, n), dtype=np.float64)

    with open(corpus_path, "w", encoding="utf-8") as f:
        clip_no = 0
        for act in spec.activities:
            for _ in range(act.clips):
                video_id = f"clip{clip_no:05d}_{act.name}"
                clip_no += 1
                pair_counts: dict[tuple[str, str], int] = {}
                for frame_index in range(act.frames):
                    present = {c for c, p in act.classes.items() if rng.random() < p}
                    for pair in _frame_pairs(vocab, present):
                        pair_counts[pair] = pair_counts.get(pair, 0) + 1
                    active_boxes = []
                    instances = []
                    for cls in sorted(present):
                        box = _class_box(vocab, cls)
                        instances.append({"box": box, "class": cls, "confidence": CONFIDENCE})
                        if rng.random() < spec.noise_rate:
                            # displaced active box: no qualifying overlap, class dropped
                            shift = BOX_SIZE * 2
                            active_boxes.append([box[0] + shift, box[1], box[2] + shift, box[3]])
                        else:
                            active_boxes.append(list(box))
                    f.write(
                        json.dumps(
                            {
                                "video_id": video_id,
                                "frame_index": frame_index,
                                "active_boxes": active_boxes,
                                "instances": instances,
                            }
                        )
                        + "\n"
                    )
                for (a, b), count in pair_counts.items():
                    numer[vocab.index(a), vocab.index(b)] += count / act.frames

    np.fill_diagonal(numer, 0.0)
    denom = numer.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(denom > 0, numer / denom, 0.0)
    return CompatibilityTable(vocab, scores)


def kitchen_activity_spec(noise_rate: float = 0.0) -> SyntheticCorpusSpec:
    """Activities mirroring everyday kitchen routines over the built-in vocabulary."""
    from .layouts import make_layout

    vocab = make_layout("kitchen_a").vocabulary()
    activities = []
    # the handled object is present in every frame of its activity, so no frame
    # degenerates to a null (empty-hand) context and the null row stays zero:
    # empty-handed fixture interactions earn nothing under the extracted prior
    for cls in ("mug", "plate"):
        activities.append(
            Activity(f"wash_{cls}", 4, 20, {cls: 1.0, "sink_basin": 0.85, "faucet": 0.6})
        )
    for cls in ("pot", "kettle"):
        activities.append(
            Activity(f"cook_{cls}", 4, 20, {cls: 1.0, "stove_burner": 0.85, "stove_knob": 0.6})
        )
    for cls in ("tomato", "apple"):
        activities.append(Activity(f"chill_{cls}", 4, 20, {cls: 1.0, "fridge": 0.8}))
    for cls in ("fork", "spoon", "knife"):
        activities.append(Activity(f"stow_{cls}", 4, 20, {cls: 1.0, "drawer": 0.8}))
    for cls in ("bread", "potato"):
        activities.append(Activity(f"discard_{cls}", 2, 20, {cls: 1.0, "garbage_can": 0.8}))
    return SyntheticCorpusSpec(vocab, tuple(activities), noise_rate)
