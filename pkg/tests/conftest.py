import json
import random
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctxreward import NULL_TOKEN
from ctxreward.vocab import Vocabulary


@pytest.fixture
def small_vocab():
    return Vocabulary.build(["cup", "bottle", "knife"], ["sink", "stove"])


def random_corpus(rng: random.Random, vocab: Vocabulary, path: Path, n_clips=8, n_frames=12):
    """Random detection corpus with perfectly aligned boxes; returns class sets.

    Each frame independently samples a subset of classes. Boxes are placed on a
    disjoint per-class lattice so label transfer is exact, letting oracles work
    from the class sets alone.
    """
    names = [n for n in vocab.names if n != NULL_TOKEN]
    clip_sets = []
    with open(path, "w", encoding="utf-8") as f:
        for clip in range(n_clips):
            video_id = f"vid{clip:03d}"
            frames = []
            for t in range(n_frames):
                present = sorted({n for n in names if rng.random() < 0.45})
                frames.append(set(present))
                instances, active = [], []
                for cls in present:
                    i = vocab.index(cls)
                    x, y = (i % 6) * 50.0, (i // 6) * 50.0
                    box = [x, y, x + 40.0, y + 40.0]
                    instances.append({"box": box, "class": cls, "confidence": 0.9})
                    active.append(box)
                f.write(
                    json.dumps(
                        {
                            "video_id": video_id,
                            "frame_index": t,
                            "active_boxes": active,
                            "instances": instances,
                        }
                    )
                    + "\n"
                )
            clip_sets.append(frames)
    return clip_sets


@pytest.fixture
def rng():
    return random.Random(20240817)


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240817)
