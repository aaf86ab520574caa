"""Labeled phrase collections, train/test splits and the training-time samplers."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import EmptyDomain, EmptyGenre, InvalidCount
from .pianoroll_io import ROLL_SHAPE, check_roll

Domain = Literal["A", "B"]


class GenreLabel(str, enum.Enum):
    JAZZ = "Jazz"
    CLASSIC = "Classic"

    @classmethod
    def parse(cls, name: str) -> "GenreLabel":
        for label in cls:
            if label.value.lower() == name.strip().lower():
                return label
        raise ValueError(f"unknown genre {name!r}; expected one of {[g.value for g in cls]}")


# Domain A is Jazz, domain B is Classic (Jazz-to-Classic is the A->B task).
DOMAIN_LABEL = {"A": GenreLabel.JAZZ, "B": GenreLabel.CLASSIC}


@dataclass(frozen=True, eq=False)
class LabeledSample:
    roll: np.ndarray
    label: GenreLabel
    source_id: str

    def __post_init__(self):
        check_roll(self.roll, binary=True, batched=False)


@dataclass(frozen=True)
class DomainSplit:
    train_a: tuple[LabeledSample, ...]
    test_a: tuple[LabeledSample, ...]
    train_b: tuple[LabeledSample, ...]
    test_b: tuple[LabeledSample, ...]
    seed: int = 0

    def train(self, domain: Domain) -> tuple[LabeledSample, ...]:
        return self.train_a if domain == "A" else self.train_b

    def test(self, domain: Domain) -> tuple[LabeledSample, ...]:
        return self.test_a if domain == "A" else self.test_b

    @property
    def mixed(self) -> tuple[LabeledSample, ...]:
        """Union of both training sets, the pool auxiliary discriminators treat as real."""
        return self.train_a + self.train_b

    def manifest(self) -> dict[str, list[str]]:
        return {name: [s.source_id for s in getattr(self, name)]
                for name in ("train_a", "test_a", "train_b", "test_b")}


def samples_from_rolls(rolls, label: GenreLabel, prefix: str | None = None) -> list[LabeledSample]:
    prefix = prefix or label.value.lower()
    return [LabeledSample(np.asarray(r, dtype=np.uint8), label, f"{prefix}:{i}")
            for i, r in enumerate(rolls)]


def split(samples: Sequence[LabeledSample], test_fraction: float = 0.1, seed: int = 0) -> DomainSplit:
    """Stratified random split, reproducible from ``seed``.

    Each genre sends ``round(n * test_fraction)`` samples to test, capped so at
    least one stays in train.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    parts = {}
    for label in (GenreLabel.JAZZ, GenreLabel.CLASSIC):
        group = [s for s in samples if s.label is label]
        if not group:
            raise EmptyGenre(f"no samples with label {label.value}")
        n_test = min(int(round(len(group) * test_fraction)), len(group) - 1)
        order = rng.permutation(len(group))
        test_idx, train_idx = sorted(order[:n_test]), sorted(order[n_test:])
        parts[label] = (tuple(group[i] for i in train_idx), tuple(group[i] for i in test_idx))
    return DomainSplit(*parts[GenreLabel.JAZZ], *parts[GenreLabel.CLASSIC], seed=seed)


def _draw(pool: Sequence[LabeledSample], n: int, rng: np.random.Generator, what: str):
    if n < 1:
        raise InvalidCount(f"sample count must be >= 1, got {n}")
    if not pool:
        raise EmptyDomain(f"{what} is empty")
    return [pool[i] for i in rng.integers(0, len(pool), size=n)]


def sample_domain(split: DomainSplit, domain: Domain, n: int,
                  rng: np.random.Generator) -> list[LabeledSample]:
    """Uniform draw with replacement from one domain's training set."""
    return _draw(split.train(domain), n, rng, f"training set of domain {domain}")


def sample_mixed(split: DomainSplit, n: int, rng: np.random.Generator) -> list[LabeledSample]:
    """Uniform draw with replacement from the union of both training sets."""
    return _draw(split.mixed, n, rng, "mixed training set")


def stack(samples: Sequence[LabeledSample]) -> np.ndarray:
    if not samples:
        return np.zeros((0,) + ROLL_SHAPE, dtype=np.uint8)
    return np.stack([s.roll for s in samples])


def write_manifest(split: DomainSplit, path) -> None:
    lines = [f"seed={split.seed}"]
    lines += [f"{k}={','.join(v)}" for k, v in split.manifest().items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key] = [v for v in value.split(",") if v]
    return out


@dataclass(frozen=True)
class SyntheticProfile:
    """Two toy genres with disjoint pitch bands and opposite metric placement.

    Genre A (Jazz) plays in rows ``band_a`` on off-beats, genre B (Classic) in
    rows ``band_b`` on down-beats. Beats are quarter notes (4 steps); the
    off-beat is the eighth between them. The bands are one octave wide so that
    rolls of one genre share cells, which keeps nearest-neighbor rules honest,
    and each phrase opens on its band's lowest pitch.
    """

    band_a: tuple[int, int] = (18, 30)
    band_b: tuple[int, int] = (54, 66)
    beat_steps: int = 4
    note_steps: int = 4
    note_prob: float = 0.8
    max_voices: int = 2


def make_synthetic(n_per_genre: int, seed: int = 0,
                   profile: SyntheticProfile = SyntheticProfile()) -> list[LabeledSample]:
    """Generate ``n_per_genre`` rolls per toy genre, Jazz first."""
    rng = np.random.default_rng(seed)
    samples = []
    for label, band, phase in ((GenreLabel.JAZZ, profile.band_a, profile.beat_steps // 2),
                               (GenreLabel.CLASSIC, profile.band_b, 0)):
        for i in range(n_per_genre):
            roll = np.zeros(ROLL_SHAPE, dtype=np.uint8)
            for t in range(phase, ROLL_SHAPE[0], profile.beat_steps):
                if rng.random() >= profile.note_prob:
                    continue
                voices = rng.integers(1, profile.max_voices + 1)
                rows = rng.choice(np.arange(*band), size=voices, replace=False)
                roll[t:t + profile.note_steps, rows] = 1
            # every phrase opens on the band's lowest pitch, a cell that alone separates the genres
            roll[phase:phase + profile.note_steps, band[0]] = 1
            samples.append(LabeledSample(roll, label, f"synthetic-{label.value.lower()}:{i}"))
    return samples
