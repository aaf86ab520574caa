"""Conversion between note events and fixed-size piano-roll phrases.

A piano roll is a plain ``numpy`` array of shape ``(64, 84)`` indexed
``[time_step, pitch_row]``. Binary rolls use ``uint8``; generator output is
continuous ``float32`` in ``[0, 1]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import EmptyAfterQuantization, InvalidThreshold, NonBinaryRoll, ShapeMismatch
from .midi import DEFAULT_TICKS_PER_BEAT, ExportConfig, MidiSong, NoteEvent, write_midi

logger = logging.getLogger(__name__)

TIME_STEPS = 64
PITCHES = 84
ROLL_SHAPE = (TIME_STEPS, PITCHES)
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True, slots=True)
class GridConfig:
    """Step grid of a phrase. Beats are quarter notes, bars are 4/4."""

    steps_per_bar: int = 16
    bars_per_phrase: int = 4
    pitch_floor: int = 24
    pitch_count: int = PITCHES

    def __post_init__(self):
        if self.steps_per_bar < 1 or self.bars_per_phrase < 1:
            raise ValueError("grid dimensions must be positive")
        if self.steps_per_bar * self.bars_per_phrase != TIME_STEPS:
            raise ValueError(
                f"steps_per_bar * bars_per_phrase must be {TIME_STEPS}, "
                f"got {self.steps_per_bar} * {self.bars_per_phrase}")
        if self.pitch_count != PITCHES:
            raise ValueError(f"pitch_count must be {PITCHES}")
        if self.pitch_floor < 0 or self.pitch_floor + self.pitch_count > 128:
            raise ValueError(f"pitch range {self.pitch_floor}+{self.pitch_count} exceeds MIDI")

    @classmethod
    def for_steps_per_bar(cls, steps_per_bar: int, pitch_floor: int = 24) -> "GridConfig":
        if steps_per_bar < 1 or TIME_STEPS % steps_per_bar:
            raise ValueError(f"steps_per_bar must divide {TIME_STEPS}, got {steps_per_bar}")
        return cls(steps_per_bar, TIME_STEPS // steps_per_bar, pitch_floor)

    @property
    def phrase_steps(self) -> int:
        return self.steps_per_bar * self.bars_per_phrase

    def ticks_per_step(self, ticks_per_beat: int) -> float:
        return ticks_per_beat * 4 / self.steps_per_bar


def check_roll(roll, *, binary: bool = False, batched: bool | None = None) -> np.ndarray:
    """Validate shape (and range) of a roll or a batch of rolls, returning an array."""
    arr = np.asarray(roll)
    if batched is None:
        batched = arr.ndim == 3
    expected_ndim = 3 if batched else 2
    if arr.ndim != expected_ndim or arr.shape[-2:] != ROLL_SHAPE:
        raise ShapeMismatch(f"expected {'N x ' if batched else ''}64 x 84, got {arr.shape}")
    if binary:
        if not np.isin(arr, (0, 1)).all():
            raise NonBinaryRoll("roll has entries other than 0 and 1")
    elif arr.size and (np.nanmin(arr) < 0 or np.nanmax(arr) > 1 or np.isnan(arr).any()):
        raise ValueError("roll entries must lie in [0, 1]")
    return arr


def is_binary(roll) -> bool:
    return bool(np.isin(np.asarray(roll), (0, 1)).all())


def count_out_of_range(events: Iterable[NoteEvent], grid: GridConfig = GridConfig()) -> int:
    lo, hi = grid.pitch_floor, grid.pitch_floor + grid.pitch_count
    return sum(1 for e in events if not lo <= e.pitch < hi)


def _note_steps(event: NoteEvent, ticks_per_step: float) -> tuple[int, int]:
    start = int(round(event.onset / ticks_per_step))
    stop = int(round(event.end / ticks_per_step))
    return start, max(stop, start + 1)


def events_to_rolls(events: Iterable[NoteEvent], grid: GridConfig = GridConfig(),
                    ticks_per_beat: int = DEFAULT_TICKS_PER_BEAT,
                    end_tick: int | None = None) -> list[np.ndarray]:
    """Quantize notes onto the step grid and cut the song into 64-step phrases.

    Onsets and offsets are rounded to the nearest step; every note occupies at
    least one step. The song length is the later of the last note-off and
    ``end_tick``. A trailing partial phrase is dropped, as are pitches outside
    the grid's range (their number is logged).
    """
    events = list(events)
    tps = grid.ticks_per_step(ticks_per_beat)
    lo = grid.pitch_floor
    kept, dropped = [], 0
    total_steps = int(round(end_tick / tps)) if end_tick else 0
    for e in events:
        start, stop = _note_steps(e, tps)
        total_steps = max(total_steps, stop)
        if lo <= e.pitch < lo + grid.pitch_count:
            kept.append((start, stop, e.pitch - lo))
        else:
            dropped += 1
    if dropped:
        logger.info("dropped %d notes outside pitch range %d-%d", dropped, lo, lo + grid.pitch_count - 1)

    n_phrases = total_steps // grid.phrase_steps
    if n_phrases == 0:
        raise EmptyAfterQuantization(
            f"song spans {total_steps} steps, shorter than one {grid.phrase_steps}-step phrase")
    song = np.zeros((n_phrases * grid.phrase_steps, grid.pitch_count), dtype=np.uint8)
    for start, stop, row in kept:
        song[start:stop, row] = 1
    return list(song.reshape(n_phrases, grid.phrase_steps, grid.pitch_count))


def song_to_rolls(song: MidiSong, grid: GridConfig = GridConfig()) -> list[np.ndarray]:
    return events_to_rolls(song.notes, grid, song.ticks_per_beat, song.end_tick)


def binarize(roll, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Entries at or above ``threshold`` become 1, everything else 0."""
    if not 0 < threshold < 1:
        raise InvalidThreshold(f"threshold must lie strictly between 0 and 1, got {threshold}")
    return (np.asarray(roll) >= threshold).astype(np.uint8)


def roll_to_events(roll, grid: GridConfig = GridConfig(),
                   ticks_per_beat: int = DEFAULT_TICKS_PER_BEAT, velocity: int = 90,
                   offset_steps: int = 0) -> list[NoteEvent]:
    """Turn each maximal run of active cells in a pitch row into one held note."""
    arr = check_roll(roll, binary=True, batched=False).astype(np.int8)
    tps = grid.ticks_per_step(ticks_per_beat)
    if tps != int(tps):
        raise ValueError(f"ticks_per_beat {ticks_per_beat} gives a fractional step length")
    tps = int(tps)
    padded = np.zeros((arr.shape[0] + 2, arr.shape[1]), dtype=np.int8)
    padded[1:-1] = arr
    edges = np.diff(padded, axis=0)
    events = []
    for row in range(arr.shape[1]):
        starts = np.flatnonzero(edges[:, row] == 1)
        stops = np.flatnonzero(edges[:, row] == -1)
        for a, b in zip(starts, stops):
            events.append(NoteEvent(
                onset=(int(a) + offset_steps) * tps,
                pitch=grid.pitch_floor + row,
                duration=int(b - a) * tps,
                velocity=velocity,
            ))
    return sorted(events)


def rolls_to_midi(rolls: Sequence, grid: GridConfig = GridConfig(),
                  config: ExportConfig = ExportConfig()) -> bytes:
    """Concatenate binary rolls in time and export them as one MIDI file.

    Runs that continue across a phrase boundary are split there, so each
    phrase's notes re-rasterize into exactly that phrase.
    """
    events: list[NoteEvent] = []
    for i, roll in enumerate(rolls):
        events += roll_to_events(roll, grid, config.ticks_per_beat, config.velocity,
                                 offset_steps=i * grid.phrase_steps)
    tps = int(grid.ticks_per_step(config.ticks_per_beat))
    return write_midi(sorted(events), config, end_tick=len(rolls) * grid.phrase_steps * tps)
