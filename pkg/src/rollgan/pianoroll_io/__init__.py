"""MIDI and piano-roll input/output."""

from .midi import (
    DEFAULT_TICKS_PER_BEAT,
    ExportConfig,
    FilterDecision,
    FilterPolicy,
    FilterReason,
    MidiSong,
    NoteEvent,
    TimeSignature,
    filter_midi,
    merge_overlaps,
    parse_midi,
    read_midi,
    write_midi,
)
from .npyfile import load_dataset, read_npy, save_dataset, write_npy
from .rolls import (
    DEFAULT_THRESHOLD,
    PITCHES,
    ROLL_SHAPE,
    TIME_STEPS,
    GridConfig,
    binarize,
    check_roll,
    count_out_of_range,
    events_to_rolls,
    is_binary,
    roll_to_events,
    rolls_to_midi,
    song_to_rolls,
)

__all__ = [
    "DEFAULT_THRESHOLD", "DEFAULT_TICKS_PER_BEAT", "PITCHES", "ROLL_SHAPE", "TIME_STEPS",
    "ExportConfig", "FilterDecision", "FilterPolicy", "FilterReason", "GridConfig",
    "MidiSong", "NoteEvent", "TimeSignature",
    "binarize", "check_roll", "count_out_of_range", "events_to_rolls", "filter_midi",
    "is_binary", "load_dataset", "merge_overlaps", "parse_midi", "read_midi", "read_npy",
    "roll_to_events", "rolls_to_midi", "save_dataset", "song_to_rolls", "write_midi",
    "write_npy",
]
