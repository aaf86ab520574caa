"""Standard MIDI File reading and writing.

Only the parts of SMF that matter for piano-roll data are interpreted: note
on/off pairs, the time division, time signatures, tempo and end-of-track.
Everything else (controllers, sysex, text meta events) is skipped over
correctly but otherwise ignored.
"""

from __future__ import annotations

import enum
import logging
import struct
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import MalformedMidi, UnmatchedNoteOn

logger = logging.getLogger(__name__)

DEFAULT_TICKS_PER_BEAT = 480

# data bytes following a channel status byte, keyed by the high nibble
_CHANNEL_MSG_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


@dataclass(frozen=True, slots=True, order=True)
class NoteEvent:
    """A sounding note in absolute ticks."""

    onset: int
    pitch: int
    duration: int
    velocity: int = 90

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if self.onset < 0:
            raise ValueError(f"negative onset: {self.onset}")
        if self.duration < 1:
            raise ValueError(f"duration must be >= 1 tick, got {self.duration}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")

    @property
    def end(self) -> int:
        return self.onset + self.duration


@dataclass(frozen=True, slots=True)
class TimeSignature:
    tick: int
    numerator: int
    denominator: int

    @property
    def is_common_time(self) -> bool:
        return self.numerator == 4 and self.denominator == 4


@dataclass(frozen=True, slots=True)
class MidiSong:
    """Parsed note content of a MIDI file plus the meta data the pipeline uses."""

    notes: tuple[NoteEvent, ...]
    ticks_per_beat: int
    time_signatures: tuple[TimeSignature, ...] = ()
    tempos: tuple[tuple[int, int], ...] = ()  # (tick, microseconds per beat)
    end_tick: int = 0
    format: int = 0
    n_tracks: int = 1


@dataclass(frozen=True, slots=True)
class ExportConfig:
    tempo_bpm: float = 120.0
    velocity: int = 90
    program: int = 0
    ticks_per_beat: int = DEFAULT_TICKS_PER_BEAT


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise MalformedMidi(f"unexpected end of data at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def byte(self) -> int:
        return self.take(1)[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MalformedMidi("variable-length quantity longer than 4 bytes")


def _parse_header(data: bytes) -> tuple[int, int, int, int]:
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedMidi("missing MThd header chunk")
    (length,) = struct.unpack(">I", data[4:8])
    if length < 6 or 8 + length > len(data):
        raise MalformedMidi(f"bad header length {length}")
    fmt, ntrks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1, 2):
        raise MalformedMidi(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise MalformedMidi("SMPTE time division is not supported")
    if division == 0:
        raise MalformedMidi("ticks per beat must be positive")
    return fmt, ntrks, division, 8 + length


def _iter_track(data: bytes, start: int, end: int):
    """Yield (abs_tick, status, payload) for every event in one MTrk body."""
    r = _Reader(data, start, end)
    tick = 0
    running = None
    while r.pos < r.end:
        tick += r.varlen()
        status = r.byte()
        if status < 0x80:
            if running is None:
                raise MalformedMidi("running status without a previous status byte")
            r.pos -= 1
            status = running
        if status == 0xFF:
            kind = r.byte()
            payload = r.take(r.varlen())
            yield tick, 0xFF, (kind, payload)
            if kind == 0x2F:
                return
        elif status in (0xF0, 0xF7):
            r.take(r.varlen())
            running = None
        elif status >= 0xF0:
            raise MalformedMidi(f"unexpected system status byte 0x{status:02x}")
        else:
            running = status
            yield tick, status, r.take(_CHANNEL_MSG_LEN[status & 0xF0])


def parse_midi(data: bytes, *, strict: bool = False) -> MidiSong:
    """Parse SMF bytes into a :class:`MidiSong`.

    Note-ons are paired with note-offs first-in first-out per (channel, pitch);
    a note-on with velocity 0 counts as a note-off. A note-on left open at the
    end of its track is closed there and logged, or raises
    :class:`UnmatchedNoteOn` when ``strict`` is set.
    """
    data = bytes(data)
    fmt, ntrks, tpb, pos = _parse_header(data)

    notes: list[NoteEvent] = []
    sigs: list[TimeSignature] = []
    tempos: list[tuple[int, int]] = []
    song_end = 0
    for _ in range(ntrks):
        if pos + 8 > len(data):
            raise MalformedMidi("fewer track chunks than declared in header")
        chunk_id = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body_end = pos + 8 + length
        if body_end > len(data):
            raise MalformedMidi("track chunk runs past end of file")
        if chunk_id != b"MTrk":
            # alien chunks must be skipped per the SMF standard
            pos = body_end
            continue

        open_notes: dict[tuple[int, int], deque] = defaultdict(deque)
        track_end = 0
        for tick, status, payload in _iter_track(data, pos + 8, body_end):
            track_end = tick
            if status == 0xFF:
                kind, body = payload
                if kind == 0x58 and len(body) >= 2:
                    sigs.append(TimeSignature(tick, body[0], 2 ** body[1]))
                elif kind == 0x51 and len(body) == 3:
                    tempos.append((tick, int.from_bytes(body, "big")))
                continue
            hi, channel = status & 0xF0, status & 0x0F
            if hi not in (0x80, 0x90):
                continue
            pitch, velocity = payload[0] & 0x7F, payload[1] & 0x7F
            key = (channel, pitch)
            if hi == 0x90 and velocity > 0:
                open_notes[key].append((tick, velocity))
            elif open_notes[key]:
                onset, vel = open_notes[key].popleft()
                notes.append(NoteEvent(onset, pitch, max(tick - onset, 1), vel))

        for (channel, pitch), pending in open_notes.items():
            for onset, vel in pending:
                if strict:
                    raise UnmatchedNoteOn(
                        f"note-on pitch {pitch} channel {channel} at tick {onset} never released")
                logger.warning("closing unmatched note-on (pitch %d, tick %d) at track end %d",
                               pitch, onset, track_end)
                notes.append(NoteEvent(onset, pitch, max(track_end - onset, 1), vel))
        song_end = max(song_end, track_end)
        pos = body_end

    notes.sort()
    sigs.sort(key=lambda s: s.tick)
    tempos.sort()
    return MidiSong(
        notes=tuple(notes),
        ticks_per_beat=tpb,
        time_signatures=tuple(sigs),
        tempos=tuple(tempos),
        end_tick=max(song_end, max((n.end for n in notes), default=0)),
        format=fmt,
        n_tracks=ntrks,
    )


def read_midi(path, *, strict: bool = False) -> MidiSong:
    with open(path, "rb") as fh:
        return parse_midi(fh.read(), strict=strict)


def _varlen(value: int) -> bytes:
    if value < 0:
        raise ValueError("delta time must be non-negative")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def write_midi(notes: Iterable[NoteEvent], config: ExportConfig = ExportConfig(),
               end_tick: int | None = None) -> bytes:
    """Serialize notes as a single-track format-0 SMF.

    The track carries a tempo, a 4/4 time signature and a program change at tick
    0, so exported files pass the corpus filter when re-ingested. ``end_tick``
    places the end-of-track marker (defaults to the last note-off), which is how
    trailing silence survives a round trip.
    """
    notes = list(notes)
    tempo = round(60_000_000 / config.tempo_bpm)
    # sort key: tick, then note-offs before note-ons, then pitch
    timeline: list[tuple[int, int, int, bytes]] = []
    for n in notes:
        timeline.append((n.onset, 1, n.pitch, bytes([0x90, n.pitch, n.velocity])))
        timeline.append((n.end, 0, n.pitch, bytes([0x80, n.pitch, 0])))
    timeline.sort(key=lambda e: e[:3])

    body = bytearray()
    body += b"\x00\xff\x51\x03" + tempo.to_bytes(3, "big")
    body += b"\x00\xff\x58\x04\x04\x02\x18\x08"
    body += b"\x00" + bytes([0xC0, config.program & 0x7F])
    now = 0
    for tick, _, _, msg in timeline:
        body += _varlen(tick - now) + msg
        now = tick
    last = max(now, end_tick or 0)
    body += _varlen(last - now) + b"\xff\x2f\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, config.ticks_per_beat)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


class FilterReason(str, enum.Enum):
    OK = "OK"
    FIRST_BEAT_NON_ZERO = "FirstBeatNonZero"
    TIME_SIGNATURE_CHANGED = "TimeSignatureChanged"
    TIME_SIGNATURE_NOT_44 = "TimeSignatureNot44"
    NO_NOTES = "NoNotes"


@dataclass(frozen=True, slots=True)
class FilterDecision:
    reason: FilterReason

    @property
    def accepted(self) -> bool:
        return self.reason is FilterReason.OK


@dataclass(frozen=True, slots=True)
class FilterPolicy:
    require_first_onset_zero: bool = True
    require_common_time: bool = True


def filter_midi(song: MidiSong, policy: FilterPolicy = FilterPolicy()) -> FilterDecision:
    """Apply the corpus filters: first note on tick 0, one 4/4 signature throughout.

    A file without any time-signature event is 4/4 by SMF convention.
    """
    if not song.notes:
        return FilterDecision(FilterReason.NO_NOTES)
    if policy.require_first_onset_zero and min(n.onset for n in song.notes) != 0:
        return FilterDecision(FilterReason.FIRST_BEAT_NON_ZERO)
    if policy.require_common_time:
        distinct = {(s.numerator, s.denominator) for s in song.time_signatures}
        if len(distinct) > 1:
            return FilterDecision(FilterReason.TIME_SIGNATURE_CHANGED)
        if distinct and distinct != {(4, 4)}:
            return FilterDecision(FilterReason.TIME_SIGNATURE_NOT_44)
    return FilterDecision(FilterReason.OK)


def merge_overlaps(notes: Sequence[NoteEvent]) -> list[NoteEvent]:
    """Merge same-pitch notes that overlap in time into single held notes."""
    by_pitch: dict[int, list[NoteEvent]] = defaultdict(list)
    for n in sorted(notes):
        by_pitch[n.pitch].append(n)
    merged: list[NoteEvent] = []
    for pitch, group in by_pitch.items():
        cur = group[0]
        for n in group[1:]:
            if n.onset < cur.end:
                cur = NoteEvent(cur.onset, pitch, max(cur.end, n.end) - cur.onset, cur.velocity)
            else:
                merged.append(cur)
                cur = n
        merged.append(cur)
    return sorted(merged)
