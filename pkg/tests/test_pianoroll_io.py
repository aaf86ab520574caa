import io
import struct

import mido
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import mido_bytes, mido_notes, random_roll, rasterize
from rollgan.errors import (
    EmptyAfterQuantization,
    InvalidThreshold,
    MalformedMidi,
    NonBinaryRoll,
    UnmatchedNoteOn,
)
from rollgan.pianoroll_io import (
    ExportConfig,
    FilterPolicy,
    FilterReason,
    GridConfig,
    NoteEvent,
    binarize,
    count_out_of_range,
    events_to_rolls,
    filter_midi,
    merge_overlaps,
    parse_midi,
    roll_to_events,
    rolls_to_midi,
    song_to_rolls,
    write_midi,
)

TPS = 120  # ticks per step at 480 ticks per beat, 16 steps per bar


def _track(body: bytes, tpb=480, fmt=0) -> bytes:
    return (b"MThd" + struct.pack(">IHHH", 6, fmt, 1, tpb)
            + b"MTrk" + struct.pack(">I", len(body)) + body)


# ── parse_midi ──────────────────────────────────────


class TestParse:
    def test_single_quarter_note(self):
        song = parse_midi(mido_bytes([(0, 60, 480)]))
        assert song.notes == (NoteEvent(0, 60, 480, 80),)
        assert song.ticks_per_beat == 480

    def test_header_only_track(self):
        song = parse_midi(_track(b"\x00\xff\x2f\x00", tpb=96))
        assert song.notes == ()
        assert song.ticks_per_beat == 96
        assert song.time_signatures == ()

    def test_writer_round_trip(self):
        notes = [NoteEvent(0, 60, 240), NoteEvent(240, 64, 480), NoteEvent(960, 67, 120)]
        song = parse_midi(write_midi(notes))
        assert list(song.notes) == notes

    def test_mido_authored_file(self):
        fixture = [(0, 48, 100), (0, 55, 300), (120, 48, 50), (700, 90, 13)]
        song = parse_midi(mido_bytes(fixture))
        assert sorted((n.onset, n.pitch, n.duration) for n in song.notes) == sorted(fixture)

    def test_running_status_and_velocity_zero_off(self):
        # note-on C4, running-status note-on velocity 0 as the release
        body = b"\x00\x90\x3c\x40" + b"\x83\x60\x3c\x00" + b"\x00\xff\x2f\x00"
        song = parse_midi(_track(body))
        assert song.notes == (NoteEvent(0, 60, 480, 64),)

    def test_format1_multitrack(self):
        mf = mido.MidiFile(type=1, ticks_per_beat=480)
        for pitch in (60, 72):
            t = mido.MidiTrack()
            t.append(mido.Message("note_on", note=pitch, velocity=70, time=0))
            t.append(mido.Message("note_off", note=pitch, velocity=0, time=240))
            mf.tracks.append(t)
        buf = io.BytesIO()
        mf.save(file=buf)
        song = parse_midi(buf.getvalue())
        assert [(n.pitch, n.duration) for n in song.notes] == [(60, 240), (72, 240)]
        assert song.n_tracks == 2

    def test_same_pitch_fifo_pairing(self):
        body = (b"\x00\x90\x3c\x40" + b"\x10\x90\x3c\x40" + b"\x10\x80\x3c\x00"
                + b"\x10\x80\x3c\x00" + b"\x00\xff\x2f\x00")
        song = parse_midi(_track(body))
        assert [(n.onset, n.duration) for n in song.notes] == [(0, 32), (16, 32)]

    def test_unmatched_note_on_closed_at_track_end(self):
        body = b"\x00\x90\x3c\x40" + b"\x87\x40\xff\x2f\x00"
        assert parse_midi(_track(body)).notes == (NoteEvent(0, 60, 960, 64),)
        with pytest.raises(UnmatchedNoteOn):
            parse_midi(_track(body), strict=True)

    def test_sysex_and_text_meta_skipped(self):
        body = (b"\x00\xf0\x03\x7e\x7f\xf7" + b"\x00\xff\x01\x02hi"
                + b"\x00\x90\x3c\x40\x60\x80\x3c\x00\x00\xff\x2f\x00")
        assert parse_midi(_track(body)).notes == (NoteEvent(0, 60, 96, 64),)

    @pytest.mark.parametrize("data", [
        b"",
        b"MThx" + b"\x00" * 10,
        b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\xe7\x28",  # SMPTE division
        _track(b"\x00\x90\x3c")[:-1],
        b"MThd\x00\x00\x00\x06\x00\x00\x00\x02\x01\xe0" + b"MTrk\x00\x00\x00\x04\x00\xff\x2f\x00",
    ])
    def test_malformed(self, data):
        with pytest.raises(MalformedMidi):
            parse_midi(data)


# ── write_midi ──────────────────────────────────────


class TestWrite:
    def test_empty_song_has_meta_only(self):
        mf = mido.MidiFile(file=io.BytesIO(write_midi([])))
        types = [m.type for m in mf.tracks[0]]
        assert types == ["set_tempo", "time_signature", "program_change", "end_of_track"]
        assert mf.tracks[0][0].tempo == 500000

    def test_one_note_gives_one_pair(self):
        mf = mido.MidiFile(file=io.BytesIO(write_midi([NoteEvent(0, 60, 480)])))
        notes = [m for m in mf.tracks[0] if m.type in ("note_on", "note_off")]
        assert [m.type for m in notes] == ["note_on", "note_off"]
        assert notes[0].velocity == 90

    def test_export_config_applied(self):
        data = write_midi([NoteEvent(0, 60, 480, 100)], ExportConfig(tempo_bpm=90, program=5,
                                                                       ticks_per_beat=96))
        mf = mido.MidiFile(file=io.BytesIO(data))
        assert mf.ticks_per_beat == 96
        assert mido.tempo2bpm(mf.tracks[0][0].tempo) == pytest.approx(90)
        assert [m.program for m in mf.tracks[0] if m.type == "program_change"] == [5]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5000), st.integers(0, 127), st.integers(1, 2000)),
                    max_size=30))
    def test_accepted_by_mido(self, fixture):
        notes = merge_overlaps([NoteEvent(*f) for f in fixture])
        data = write_midi(notes)
        assert mido_notes(data) == sorted((n.onset, n.pitch, n.duration) for n in notes)

    def test_end_tick_extends_track(self):
        song = parse_midi(write_midi([NoteEvent(0, 60, 10)], end_tick=7680))
        assert song.end_tick == 7680


def test_merge_overlaps():
    merged = merge_overlaps([NoteEvent(0, 60, 100), NoteEvent(50, 60, 100), NoteEvent(150, 60, 10),
                             NoteEvent(0, 61, 10)])
    assert sorted(merged) == sorted([NoteEvent(0, 60, 150), NoteEvent(150, 60, 10), NoteEvent(0, 61, 10)])


# ── filter_midi ──────────────────────────────────────


class TestFilter:
    def test_accepts_common_time_from_zero(self):
        assert filter_midi(parse_midi(mido_bytes([(0, 60, 480)]))).accepted

    def test_first_onset_nonzero(self):
        d = filter_midi(parse_midi(mido_bytes([(3, 60, 480)])))
        assert d.reason is FilterReason.FIRST_BEAT_NON_ZERO and not d.accepted

    def test_signature_change(self):
        d = filter_midi(parse_midi(mido_bytes([(0, 60, 480)], time_signatures=((0, 4, 4), (1920, 3, 4)))))
        assert d.reason is FilterReason.TIME_SIGNATURE_CHANGED

    def test_three_four(self):
        d = filter_midi(parse_midi(mido_bytes([(0, 60, 480)], time_signatures=((0, 3, 4),))))
        assert d.reason is FilterReason.TIME_SIGNATURE_NOT_44

    def test_repeated_common_time_is_not_a_change(self):
        d = filter_midi(parse_midi(mido_bytes([(0, 60, 480)], time_signatures=((0, 4, 4), (1920, 4, 4)))))
        assert d.accepted

    def test_missing_signature_defaults_to_common_time(self):
        assert filter_midi(parse_midi(mido_bytes([(0, 60, 480)], time_signatures=()))).accepted

    def test_no_notes(self):
        assert filter_midi(parse_midi(mido_bytes([]))).reason is FilterReason.NO_NOTES

    def test_policy_can_relax(self):
        song = parse_midi(mido_bytes([(3, 60, 480)], time_signatures=((0, 3, 4),)))
        assert filter_midi(song, FilterPolicy(False, False)).accepted

    def test_decision_invariant(self):
        for r in FilterReason:
            from rollgan.pianoroll_io import FilterDecision
            assert FilterDecision(r).accepted == (r is FilterReason.OK)


# ── rasterization ──────────────────────────────────────


class TestRolls:
    def test_single_note_geometry(self):
        (roll,) = events_to_rolls([NoteEvent(0, 60, 4 * TPS)], end_tick=64 * TPS)
        expected = np.zeros((64, 84), dtype=np.uint8)
        expected[0:4, 36] = 1
        np.testing.assert_array_equal(roll, expected)

    def test_128_steps_give_two_rolls(self):
        assert len(events_to_rolls([NoteEvent(0, 60, 128 * TPS)])) == 2

    def test_trailing_partial_phrase_dropped(self):
        assert len(events_to_rolls([NoteEvent(0, 60, 100 * TPS)])) == 1

    def test_too_short(self):
        with pytest.raises(EmptyAfterQuantization):
            events_to_rolls([NoteEvent(0, 60, 63 * TPS)])

    def test_out_of_range_pitches_dropped(self):
        notes = [NoteEvent(0, 10, 64 * TPS), NoteEvent(0, 108, 64 * TPS), NoteEvent(0, 107, TPS)]
        (roll,) = events_to_rolls(notes)
        assert roll.sum() == 1 and roll[0, 83] == 1
        assert count_out_of_range(notes) == 2

    def test_onset_rounding_and_minimum_length(self):
        (roll,) = events_to_rolls([NoteEvent(59, 60, 2), NoteEvent(61, 62, 2)], end_tick=64 * TPS)
        assert roll[0, 36] == 1 and roll[1, 38] == 1 and roll.sum() == 2

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_reference_rasterizer(self, seed):
        rng = np.random.default_rng(seed)
        fixture = [(int(rng.integers(0, 120)) * TPS, int(rng.integers(20, 112)),
                    int(rng.integers(1, 20)) * TPS) for _ in range(5)]
        notes = [NoteEvent(*f) for f in fixture]
        rolls = events_to_rolls(notes, end_tick=128 * TPS)
        expected = rasterize(fixture, 128, TPS)
        np.testing.assert_array_equal(np.concatenate(rolls), expected)

    def test_order_invariance(self):
        rng = np.random.default_rng(3)
        notes = [NoteEvent(int(rng.integers(0, 60)) * TPS, int(rng.integers(24, 108)), TPS * 3)
                 for _ in range(40)]
        a = events_to_rolls(notes, end_tick=64 * TPS)
        b = events_to_rolls(list(reversed(notes)), end_tick=64 * TPS)
        np.testing.assert_array_equal(a, b)

    def test_grid_variants(self):
        grid = GridConfig.for_steps_per_bar(8, pitch_floor=30)
        assert grid.bars_per_phrase == 8 and grid.ticks_per_step(480) == 240
        (roll,) = events_to_rolls([NoteEvent(0, 30, 240)], grid, end_tick=64 * 240)
        assert roll[0, 0] == 1 and roll.sum() == 1
        with pytest.raises(ValueError):
            GridConfig(steps_per_bar=16, bars_per_phrase=3)
        with pytest.raises(ValueError):
            GridConfig(pitch_floor=50)

    def test_song_to_rolls_keeps_trailing_silence(self):
        song = parse_midi(write_midi([NoteEvent(0, 60, TPS)], end_tick=128 * TPS))
        assert len(song_to_rolls(song)) == 2


class TestBinarize:
    def test_zeros(self):
        assert not binarize(np.zeros((64, 84))).any()

    def test_boundary(self):
        np.testing.assert_array_equal(binarize(np.array([0.49, 0.5, 0.51]), 0.5), [0, 1, 1])

    @pytest.mark.parametrize("t", [0.0, 1.0, -0.1, 1.5])
    def test_invalid_threshold(self, t):
        with pytest.raises(InvalidThreshold):
            binarize(np.zeros(3), t)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (8, 12), elements=st.floats(0, 1)),
           st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_idempotent_and_monotone(self, roll, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        b = binarize(roll, lo)
        np.testing.assert_array_equal(binarize(b, hi), b)
        assert (binarize(roll, hi) <= b).all()
        assert b.dtype == np.uint8


class TestRollToEvents:
    def test_single_run(self):
        roll = np.zeros((64, 84), dtype=np.uint8)
        roll[0:4, 36] = 1
        assert roll_to_events(roll) == [NoteEvent(0, 60, 4 * TPS, 90)]

    def test_run_splitting(self):
        roll = np.zeros((64, 84), dtype=np.uint8)
        roll[[0, 1, 3], 36] = 1
        assert roll_to_events(roll) == [NoteEvent(0, 60, 2 * TPS), NoteEvent(3 * TPS, 60, TPS)]

    def test_non_binary(self):
        with pytest.raises(NonBinaryRoll):
            roll_to_events(np.full((64, 84), 0.5))

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.uint8, (64, 84), elements=st.integers(0, 1)))
    def test_round_trip(self, roll):
        (back,) = events_to_rolls(roll_to_events(roll), end_tick=64 * TPS)
        np.testing.assert_array_equal(back, roll)

    def test_file_round_trip_across_phrases(self):
        rng = np.random.default_rng(0)
        rolls = [random_roll(rng, 0.3) for _ in range(3)]
        rolls[1][:] = 0
        rolls[0][-1, :] = rolls[2][0, :] = 1  # runs touching phrase boundaries
        back = song_to_rolls(parse_midi(rolls_to_midi(rolls)))
        np.testing.assert_array_equal(np.stack(back), np.stack(rolls))
