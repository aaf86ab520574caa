"""Shared fixtures-by-hand: mido-authored MIDI files and a reference rasterizer."""

import io

import mido
import numpy as np
import torch


def mido_bytes(notes, ticks_per_beat=480, time_signatures=((0, 4, 4),), extra_end=0, fmt=0):
    """Author a file with mido. ``notes`` are (onset, pitch, duration) tuples in ticks."""
    msgs = []
    for tick, num, den in time_signatures:
        msgs.append((tick, 0, mido.MetaMessage("time_signature", numerator=num, denominator=den)))
    for onset, pitch, dur in notes:
        msgs.append((onset, 2, mido.Message("note_on", note=pitch, velocity=80)))
        msgs.append((onset + dur, 1, mido.Message("note_off", note=pitch, velocity=0)))
    msgs.sort(key=lambda m: (m[0], m[1]))
    track = mido.MidiTrack()
    now = 0
    for tick, _, msg in msgs:
        track.append(msg.copy(time=tick - now))
        now = tick
    track.append(mido.MetaMessage("end_of_track", time=extra_end))
    mf = mido.MidiFile(type=fmt, ticks_per_beat=ticks_per_beat)
    mf.tracks.append(track)
    buf = io.BytesIO()
    mf.save(file=buf)
    return buf.getvalue()


def mido_notes(data):
    """(onset, pitch, duration) triples as read by mido, paired first-in first-out."""
    mf = mido.MidiFile(file=io.BytesIO(data))
    out = []
    for track in mf.tracks:
        now, open_ = 0, {}
        for msg in track:
            now += msg.time
            if msg.type == "note_on" and msg.velocity > 0:
                open_.setdefault(msg.note, []).append(now)
            elif msg.type in ("note_off", "note_on"):
                start = open_[msg.note].pop(0)
                out.append((start, msg.note, now - start))
    return sorted(out)


def rasterize(notes, n_steps, ticks_per_step, pitch_floor=24):
    """Step-by-step reference: cell (t, p) is on iff some note covers the middle of step t.

    Only valid for on-grid notes, where "covers the step midpoint" is unambiguous.
    """
    roll = np.zeros((n_steps, 84), dtype=np.uint8)
    for t in range(n_steps):
        mid = (t + 0.5) * ticks_per_step
        for onset, pitch, dur in notes:
            row = pitch - pitch_floor
            if 0 <= row < 84 and onset <= mid < onset + dur:
                roll[t, row] = 1
    return roll


def random_roll(rng, density=0.1):
    return (rng.random((64, 84)) < density).astype(np.uint8)


def grad_check(net, inputs, n_params=10, seed=0, eps=1e-6, max_draws=100):
    """Worst relative error between autograd and central differences of the mean output.

    Returns ``(worst, skipped)``. A sampled weight whose differences at ``eps``
    and ``eps / 10`` disagree sits within ``eps`` of a ReLU kink; it is skipped
    and another one drawn. Conv biases feeding an instance norm have an exactly
    zero gradient, so the 1e-6 floor on the denominator keeps their
    rounding-level differences from counting.
    """
    net = net.double()
    x = torch.as_tensor(inputs, dtype=torch.float64)
    net.zero_grad()
    net(x).mean().backward()
    g = np.random.default_rng(seed)
    params = [p for p in net.parameters()]

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-6)

    def central(p, idx, h):
        with torch.no_grad():
            orig = float(p[idx])
            p[idx] = orig + h
            up = float(net(x).mean())
            p[idx] = orig - h
            down = float(net(x).mean())
            p[idx] = orig
        return (up - down) / (2 * h)

    worst, checked, skipped = 0.0, 0, 0
    while checked < n_params:
        if checked + skipped >= max_draws:
            raise AssertionError(f"only {checked} smooth samples in {max_draws} draws")
        p = params[g.integers(len(params))]
        idx = tuple(int(g.integers(s)) for s in p.shape)
        fd = central(p, idx, eps)
        if rel(fd, central(p, idx, eps / 10)) > 1e-3:
            skipped += 1
            continue
        worst = max(worst, rel(fd, float(p.grad[idx])))
        checked += 1
    return worst, skipped
