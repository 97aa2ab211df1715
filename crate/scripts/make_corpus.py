#!/usr/bin/env python3
"""Writes the synthetic piano corpus under data/corpus/.

Each file is a format-1 SMF with a conductor track (tempo map), a melody
track and an accompaniment track on separate channels. Pieces follow simple
diatonic progressions so that models have learnable structure. Output is
deterministic for a given seed.

    python3 scripts/make_corpus.py [--out data/corpus] [--files 24] [--seed 7]
"""

import argparse
import os
import random

import mido

MAJOR = [0, 2, 4, 5, 7, 9, 11]
MINOR = [0, 2, 3, 5, 7, 8, 10]
PROGRESSIONS = [
    [0, 3, 4, 0],
    [0, 5, 3, 4],
    [0, 4, 5, 3],
    [5, 3, 0, 4],
    [0, 3, 0, 4],
]
RHYTHMS = [
    [1.0, 1.0, 1.0, 1.0],
    [0.5, 0.5, 1.0, 1.0, 1.0],
    [1.5, 0.5, 1.0, 1.0],
    [0.5, 0.5, 0.5, 0.5, 2.0],
    [1.0, 0.5, 0.5, 2.0],
]


def scale_pitch(root, scale, degree):
    octave, step = divmod(degree, len(scale))
    return root + 12 * octave + scale[step]


def to_track(events, name):
    """events: (tick, order, msg) with order 0 for offs so they sort first."""
    track = mido.MidiTrack()
    track.append(mido.MetaMessage("track_name", name=name, time=0))
    now = 0
    for tick, _, msg in sorted(events, key=lambda e: (e[0], e[1])):
        track.append(msg.copy(time=tick - now))
        now = tick
    track.append(mido.MetaMessage("end_of_track", time=0))
    return track


def piece(rng, index):
    tpq = rng.choice([384, 480, 960])
    scale = rng.choice([MAJOR, MINOR])
    root = 60 + rng.randrange(-5, 7)
    progression = rng.choice(PROGRESSIONS)
    bars = rng.randrange(36, 52)
    bpm = rng.randrange(84, 132)
    zero_velocity_offs = index % 3 == 0

    conductor = [(0, 1, mido.MetaMessage("set_tempo", tempo=mido.bpm2tempo(bpm), time=0))]
    if rng.random() < 0.5:
        change_bar = bars // 2
        conductor.append(
            (change_bar * 4 * tpq, 1, mido.MetaMessage("set_tempo", tempo=mido.bpm2tempo(bpm + rng.randrange(-20, 21)), time=0))
        )

    def note(events, channel, pitch, start, end, velocity):
        events.append((start, 1, mido.Message("note_on", channel=channel, note=pitch, velocity=velocity, time=0)))
        if zero_velocity_offs:
            off = mido.Message("note_on", channel=channel, note=pitch, velocity=0, time=0)
        else:
            off = mido.Message("note_off", channel=channel, note=pitch, velocity=64, time=0)
        events.append((end, 0, off))

    melody, accomp = [], []
    degree = 7
    motif = [rng.choice([-1, 1, 2, -2, 0]) for _ in range(5)]
    for bar in range(bars):
        chord = progression[bar % len(progression)]
        bar_start = bar * 4 * tpq
        # accompaniment: root-position triad, either block or broken
        triad = [scale_pitch(root - 24, scale, chord + k) for k in (0, 2, 4)]
        vel = rng.randrange(45, 70)
        if bar % 2 == 0:
            for p in triad:
                note(accomp, 1, p, bar_start, bar_start + 4 * tpq - tpq // 8, vel)
        else:
            for beat, p in enumerate(triad + [triad[1]]):
                s = bar_start + beat * tpq
                note(accomp, 1, p, s, s + tpq - tpq // 16, vel)
        # melody: motif-driven walk around chord tones
        rhythm = RHYTHMS[(bar + index) % len(RHYTHMS)]
        t = bar_start
        for k, beats in enumerate(rhythm):
            if k == 0:
                degree = chord + 7 + rng.choice([0, 2, 4])
            else:
                degree += motif[k % len(motif)] if rng.random() < 0.8 else rng.choice([-1, 1])
            degree = max(3, min(degree, 16))
            pitch = scale_pitch(root, scale, degree)
            length = int(beats * tpq)
            gap = rng.choice([tpq // 16, tpq // 8, tpq // 4])
            note(melody, 0, pitch, t, t + length - gap, rng.randrange(60, 110))
            t += length

    mid = mido.MidiFile(type=1, ticks_per_beat=tpq)
    mid.tracks.append(to_track(conductor, "conductor"))
    mid.tracks.append(to_track(melody, "melody"))
    mid.tracks.append(to_track(accomp, "accompaniment"))
    return mid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "corpus"))
    ap.add_argument("--files", type=int, default=24)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    rng = random.Random(args.seed)
    total = 0.0
    for i in range(args.files):
        mid = piece(rng, i)
        path = os.path.join(args.out, f"piece_{i:03d}.mid")
        mid.save(path)
        total += mid.length
    print(f"wrote {args.files} files, {total / 60:.1f} minutes")


if __name__ == "__main__":
    main()
