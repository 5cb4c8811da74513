"""Synthetic ten-lick guitar-like corpus with known ground truth.

Each lick is a list of :class:`~chromabident.signal_io.ToneSpec`.  The set
is monophonic apart from one lick of two-note chords, and includes one
tremolo lick (the same pitch restruck every 8 hops) and one vibrato lick
(+-50 cents at 5 Hz).  Timings are chosen so that notes are a few hops long
at 44.1 kHz, roughly eighth to quarter notes at 100-120 BPM.
"""
from __future__ import annotations

from dataclasses import dataclass

from .signal_io import DEFAULT_HOP, DEFAULT_SAMPLE_RATE, ToneSpec, synthesize

HOP_S = DEFAULT_HOP / DEFAULT_SAMPLE_RATE


@dataclass(frozen=True)
class Lick:
    name: str
    tones: tuple
    kind: str = "mono"   # mono | tremolo | vibrato | chord

    def render(self, sample_rate_hz: int = DEFAULT_SAMPLE_RATE):
        return synthesize(self.tones, sample_rate_hz)


def _line(pitches, durations, start=0.2, gap=0.0, **kw):
    if not isinstance(durations, (list, tuple)):
        durations = [durations] * len(pitches)
    t = start
    out = []
    for p, d in zip(pitches, durations):
        out.append(ToneSpec(pitch=p, onset_s=round(t, 4), duration_s=d, **kw))
        t += d + gap
    return tuple(out)


def _with(tones, **changes):
    from dataclasses import replace
    return tuple(replace(t, **changes) for t in tones)


def tremolo_lick(pitch=64, restrikes=8, hops_per_strike=8, start=0.2, **kw) -> Lick:
    """Same pitch restruck every ``hops_per_strike`` hops.

    The default envelope leaves the string at about half amplitude when it
    is struck again, so the note never dies out between strikes.
    """
    d = hops_per_strike * HOP_S
    kw.setdefault("envelope_decay", 4.0)
    return Lick("tremolo", _line([pitch] * restrikes, d, start=start, **kw), "tremolo")


def vibrato_lick(pitches=(62, 67, 69), duration=0.8, start=0.2) -> Lick:
    return Lick("vibrato", _line(list(pitches), duration, start=start,
                                 vibrato_extent_cents=50.0, vibrato_rate_hz=5.0,
                                 envelope_decay=1.5), "vibrato")


def chord_lick(start=0.2) -> Lick:
    # double stops a fourth apart
    dyads = [(57, 62), (60, 65), (62, 67), (64, 69), (57, 62)]
    tones = []
    t = start
    for lo, hi in dyads:
        for p in (lo, hi):
            tones.append(ToneSpec(pitch=p, onset_s=round(t, 4), duration_s=0.4,
                                  envelope_decay=2.0, amplitude=0.4))
        t += 0.4
    return Lick("chord", tuple(tones), "chord")


def corpus() -> list[Lick]:
    """The ten fixtures used for calibration and the end-to-end check."""
    return [
        Lick("pentatonic-up", _line([57, 60, 62, 64, 67, 69, 72, 74], 0.3, envelope_decay=3.0)),
        Lick("blues-down", _line([76, 74, 72, 70, 69, 67, 64, 62],
                                 [0.25, 0.25, 0.5, 0.25, 0.25, 0.4, 0.3, 0.6],
                                 partial_decay_ratio=0.7, envelope_decay=2.5)),
        Lick("low-riff", _line([40, 43, 45, 47, 45, 43, 40], 0.35,
                               partial_decay_ratio=0.7, envelope_decay=2.0)),
        Lick("high-run", _line([76, 79, 81, 84, 86, 88, 84, 81], 0.25,
                               partial_decay_ratio=0.5, envelope_decay=3.0)),
        Lick("staccato", _line([64, 67, 64, 62, 60, 62], 0.22, gap=0.12,
                               envelope_decay=4.0)),
        Lick("intervals", _line([48, 55, 64, 52, 59, 67, 71], 0.35,
                                partial_decay_ratio=0.65, envelope_decay=2.0)),
        Lick("dynamics", tuple(
            ToneSpec(pitch=p, onset_s=round(0.2 + 0.3 * i, 4), duration_s=0.3,
                     amplitude=a, envelope_decay=4.0)
            for i, (p, a) in enumerate(zip([59, 62, 64, 66, 67, 66, 64],
                                           [0.9, 0.3, 0.6, 0.2, 1.0, 0.4, 0.7]))),
        ),
        tremolo_lick(),
        vibrato_lick(),
        chord_lick(),
    ]
