"""Audio ingestion, MIDI exchange and synthetic tone fixtures.

WAV files are read and written through :mod:`scipy.io.wavfile`, MIDI through
:mod:`mido`.  All note times inside the package live on a frame grid; MIDI
files carry absolute seconds.
"""
from __future__ import annotations

import logging
import os
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import mido
import numpy as np
from scipy.io import wavfile

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 44100
DEFAULT_HOP = 1024
DEFAULT_TARGET_DBFS = -20.0

MIDI_TICKS_PER_BEAT = 480
MIDI_TEMPO_US = 500000  # 120 BPM


class AudioError(ValueError):
    """Raised for unreadable, unsupported or empty audio."""


class MidiError(ValueError):
    """Raised for malformed MIDI input or invalid note sequences."""


class SynthesisError(ValueError):
    """Raised when a tone spec cannot be rendered without aliasing."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono signal with its sampling rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate_hz) <= 0:
            raise AudioError("sample rate must be positive")
        if x.size < 1:
            raise AudioError("zero-length audio")
        if not np.all(np.isfinite(x)):
            raise AudioError("non-finite samples")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate_hz)


@dataclass(frozen=True, order=True)
class NoteEvent:
    """A note on the frame grid: ``[onset_frame, offset_frame)``."""

    onset_frame: int
    pitch: int
    offset_frame: int
    velocity: int = 100

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside MIDI range")
        if self.offset_frame <= self.onset_frame:
            raise ValueError("offset_frame must exceed onset_frame")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")

    @property
    def duration(self) -> int:
        return self.offset_frame - self.onset_frame


@dataclass(frozen=True)
class ToneSpec:
    """One synthetic harmonic tone.

    Partial ``k`` (1-based) sits at ``k * f0`` with amplitude
    ``amplitude * partial_decay_ratio ** (k - 1)``; the whole tone is shaped
    by ``exp(-envelope_decay * t)`` and a short linear release.
    """

    pitch: float
    onset_s: float
    duration_s: float
    partial_count: int = 10
    partial_decay_ratio: float = 0.6
    envelope_decay: float = 0.0
    amplitude: float = 0.5
    vibrato_extent_cents: float = 0.0
    vibrato_rate_hz: float = 0.0
    release_s: float = 0.005

    def __post_init__(self):
        if self.partial_count < 1:
            raise ValueError("partial_count must be >= 1")
        if not 0.0 < self.partial_decay_ratio <= 1.0:
            raise ValueError("partial_decay_ratio must lie in (0, 1]")
        if self.duration_s <= 0 or self.onset_s < 0:
            raise ValueError("tone needs onset >= 0 and positive duration")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.envelope_decay < 0:
            raise ValueError("envelope_decay must be >= 0")

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s

    def partial_amplitudes(self) -> np.ndarray:
        k = np.arange(self.partial_count)
        return self.amplitude * self.partial_decay_ratio ** k

    def velocity(self) -> int:
        return int(np.clip(round(127 * min(self.amplitude, 1.0)), 1, 127))


# --------------------------------------------------------------------------
# WAV

def load_audio(path) -> AudioBuffer:
    """Read a PCM 16/24/32-bit or float WAV file as a mono buffer.

    Stereo input is downmixed by the channel mean and integer PCM is scaled
    so that full scale maps to +-1.0.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError/EOFError/struct.error
        raise AudioError(f"unreadable file: {path} ({exc})") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM is delivered left-justified in int32
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise AudioError(f"unsupported encoding: {data.dtype}")

    if x.ndim == 2:
        if x.shape[1] > 2:
            raise AudioError(f"unsupported encoding: {x.shape[1]} channels")
        x = x.mean(axis=1)
    if x.size == 0:
        raise AudioError("zero-length audio")
    return AudioBuffer(x, rate)


def save_wav(buf: AudioBuffer, path, encoding: str = "pcm16") -> None:
    """Write ``buf`` as a mono WAV file (``pcm16`` or ``float32``)."""
    if encoding == "pcm16":
        data = np.clip(np.round(buf.samples * 32768.0), -32768, 32767)
        data = data.astype(np.int16)
    elif encoding == "float32":
        data = buf.samples.astype(np.float32)
    else:
        raise AudioError(f"unsupported encoding: {encoding}")
    wavfile.write(os.fspath(path), buf.sample_rate_hz, data)


def normalize_rms(buf: AudioBuffer, target_dbfs: float = DEFAULT_TARGET_DBFS) -> AudioBuffer:
    """Scale ``buf`` so that its RMS equals ``10 ** (target_dbfs / 20)``."""
    rms = buf.rms()
    if rms == 0.0:
        raise AudioError("silent input: RMS is zero")
    return buf.scaled(10.0 ** (target_dbfs / 20.0) / rms)


# --------------------------------------------------------------------------
# MIDI

def _check_overlaps(notes: Sequence[NoteEvent]) -> None:
    by_pitch = defaultdict(list)
    for n in notes:
        by_pitch[n.pitch].append(n)
    for pitch, group in by_pitch.items():
        group.sort()
        for prev, nxt in zip(group, group[1:]):
            if nxt.onset_frame < prev.offset_frame:
                raise MidiError(f"overlapping notes at pitch {pitch}")


def export_midi(notes: Iterable[NoteEvent], frame_period_s: float, path) -> None:
    """Write notes as a format-0 standard MIDI file.

    Frame indices are converted to seconds with ``frame_period_s`` and then
    to ticks at 480 ticks per quarter and a fixed 120 BPM tempo.
    """
    notes = list(notes)
    _check_overlaps(notes)
    sec_per_tick = MIDI_TEMPO_US * 1e-6 / MIDI_TICKS_PER_BEAT

    events = []
    for n in notes:
        on = round(n.onset_frame * frame_period_s / sec_per_tick)
        off = round(n.offset_frame * frame_period_s / sec_per_tick)
        off = max(off, on + 1)
        # note-offs sort before note-ons at the same tick
        events.append((off, 0, n.pitch, 0))
        events.append((on, 1, n.pitch, n.velocity))
    events.sort()

    track = mido.MidiTrack()
    track.append(mido.MetaMessage("set_tempo", tempo=MIDI_TEMPO_US, time=0))
    now = 0
    for tick, kind, pitch, vel in events:
        msg = "note_on" if kind else "note_off"
        track.append(mido.Message(msg, note=pitch, velocity=vel, time=tick - now))
        now = tick
    track.append(mido.MetaMessage("end_of_track", time=0))

    mid = mido.MidiFile(type=0, ticks_per_beat=MIDI_TICKS_PER_BEAT)
    mid.tracks.append(track)
    mid.save(os.fspath(path))


def read_midi_notes(path) -> list[tuple[float, float, int, int]]:
    """Return ``(onset_s, offset_s, pitch, velocity)`` tuples from a MIDI file.

    Note-on/off pairs are matched first-in first-out per pitch (and channel);
    tempo changes are honoured.
    """
    try:
        mid = mido.MidiFile(os.fspath(path))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise MidiError(f"malformed MIDI file: {path} ({exc})") from exc
    if mid.type not in (0, 1):
        raise MidiError(f"unsupported MIDI format {mid.type}")

    pending = defaultdict(deque)
    notes = []
    now = 0.0
    for msg in mid:  # merged tracks, delta times in seconds
        now += msg.time
        if msg.type == "note_on" and msg.velocity > 0:
            pending[(msg.channel, msg.note)].append((now, msg.velocity))
        elif msg.type in ("note_off", "note_on"):
            queue = pending[(msg.channel, msg.note)]
            if not queue:
                logger.warning("stray note-off for pitch %d at %.3f s", msg.note, now)
                continue
            start, vel = queue.popleft()
            notes.append((start, now, msg.note, vel))
    for (_, pitch), queue in pending.items():
        if queue:
            raise MidiError(f"unmatched note-on for pitch {pitch}")
    notes.sort()
    return notes


def import_midi(path, frame_period_s: float) -> list[NoteEvent]:
    """Read a MIDI file and quantize its notes to a frame grid."""
    out = []
    for on, off, pitch, vel in read_midi_notes(path):
        a = int(round(on / frame_period_s))
        b = max(int(round(off / frame_period_s)), a + 1)
        out.append(NoteEvent(a, pitch, b, vel))
    return sorted(out)


# --------------------------------------------------------------------------
# synthesis

def midi_to_hz(pitch, tuning_hz: float = 440.0):
    return tuning_hz * 2.0 ** ((np.asarray(pitch, dtype=float) - 69.0) / 12.0)


def render_tone(spec: ToneSpec, sample_rate_hz: int, length: int) -> np.ndarray:
    """Render one tone into a zero array of ``length`` samples."""
    fs = sample_rate_hz
    f0 = float(midi_to_hz(spec.pitch))
    peak = spec.partial_count * f0 * 2.0 ** (abs(spec.vibrato_extent_cents) / 1200.0)
    if peak >= fs / 2:
        raise SynthesisError(
            f"aliasing: partial {spec.partial_count} of pitch {spec.pitch} "
            f"reaches {peak:.1f} Hz >= Nyquist {fs / 2:.1f} Hz")

    start = int(round(spec.onset_s * fs))
    stop = min(int(round(spec.end_s * fs)), length)
    out = np.zeros(length)
    if stop <= start:
        return out
    t = np.arange(stop - start) / fs

    if spec.vibrato_extent_cents and spec.vibrato_rate_hz:
        cents = spec.vibrato_extent_cents * np.sin(2 * np.pi * spec.vibrato_rate_hz * t)
        inst = f0 * 2.0 ** (cents / 1200.0)
        phase = 2 * np.pi * np.concatenate(([0.0], np.cumsum(inst[:-1]) / fs))
    else:
        phase = 2 * np.pi * f0 * t

    tone = np.zeros_like(t)
    for k, amp in enumerate(spec.partial_amplitudes(), start=1):
        tone += amp * np.sin(k * phase)

    env = np.exp(-spec.envelope_decay * t)
    n_rel = min(int(round(spec.release_s * fs)), t.size)
    if n_rel > 0:
        env[-n_rel:] *= np.linspace(1.0, 0.0, n_rel + 1)[1:]
    out[start:stop] = tone * env
    return out


def synthesize(specs: Sequence[ToneSpec], sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
               total_s: float | None = None, frame_period_s: float | None = None):
    """Render a list of tones and the matching reference notes.

    Returns
    -------
    buf : AudioBuffer
    notes : list of NoteEvent
        Reference notes on a grid of ``frame_period_s`` seconds (default one
        1024-sample hop).
    """
    specs = list(specs)
    if frame_period_s is None:
        frame_period_s = DEFAULT_HOP / sample_rate_hz
    if total_s is None:
        total_s = max((s.end_s for s in specs), default=0.0) + 0.25
    length = max(int(round(total_s * sample_rate_hz)), 1)

    x = np.zeros(length)
    notes = []
    for spec in specs:
        x += render_tone(spec, sample_rate_hz, length)
        pitch = int(round(spec.pitch))
        a = int(round(spec.onset_s / frame_period_s))
        b = max(int(round(spec.end_s / frame_period_s)), a + 1)
        notes.append(NoteEvent(a, pitch, b, spec.velocity()))
    return AudioBuffer(x, sample_rate_hz), sorted(notes)


_SPEC_KEYS = {
    "pitch": ("pitch", float),
    "onset": ("onset_s", float),
    "onset_s": ("onset_s", float),
    "duration": ("duration_s", float),
    "duration_s": ("duration_s", float),
    "partials": ("partial_count", int),
    "partial_count": ("partial_count", int),
    "decay_ratio": ("partial_decay_ratio", float),
    "partial_decay_ratio": ("partial_decay_ratio", float),
    "envelope": ("envelope_decay", float),
    "envelope_decay": ("envelope_decay", float),
    "amplitude": ("amplitude", float),
    "vibrato_cents": ("vibrato_extent_cents", float),
    "vibrato_extent_cents": ("vibrato_extent_cents", float),
    "vibrato_rate": ("vibrato_rate_hz", float),
    "vibrato_rate_hz": ("vibrato_rate_hz", float),
    "release": ("release_s", float),
    "release_s": ("release_s", float),
}


def parse_tone_specs(text: str) -> list[ToneSpec]:
    """Parse ``key = value`` stanzas separated by blank lines.

    ``#`` starts a comment.  Every stanza needs ``pitch``, ``onset`` and
    ``duration``; the remaining fields fall back to :class:`ToneSpec`
    defaults.
    """
    specs = []
    stanza: dict = {}
    lineno_start = 0

    def flush():
        if not stanza:
            return
        missing = {"pitch", "onset_s", "duration_s"} - stanza.keys()
        if missing:
            raise ValueError(f"stanza at line {lineno_start}: missing {sorted(missing)}")
        specs.append(ToneSpec(**stanza))
        stanza.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            flush()
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _SPEC_KEYS:
            raise ValueError(f"line {lineno}: unknown key '{key}'")
        if not stanza:
            lineno_start = lineno
        name, conv = _SPEC_KEYS[key]
        stanza[name] = conv(value)
    flush()
    return specs


def read_tone_specs(path) -> list[ToneSpec]:
    return parse_tone_specs(Path(path).read_text())


def format_tone_specs(specs: Iterable[ToneSpec]) -> str:
    blocks = []
    for s in specs:
        blocks.append("\n".join([
            f"pitch = {s.pitch:g}",
            f"onset = {s.onset_s:g}",
            f"duration = {s.duration_s:g}",
            f"partials = {s.partial_count}",
            f"decay_ratio = {s.partial_decay_ratio:g}",
            f"envelope = {s.envelope_decay:g}",
            f"amplitude = {s.amplitude:g}",
            f"vibrato_cents = {s.vibrato_extent_cents:g}",
            f"vibrato_rate = {s.vibrato_rate_hz:g}",
        ]))
    return "\n\n".join(blocks) + "\n"
