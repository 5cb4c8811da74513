"""Frame-wise scoring of transcriptions on a binary time-pitch mask.

Both the detection and the reference are quantized onto the same grid;
a cell ``(k, p)`` is on when a note at pitch ``p`` covers at least half of
``[k * step, (k + 1) * step)``.  Precision, recall and F count on-cells; the
error score counts substitutions, deletions and insertions per grid frame,
in the manner of a word error rate.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryMask:
    """Boolean grid of shape ``(frames, pitches)``; ``velocity`` optional."""

    cells: np.ndarray
    grid_step_s: float
    pitch_lo: int
    velocity: Optional[np.ndarray] = None

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim != 2:
            raise EvalError("mask must be 2-D")
        object.__setattr__(self, "cells", cells)
        if self.velocity is not None:
            vel = np.asarray(self.velocity, dtype=float)
            if vel.shape != cells.shape:
                raise EvalError("velocity map must match mask shape")
            object.__setattr__(self, "velocity", vel)

    @property
    def shape(self):
        return self.cells.shape

    @property
    def pitch_hi(self) -> int:
        return self.pitch_lo + self.cells.shape[1] - 1

    def count(self) -> int:
        return int(self.cells.sum())


def _as_seconds(note, frame_period_s):
    """Accept NoteEvent-like objects (frames) or (onset_s, offset_s, pitch[, vel]) tuples."""
    if hasattr(note, "onset_frame"):
        if frame_period_s is None:
            raise EvalError("frame_period_s needed for frame-based notes")
        return (note.onset_frame * frame_period_s, note.offset_frame * frame_period_s,
                int(note.pitch), int(getattr(note, "velocity", 100)))
    on, off, pitch = note[0], note[1], note[2]
    vel = note[3] if len(note) > 3 else 100
    return float(on), float(off), int(pitch), int(vel)


def notes_to_mask(notes: Iterable, grid_step_s: float, pitch_range: tuple[int, int],
                  total_s: float, frame_period_s: float | None = None) -> BinaryMask:
    """Quantize notes onto a ``grid_step_s`` grid covering ``[0, total_s)``.

    ``notes`` are :class:`~chromabident.signal_io.NoteEvent` objects (then
    ``frame_period_s`` converts frames to seconds) or tuples
    ``(onset_s, offset_s, pitch[, velocity])``.
    """
    if not grid_step_s > 0:
        raise EvalError("grid_step_s must be positive")
    lo, hi = pitch_range
    n_frames = int(np.ceil(total_s / grid_step_s - 1e-9))
    cells = np.zeros((n_frames, hi - lo + 1), dtype=bool)
    vel = np.zeros(cells.shape)
    starts = np.arange(n_frames) * grid_step_s
    for note in notes:
        on, off, pitch, v = _as_seconds(note, frame_period_s)
        if not lo <= pitch <= hi:
            raise EvalError(f"note pitch {pitch} outside range {lo}-{hi}")
        overlap = np.minimum(starts + grid_step_s, off) - np.maximum(starts, on)
        hit = overlap >= 0.5 * grid_step_s - 1e-12
        cells[hit, pitch - lo] = True
        vel[hit, pitch - lo] = np.maximum(vel[hit, pitch - lo], v)
    return BinaryMask(cells, grid_step_s, lo, vel)


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f_measure: float
    error_score: float
    substitutions: int
    deletions: int
    insertions: int
    velocity_weighted: bool = False

    def to_text(self) -> str:
        """Flat ``key=value`` block."""
        lines = []
        for k, v in asdict(self).items():
            lines.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list:
        return [getattr(self, name) for name in self.csv_header()]


def reports_to_csv(reports: Sequence[EvalReport], names: Sequence[str] | None = None) -> str:
    out = io.StringIO()
    w = csv.writer(out)
    w.writerow((["name"] if names else []) + EvalReport.csv_header())
    for i, r in enumerate(reports):
        w.writerow(([names[i]] if names else []) + r.csv_row())
    return out.getvalue()


def _check(det: BinaryMask, ref: BinaryMask):
    if det.shape != ref.shape:
        raise EvalError(f"mask shapes differ: {det.shape} vs {ref.shape}")


def f_measure(det: BinaryMask, ref: BinaryMask, weights=None) -> tuple[float, float, float]:
    """Precision, recall and their harmonic mean.

    With ``weights`` (a velocity map shaped like the masks, or ``True`` to use
    ``det.velocity``) every detected cell counts with its velocity in the
    precision; recall stays unweighted.

    Examples
    --------
    Half of a four-frame note detected, nothing spurious:

    >>> ref = BinaryMask(np.array([[1], [1], [1], [1]], bool), 0.01, 60)
    >>> det = BinaryMask(np.array([[1], [1], [0], [0]], bool), 0.01, 60)
    >>> p, r, f = f_measure(det, ref)
    >>> p, r, round(f, 12) == round(2 / 3, 12)
    (1.0, 0.5, True)
    """
    _check(det, ref)
    d, r = det.cells, ref.cells
    hits = d & r
    if weights is not None:
        w = det.velocity if weights is True else np.asarray(weights, dtype=float)
        if w is None or w.shape != d.shape:
            raise EvalError("weights must match mask shape")
        num, den = float(w[hits].sum()), float(w[d].sum())
    else:
        num, den = float(hits.sum()), float(d.sum())
    precision = num / den if den > 0 else 0.0
    n_ref = int(r.sum())
    recall = float(hits.sum()) / n_ref if n_ref > 0 else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f


def frame_errors(det: BinaryMask, ref: BinaryMask):
    """Per grid frame substitution, deletion and insertion counts."""
    _check(det, ref)
    miss = (ref.cells & ~det.cells).sum(axis=1)
    extra = (det.cells & ~ref.cells).sum(axis=1)
    s = np.minimum(miss, extra)
    return s, miss - s, extra - s


def error_score(det: BinaryMask, ref: BinaryMask) -> tuple[float, int, int, int]:
    """``(S + D + I) / |ref|`` with per-frame greedy substitution matching.

    Examples
    --------
    One missed cell out of ten, then nothing detected at all:

    >>> ref = BinaryMask(np.ones((10, 1), bool), 0.01, 60)
    >>> det = np.ones((10, 1), bool)
    >>> det[0] = False
    >>> error_score(BinaryMask(det, 0.01, 60), ref)
    (0.1, 0, 1, 0)
    >>> error_score(BinaryMask(np.zeros((10, 1), bool), 0.01, 60), ref)
    (1.0, 0, 10, 0)
    """
    n_ref = ref.count()
    _check(det, ref)
    if n_ref == 0:
        raise EvalError("reference mask is empty")
    s, d, i = (int(x.sum()) for x in frame_errors(det, ref))
    return (s + d + i) / n_ref, s, d, i


def evaluate(det: BinaryMask, ref: BinaryMask, weighted: bool = False) -> EvalReport:
    p, r, f = f_measure(det, ref, True if weighted else None)
    e, s, d, i = error_score(det, ref)
    return EvalReport(p, r, f, e, s, d, i, weighted)


@dataclass(frozen=True)
class TransitionCounts:
    onset_s: int
    onset_d: int
    onset_i: int
    decay_s: int
    decay_d: int
    decay_i: int


def _transition_frames(ref: BinaryMask, window: int, which: str) -> np.ndarray:
    cells = ref.cells
    n = cells.shape[0]
    padded = np.vstack([np.zeros((1, cells.shape[1]), bool), cells, np.zeros((1, cells.shape[1]), bool)])
    edge = padded[1:] & ~padded[:-1] if which == "onset" else ~padded[1:] & padded[:-1]
    # edge row j marks a transition at frame boundary j
    rows = np.flatnonzero(edge.any(axis=1))
    sel = np.zeros(n, dtype=bool)
    for j in rows:
        sel[max(j - window, 0):min(j + window, n)] = True
    return sel


def transition_decomposition(det: BinaryMask, ref: BinaryMask, window_frames: int) -> TransitionCounts:
    """S/D/I counted within ``window_frames`` grid frames of reference onsets and decays.

    A transition at frame boundary ``j`` covers frames ``j - window`` up to
    ``j + window - 1``.
    """
    if window_frames < 1:
        raise EvalError("window_frames must be >= 1")
    s, d, i = frame_errors(det, ref)
    out = []
    for which in ("onset", "decay"):
        sel = _transition_frames(ref, window_frames, which)
        out += [int(s[sel].sum()), int(d[sel].sum()), int(i[sel].sum())]
    return TransitionCounts(*out)


_GRID_SECONDS = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:e-?\d+)?)\s*(s|ms)\s*$", re.I)
_GRID_MUSICAL = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*bpm\s*:\s*(\d+)\s*/\s*(\d+)\s*$", re.I)


def parse_grid(text: str) -> float:
    """Grid step in seconds from ``"0.05s"``, ``"23.2ms"`` or ``"120bpm:1/32"``.

    Note fractions are of a whole note, i.e. four beats.
    """
    m = _GRID_SECONDS.match(text)
    if m:
        value = float(m.group(1)) * (1e-3 if m.group(2).lower() == "ms" else 1.0)
    else:
        m = _GRID_MUSICAL.match(text)
        if not m:
            raise EvalError(f"cannot parse grid '{text}'")
        bpm, num, den = float(m.group(1)), int(m.group(2)), int(m.group(3))
        if bpm <= 0 or den == 0:
            raise EvalError(f"cannot parse grid '{text}'")
        value = 4 * 60.0 / bpm * num / den
    if value <= 0:
        raise EvalError("grid step must be positive")
    return value
