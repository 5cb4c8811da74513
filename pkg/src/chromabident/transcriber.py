"""Decision-tree transcriber: pitchgram pair -> note events.

Detection runs frame by frame and only looks at frames ``<= m``.  Onsets are
found on the power-invariant pitchgram ``Yi`` so that segmentation does not
depend on the input level; the power-weighted pitchgram ``Yw`` provides
velocities, the marginal transient score and a second opinion on decays
when ``Yi`` sits between the decay and onset thresholds.

Frame index ``m`` of a pitchgram refers to the analysis frame starting at
``m * hop``.  Emitted notes are stamped with the hop that holds the frame's
last sample, i.e. shifted by ``(frame_length - 1) // hop``, because a frame
only becomes available once that sample has arrived.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter

from .config import TranscriberConfig
from .pitchgram import Pitchgram
from .signal_io import NoteEvent


# --------------------------------------------------------------------------
# smoothing and derivatives

def causal_smooth(Y, length: int, kind: str = "moving-average") -> np.ndarray:
    """Causal smoother along axis 0; frames before 0 count as zero."""
    Y = np.asarray(Y, dtype=float)
    pad = np.zeros((length - 1,) + Y.shape[1:])
    Z = np.concatenate([pad, Y], axis=0)
    if kind == "median":
        # origin shifts the window so that it ends at the current frame
        out = median_filter(Z, size=(length,) + (1,) * (Y.ndim - 1),
                            origin=((length - 1) // 2,) + (0,) * (Y.ndim - 1), mode="nearest")
        return out[length - 1:]
    c = np.cumsum(Z, axis=0)
    c = np.concatenate([np.zeros((1,) + Y.shape[1:]), c], axis=0)
    return (c[length:] - c[:-length]) / length


def difference(Y) -> np.ndarray:
    """First difference with ``Y(-1) = 0``."""
    Y = np.asarray(Y, dtype=float)
    return np.diff(Y, axis=0, prepend=np.zeros((1,) + Y.shape[1:]))


def normalized_derivative_matrix(Y, cfg: TranscriberConfig) -> np.ndarray:
    """``(Y(m) - Y(m-1)) / Ybar(m)`` for every cell; 0 where ``Ybar <= 0``."""
    Y = np.asarray(Y, dtype=float)
    dY = difference(Y)
    Ybar = causal_smooth(Y, cfg.smoother_length, cfg.smoother)
    out = np.zeros_like(Y)
    np.divide(dY, Ybar, out=out, where=Ybar > 0)
    return out


def normalized_derivative(Y, p: int, m: int, cfg: TranscriberConfig) -> float:
    """Normalized derivative of column ``p`` at frame ``m`` using frames ``<= m``."""
    if m < 1:
        raise ValueError("need m >= 1")
    col = np.asarray(Y, dtype=float)[:m + 1, p]
    dY = col[m] - col[m - 1]
    L = cfg.smoother_length
    window = np.concatenate([np.zeros(max(L - (m + 1), 0)), col[max(m + 1 - L, 0):]])
    Ybar = float(np.median(window)) if cfg.smoother == "median" else float(window.mean())
    return dY / Ybar if Ybar > 0 else 0.0


# --------------------------------------------------------------------------
# decision rules

@dataclass
class TrackState:
    """Per-pitch activity: ``onset[p] >= 0`` marks an active note."""

    n_pitches: int
    onset: np.ndarray = field(init=False)
    velocity: np.ndarray = field(init=False)
    energy: np.ndarray = field(init=False)

    def __post_init__(self):
        self.onset = np.full(self.n_pitches, -1, dtype=int)
        self.velocity = np.zeros(self.n_pitches)
        self.energy = np.zeros(self.n_pitches)

    def active(self, p: int) -> bool:
        return 0 <= p < self.n_pitches and self.onset[p] >= 0

    def start(self, p: int, m: int):
        self.onset[p] = m
        self.energy[p] = 0.0

    def stop(self, p: int):
        self.onset[p] = -1


def _neighbors(p: int, n: int):
    return [q for q in (p - 1, p + 1) if 0 <= q < n]


def _octave_below(p: int, pitches) -> int | None:
    hits = np.flatnonzero(np.isclose(pitches, pitches[p] - 12))
    return int(hits[0]) if hits.size else None


def onset_decision(Y, Ydot, state: TrackState | None, m: int, p: int,
                   cfg: TranscriberConfig, pitches=None) -> bool:
    """High score, steep and rising slope, local maximum in score and slope
    across neighbouring pitches, and no active note an octave below.
    """
    y, dy = Y[m, p], Y[m, p] - (Y[m - 1, p] if m > 0 else 0.0)
    if not (y > cfg.eps1 and Ydot[m, p] > cfg.eps2):
        return False
    if cfg.rising_slope and m > 0:
        prev = Y[m - 1, p] - (Y[m - 2, p] if m > 1 else 0.0)
        if not dy > prev:
            return False
    for q in _neighbors(p, Y.shape[1]):
        dq = Y[m, q] - (Y[m - 1, q] if m > 0 else 0.0)
        if not (dy > dq and y > Y[m, q]):
            return False
    if cfg.dominance > 0 and y < cfg.dominance * Y[m].max():
        return False
    if cfg.octave_rule and state is not None:
        below = p - 12 if pitches is None else _octave_below(p, pitches)
        if below is not None and state.active(below):
            return False
    return True


def vibrato_level(Y, state: TrackState | None, m: int, p: int) -> float:
    """Max score of the semitone neighbours that could hold ``p``'s vibrato.

    A neighbour is skipped when it is itself active, or when the pitch on its
    far side is active (its score then belongs to that other note).
    """
    vals = [Y[m, q] for q in _neighbors(p, Y.shape[1]) if _vibrato_candidate(state, p, q)]
    return max(vals) if vals else 0.0


def _vibrato_candidate(state: TrackState | None, p: int, q: int) -> bool:
    if state is None:
        return True
    return not (state.active(q) or state.active(2 * q - p))


def decay_decision(Y, Ydot, state: TrackState | None, m: int, p: int,
                   cfg: TranscriberConfig) -> bool:
    """Score (plus vibrato neighbour) below ``eps3`` with a falling slope.

    The slope test passes when ``Ydot`` fell below ``eps4`` in any of the
    last ``cfg.decay_memory`` frames, so a score that collapses while a
    neighbour still carries attack spread is not kept alive.
    """
    level = Y[m, p]
    if cfg.vibrato_guard:
        level += vibrato_level(Y, state, m, p)
    if not level < cfg.eps3:
        return False
    lo = max(m - cfg.decay_memory + 1, 0)
    if state is not None and state.onset[p] >= 0:
        lo = max(lo, state.onset[p] + 1)
    return bool(np.min(Ydot[lo:m + 1, p], initial=np.inf) < cfg.eps4)


def prune(notes, cfg: TranscriberConfig):
    """Keep notes strictly longer than ``d_min`` frames."""
    return [n for n in notes if n.duration > cfg.d_min]


def rise_start(Y, m: int, p: int, cfg: TranscriberConfig, floor: int = 0) -> int:
    """Earliest frame of the rise that ends in an onset decided at ``m``.

    Steps back at most ``cfg.onset_backtrack`` frames, onto frames whose
    score grew by more than a tenth of ``eps1``, never before ``floor``.
    The decision itself stays causal; only its time stamp moves.
    """
    step = 0.1 * cfg.eps1
    start = m
    while (start - 1 > max(floor, 0) and m - start < cfg.onset_backtrack
           and Y[start - 1, p] - Y[start - 2, p] > step):
        start -= 1
    return start


def transient_score(Y) -> np.ndarray:
    """Marginal score per frame: sum over pitches of the positive scores.

    Bident scores are negative on most off-pitch channels, so a signed sum
    mostly cancels; only the positive part measures pitched energy.
    """
    Y = np.asarray(Y, dtype=float)
    return np.clip(Y, 0.0, None).sum(axis=-1)


def transient_gate(Y, cfg: TranscriberConfig) -> np.ndarray:
    """Frames whose marginal score rises steeply."""
    marg = transient_score(Y)[:, None]
    deriv = normalized_derivative_matrix(marg, cfg)[:, 0]
    eps = cfg.transient_eps if cfg.transient_eps is not None else cfg.eps2
    return deriv > eps


def velocity(Yw, m_on: int, p: int, cfg: TranscriberConfig, scale: float | None = None) -> int:
    """``clamp(round(scale * Yw[m_on, p] + offset), 1, 127)``."""
    s = cfg.velocity_scale if scale is None else scale
    return int(np.clip(round(s * float(np.asarray(Yw)[m_on, p]) + cfg.velocity_offset), 1, 127))


# --------------------------------------------------------------------------
# driver

def frame_shift(pg: Pitchgram) -> int:
    """Offset from a frame's start to the hop that holds its last sample."""
    return int((pg.frame_length - 1) // pg.hop)


def transcribe(Yw: Pitchgram, Yi: Pitchgram, cfg: TranscriberConfig = TranscriberConfig(),
               shift: int | None = None) -> list[NoteEvent]:
    """Run the decision tree over a power-weighted / power-invariant pair.

    Returns notes sorted by onset then pitch, on the audio frame grid
    (pitchgram frame + ``shift``, default :func:`frame_shift`).
    """
    if Yw.shape != Yi.shape or not np.allclose(Yw.pitches, Yi.pitches):
        raise ValueError("pitchgrams must share shape and grid")
    if shift is None:
        shift = frame_shift(Yi)
    W = Yw.scores
    I = Yi.scores
    n_frames, n_pitches = I.shape
    pitches = Yi.pitches

    view = _DecayView(I, W, cfg)
    Idot = view.Idot
    gate = transient_gate(W, cfg) if cfg.transient_gate else np.zeros(n_frames, bool)
    transient_eps = cfg.transient_eps if cfg.transient_eps is not None else cfg.eps2
    restrike_level = cfg.transient_min_score if cfg.transient_min_score is not None else cfg.eps1

    state = TrackState(n_pitches)
    raw = []  # (onset, pitch, offset, onset Yw, energy)

    last_end = np.zeros(n_pitches, dtype=int)
    # while the last attack is still entering the frame the scores keep
    # rising, so a restrike needs one frame span since the last decision
    refractory = frame_shift(Yi)
    decided = np.full(n_pitches, -n_frames - refractory - 1, dtype=int)

    def close(p, m):
        raw.append((state.onset[p], p, m, state.velocity[p], state.energy[p]))
        state.stop(p)
        last_end[p] = m

    below = [_octave_below(p, pitches) if cfg.octave_rule else None for p in range(n_pitches)]

    above = [None] * n_pitches
    for p, b in enumerate(below):
        if b is not None:
            above[b] = p

    def floor(p):
        # an onset stamp never moves back into its own previous note; under
        # the octave rule it also stays after the end of the note an octave
        # below and after the onset of an active note an octave above
        f = last_end[p]
        if below[p] is not None:
            f = max(f, last_end[below[p]])
        if above[p] is not None and state.active(above[p]):
            f = max(f, state.onset[above[p]])
        return f

    for m in range(n_frames):
        # decays first, so that a note ending now frees its octave
        for p in np.flatnonzero(state.onset >= 0):
            if view.decays(state, m, p, cfg):
                close(p, m)
            else:
                state.energy[p] += W[m, p]
        for p in range(n_pitches):
            if state.active(p):
                if (gate[m] and m - state.onset[p] > cfg.d_min and m - decided[p] > refractory
                        and I[m, p] > restrike_level
                        and view.Wdot[m, p] > transient_eps and _is_peak(I, m, p)
                        and not (below[p] is not None and state.active(below[p]))):
                    # restrike: the marginal transient stands in for the slope test
                    close(p, m)
                    state.start(p, m)
                    decided[p] = m
                    state.velocity[p] = W[m, p]
                    state.energy[p] = W[m, p]
                continue
            if onset_decision(I, Idot, state, m, p, cfg, pitches):
                state.start(p, rise_start(I, m, p, cfg, floor=floor(p)))
                decided[p] = m
                state.velocity[p] = W[m, p]
                state.energy[p] = W[m, p]
    for p in np.flatnonzero(state.onset >= 0):
        close(p, n_frames)

    if cfg.velocity_mode == "energy":
        levels = np.array([r[4] for r in raw])
    else:
        levels = np.array([r[3] for r in raw])
    scale = cfg.velocity_scale
    if scale == 0.0:
        top = levels.max() if levels.size else 0.0
        scale = 127.0 / top if top > 0 else 0.0

    notes = []
    for (on, p, off, _, _), level in zip(raw, levels):
        vel = int(np.clip(round(scale * level + cfg.velocity_offset), 1, 127))
        notes.append(NoteEvent(int(on) + shift, int(round(pitches[p])), int(off) + shift, vel))
    notes = prune(notes, cfg)
    return sorted(notes, key=lambda n: (n.onset_frame, n.pitch))


def _is_peak(Y, m, p) -> bool:
    return all(Y[m, p] > Y[m, q] for q in _neighbors(p, Y.shape[1]))


class _DecayView:
    """Scores and normalized derivatives used by the decay test."""

    def __init__(self, I, W, cfg: TranscriberConfig):
        self.cfg = cfg
        self.I, self.W = I, W
        self.Idot = normalized_derivative_matrix(I, cfg)
        self.Wdot = normalized_derivative_matrix(W, cfg)
        self._aug = {}

    def _augmented(self, Y, qs, key):
        # vibrato-augmented column history, cached per neighbour set
        if key not in self._aug:
            p = key[0]
            series = Y[:, p].copy()
            if qs:
                series = series + Y[:, list(qs)].max(axis=1)
            self._aug[key] = (series, normalized_derivative_matrix(series[:, None], self.cfg)[:, 0])
        return self._aug[key]

    def decays(self, state: TrackState, m: int, p: int, cfg: TranscriberConfig) -> bool:
        if decay_decision(self.I, self.Idot, state, m, p, cfg):
            return True
        hi = cfg.eps1 if cfg.ambiguity_hi is None else cfg.ambiguity_hi
        bound = cfg.eps4 if cfg.eps4_weighted is None else cfg.eps4_weighted
        qs = ()
        if cfg.vibrato_guard:
            qs = tuple(q for q in _neighbors(p, self.I.shape[1]) if _vibrato_candidate(state, p, q))
        level = self.I[m, p] + (max(self.I[m, q] for q in qs) if qs else 0.0)
        if not cfg.eps3 <= level <= hi:
            return False
        # ambiguous invariant score: the power-weighted pitchgram decides
        _, wdot = self._augmented(self.W, qs, (p, qs))
        return bool(wdot[m] < bound)
