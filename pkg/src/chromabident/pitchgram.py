"""Time-pitch scores from the P-channel comb / ACF / bident filter bank.

Two domains are provided.  The time-domain path follows the filter bank
block by block, computing one ACF per frame and applying the per-channel
harmonicity factor afterwards (``compress(acf(eta x)) == eta *
compress(acf(x))``).  The frequency-domain path replaces the ACF by a single
zero-padded DFT per frame and scores each channel by an inner product with
the kernel's analytic response.

Frame ``m`` covers samples ``[m * hop, m * hop + frame_length)``; a trailing
partial frame is dropped.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy.signal import get_window

from . import acf as acf_mod
from . import comb as comb_mod
from .bident import BidentParams, analytic_response, build_kernel, kernel_matrix, score
from .config import AnalysisConfig
from .signal_io import AudioBuffer

WEIGHTED = "weighted"
INVARIANT = "invariant"
PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

_TIME_CHUNK = 16  # frames per batch; measured best for each path
_FREQ_CHUNK = 32


def midi_to_freq(p, tuning_hz: float = 440.0):
    """Equal-tempered frequency of MIDI pitch ``p``."""
    if tuning_hz <= 0:
        raise ValueError("tuning_hz must be positive")
    out = tuning_hz * 2.0 ** ((np.asarray(p, dtype=float) - 69.0) / 12.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PitchGrid:
    pitches: np.ndarray
    sample_rate_hz: int
    tuning_hz: float = 440.0

    def __post_init__(self):
        p = np.array(self.pitches, dtype=float).reshape(-1)
        if p.size == 0:
            raise ValueError("empty pitch grid")
        if np.any(np.diff(p) <= 0):
            raise ValueError("pitches must be strictly ascending")
        p.setflags(write=False)
        object.__setattr__(self, "pitches", p)
        f0 = self.f0
        if np.any(f0 >= self.sample_rate_hz / 4):
            raise ValueError("highest pitch leaves no room for its second harmonic")
        if np.any(self.periods < 2):
            raise ValueError("pitch period below 2 samples")

    @classmethod
    def from_range(cls, lo: int, hi: int, sample_rate_hz: int, tuning_hz: float = 440.0):
        return cls(np.arange(lo, hi + 1), sample_rate_hz, tuning_hz)

    @classmethod
    def from_config(cls, cfg: AnalysisConfig, sample_rate_hz: int):
        return cls.from_range(cfg.pitch_lo, cfg.pitch_hi, sample_rate_hz, cfg.tuning_hz)

    def __len__(self):
        return self.pitches.size

    @property
    def f0(self) -> np.ndarray:
        return midi_to_freq(self.pitches, self.tuning_hz) * np.ones(1)

    @property
    def periods(self) -> np.ndarray:
        return np.maximum(np.round(self.sample_rate_hz / self.f0), 1).astype(int)

    def frame_length(self, span_periods: int = 12) -> int:
        """Samples per time-domain frame: ``span_periods`` lags plus one period."""
        return int((span_periods + 1) * self.periods.max())

    def index(self, pitch) -> int:
        hits = np.flatnonzero(np.isclose(self.pitches, pitch))
        if hits.size == 0:
            raise KeyError(pitch)
        return int(hits[0])


@dataclass(frozen=True)
class Pitchgram:
    """Scores ``Y[m, p]`` plus the grid they live on."""

    scores: np.ndarray
    pitches: np.ndarray
    hop: int
    frame_length: int
    sample_rate_hz: int
    variant: str = WEIGHTED
    domain: str = "time"
    kind: str = "bident"

    def __post_init__(self):
        s = np.array(self.scores, dtype=float)
        if s.ndim != 2 or s.shape[1] != len(self.pitches):
            raise ValueError("scores must be frames x pitches")
        if not np.all(np.isfinite(s)):
            raise ValueError("non-finite scores")
        s.setflags(write=False)
        p = np.array(self.pitches, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "pitches", p)

    @property
    def shape(self):
        return self.scores.shape

    @property
    def n_frames(self) -> int:
        return self.scores.shape[0]

    @property
    def frame_period_s(self) -> float:
        return self.hop / self.sample_rate_hz

    @property
    def frame_offset(self) -> int:
        """Whole hops from a frame's first sample to its centre."""
        return int(round(self.frame_length / (2 * self.hop)))

    def frame_times(self) -> np.ndarray:
        """Centre time of each frame in seconds."""
        m = np.arange(self.n_frames)
        return (m * self.hop + self.frame_length / 2) / self.sample_rate_hz

    def column(self, pitch) -> np.ndarray:
        return self.scores[:, int(np.flatnonzero(np.isclose(self.pitches, pitch))[0])]

    def with_scores(self, scores, **changes) -> "Pitchgram":
        meta = dict(pitches=self.pitches, hop=self.hop, frame_length=self.frame_length,
                    sample_rate_hz=self.sample_rate_hz, variant=self.variant,
                    domain=self.domain, kind=self.kind)
        meta.update(changes)
        return Pitchgram(scores, **meta)


@dataclass(frozen=True)
class Chromagram:
    scores: np.ndarray
    hop: int = 1024
    sample_rate_hz: int = 44100

    def __post_init__(self):
        if np.ndim(self.scores) != 2 or np.shape(self.scores)[1] != 12:
            raise ValueError("chromagram needs 12 columns")


# --------------------------------------------------------------------------
# time domain

def _frames(x: np.ndarray, length: int, hop: int) -> np.ndarray:
    if x.size < length:
        raise ValueError(f"buffer of {x.size} samples is shorter than one frame ({length})")
    return sliding_window_view(x, length)[::hop]


def _check_rate(buf: AudioBuffer, cfg: AnalysisConfig):
    if cfg.sample_rate_hz is not None and cfg.sample_rate_hz != buf.sample_rate_hz:
        raise ValueError(f"expected {cfg.sample_rate_hz} Hz audio, got {buf.sample_rate_hz} Hz")


def _bident_params(cfg: AnalysisConfig) -> BidentParams:
    return BidentParams(cfg.alpha, cfg.beta, cfg.span_periods)


def frame_harmonicity(frames: np.ndarray, periods, a: float) -> np.ndarray:
    """Harmonicity of every frame for every channel, shape ``(frames, P)``.

    Uses the steady-state tail (last period) of a zero-state feed-backward
    comb run over each frame.
    """
    n_frames, length = frames.shape
    eta = np.empty((n_frames, len(periods)))
    for j, N0 in enumerate(periods):
        N0 = int(N0)
        k = length // N0
        lead = length - k * N0
        folded = frames[:, lead:].reshape(n_frames, k, N0)[:, ::-1, :]
        tail = np.einsum("j,mjn->mn", a ** np.arange(k), folded)
        if lead:
            tail[:, N0 - lead:] += a ** k * frames[:, :lead]
        eta[:, j] = np.sqrt(np.mean(tail ** 2, axis=1))
    return eta


def batch_acf(frames: np.ndarray, max_lag: int) -> np.ndarray:
    length = frames.shape[1]
    n_fft = sp_fft.next_fast_len(length + max_lag, real=True)
    spec = sp_fft.rfft(frames, n_fft, axis=1)
    return sp_fft.irfft(spec.real ** 2 + spec.imag ** 2, n_fft, axis=1)[:, :max_lag] / length


def pitchgram_time(buf: AudioBuffer, grid: PitchGrid | None = None,
                   cfg: AnalysisConfig = AnalysisConfig()) -> Pitchgram:
    """Time-domain pitchgram.

    Weighted variant: ``Y = eta * score(compress(acf(x)))``.  Invariant
    variant: ``Y = score(compress(acc(x)))`` without comb weighting.  Silent
    frames score zero.
    """
    _check_rate(buf, cfg)
    grid = grid or PitchGrid.from_config(cfg, buf.sample_rate_hz)
    periods = grid.periods
    length = grid.frame_length(cfg.span_periods)
    max_lag = cfg.span_periods * int(periods.max())
    K = kernel_matrix(periods, _bident_params(cfg), cfg.kernel)

    frames = _frames(buf.samples, length, cfg.hop)
    out = np.zeros((frames.shape[0], len(grid)))
    for start in range(0, frames.shape[0], _TIME_CHUNK):
        block = np.ascontiguousarray(frames[start:start + _TIME_CHUNK])
        R = batch_acf(block, max_lag)
        r0 = R[:, :1].copy()
        live = r0[:, 0] > cfg.silence_power
        if cfg.variant == INVARIANT:
            R = np.divide(R, r0, out=np.zeros_like(R), where=r0 > 0)
        if cfg.compression:
            R = acf_mod.signed_sqrt(R)
        Y = R @ K
        if cfg.variant == WEIGHTED:
            Y *= frame_harmonicity(block, periods, cfg.comb_a)
        Y[~live] = 0.0
        out[start:start + block.shape[0]] = Y
    return Pitchgram(out, grid.pitches, cfg.hop, length, buf.sample_rate_hz,
                     cfg.variant, "time", cfg.kernel)


def pitchgram_time_naive(buf: AudioBuffer, grid: PitchGrid | None = None,
                         cfg: AnalysisConfig = AnalysisConfig()) -> Pitchgram:
    """Channel-by-channel reference path: comb -> weight -> ACF -> compress -> score.

    Slow; kept as an oracle for :func:`pitchgram_time`.
    """
    grid = grid or PitchGrid.from_config(cfg, buf.sample_rate_hz)
    periods = grid.periods
    length = grid.frame_length(cfg.span_periods)
    params = _bident_params(cfg)
    frames = _frames(buf.samples, length, cfg.hop)
    out = np.zeros((frames.shape[0], len(grid)))
    for m, frame in enumerate(frames):
        if np.mean(frame ** 2) <= cfg.silence_power:
            continue
        for j, N0 in enumerate(periods):
            kern = build_kernel(int(N0), params, cfg.kernel)
            if cfg.variant == WEIGHTED:
                x_tilde = comb_mod.comb_feedback(frame, comb_mod.CombParams(cfg.comb_a, int(N0)))
                eta = comb_mod.harmonicity(x_tilde, int(N0))
                y = comb_mod.weight_by_harmonicity(frame, eta)
                r = acf_mod.acf(y, len(kern))
            else:
                r = acf_mod.acc(acf_mod.acf(frame, len(kern)))
            if cfg.compression:
                r = acf_mod.compress(r)
            out[m, j] = score(r, kern)
    return Pitchgram(out, grid.pitches, cfg.hop, length, buf.sample_rate_hz,
                     cfg.variant, "time", cfg.kernel)


# --------------------------------------------------------------------------
# frequency domain

def _window(name: str, length: int) -> np.ndarray:
    if name == "rect":
        return np.ones(length)
    return get_window(name, length, fftbins=False)


@lru_cache(maxsize=16)
def _freq_table(pitches: tuple, sample_rate_hz: int, tuning_hz: float, n_fft: int,
                a: float, params: BidentParams, kind: str) -> np.ndarray:
    """Columns: P kernel responses, P squared comb responses, one ones column.

    One-sided bins stand for both signs of frequency, so every column is
    doubled except at DC and Nyquist.  Stored in float32.
    """
    grid = PitchGrid(np.array(pitches), sample_rate_hz, tuning_hz)
    f = sp_fft.rfftfreq(n_fft, 1.0 / sample_rate_hz)
    H = [analytic_response(f, fp, params, kind) for fp in grid.f0]
    C2 = [np.abs(comb_mod.comb_response(f, comb_mod.CombParams(a, int(N0)), sample_rate_hz)) ** 2
          for N0 in grid.periods]
    table = np.stack(H + C2 + [np.ones_like(f)], axis=1)
    table[1:] *= 2.0
    if n_fft % 2 == 0:
        table[-1] /= 2.0
    table = table.astype(np.float32)
    table.setflags(write=False)
    return table


def freq_geometry(grid: PitchGrid, cfg: AnalysisConfig) -> tuple[int, int]:
    """``(window_length, dft_size)`` for the frequency-domain path."""
    win = cfg.dft_window_length or grid.frame_length(cfg.span_periods)
    n_fft = cfg.dft_size
    if n_fft is None:
        need = win + cfg.span_periods * int(grid.periods.max())
        n_fft = sp_fft.next_fast_len(need, real=True)
    if n_fft < win:
        raise ValueError("dft_size must be at least the window length")
    bin_hz = grid.sample_rate_hz / n_fft
    limit = grid.f0.min() * (2 ** (1 / 12) - 1)
    if bin_hz >= limit:
        raise ValueError(
            f"DFT of {n_fft} points ({bin_hz:.2f} Hz bins) cannot separate semitones "
            f"at {grid.f0.min():.1f} Hz (need bins < {limit:.2f} Hz)")
    return int(win), int(n_fft)


def pitchgram_freq(buf: AudioBuffer, grid: PitchGrid | None = None,
                   cfg: AnalysisConfig = AnalysisConfig(domain="freq")) -> Pitchgram:
    """Frequency-domain pitchgram: one windowed DFT per frame.

    Each channel's score is the inner product of the frame's (power or
    magnitude) spectrum with the kernel's analytic response.  The weighted
    variant multiplies by a harmonicity computed from the same spectrum and
    the comb's magnitude response; the invariant variant divides by the
    frame power (or its square root for a magnitude spectrum).
    """
    _check_rate(buf, cfg)
    grid = grid or PitchGrid.from_config(cfg, buf.sample_rate_hz)
    win_len, n_fft = freq_geometry(grid, cfg)
    window = _window(cfg.dft_window, win_len)
    norm = n_fft * np.sum(window ** 2)
    P = len(grid)
    table = _freq_table(tuple(grid.pitches), grid.sample_rate_hz, grid.tuning_hz,
                        n_fft, cfg.comb_a, _bident_params(cfg), cfg.kernel)
    magnitude = cfg.fd_spectrum == "magnitude"
    window = (window / np.sqrt(norm)).astype(np.float32)

    frames = _frames(buf.samples, win_len, cfg.hop)
    out = np.zeros((frames.shape[0], P))
    # zero padding written once; each batch only overwrites the window part
    padded = np.zeros((min(_FREQ_CHUNK, frames.shape[0]), n_fft), dtype=np.float32)
    for start in range(0, frames.shape[0], _FREQ_CHUNK):
        rows = frames[start:start + _FREQ_CHUNK]
        block = padded[:rows.shape[0]]
        np.multiply(rows, window, out=block[:, :win_len], dtype=np.float32)
        X = sp_fft.rfft(block, axis=1)
        power = np.square(X.real)
        power += np.square(X.imag)
        acc = (power @ table).astype(float)
        Y = (np.sqrt(power) @ table[:, :P]).astype(float) if magnitude else acc[:, :P]
        eta2, r0 = acc[:, P:2 * P], acc[:, 2 * P]
        live = r0 > cfg.silence_power
        if cfg.variant == WEIGHTED:
            Y = Y * np.sqrt(np.maximum(eta2, 0.0))
        else:
            scale = np.sqrt(r0) if magnitude else r0
            Y = np.divide(Y, scale[:, None], out=np.zeros_like(Y), where=live[:, None])
        Y[~live] = 0.0
        out[start:start + block.shape[0]] = Y
    return Pitchgram(out, grid.pitches, cfg.hop, win_len, buf.sample_rate_hz,
                     cfg.variant, "freq", cfg.kernel)


def spectral_harmonicity(buf: AudioBuffer, grid: PitchGrid | None = None,
                         cfg: AnalysisConfig = AnalysisConfig(domain="freq")) -> np.ndarray:
    """Harmonicity per frame and channel as the frequency-domain path sees it.

    The RMS of the comb-filtered frame follows from Parseval: the frame's
    power spectrum weighted by the comb's squared magnitude response.
    Returns an array of shape ``(frames, P)``.
    """
    grid = grid or PitchGrid.from_config(cfg, buf.sample_rate_hz)
    win_len, n_fft = freq_geometry(grid, cfg)
    window = _window(cfg.dft_window, win_len)
    window = window / np.sqrt(n_fft * np.sum(window ** 2))
    P = len(grid)
    table = _freq_table(tuple(grid.pitches), grid.sample_rate_hz, grid.tuning_hz,
                        n_fft, cfg.comb_a, _bident_params(cfg), cfg.kernel)
    frames = _frames(buf.samples, win_len, cfg.hop)
    X = sp_fft.rfft(frames * window, n_fft, axis=1)
    eta2 = (X.real ** 2 + X.imag ** 2) @ table[:, P:2 * P].astype(float)
    return np.sqrt(np.maximum(eta2, 0.0))


def compute_pitchgram(buf: AudioBuffer, cfg: AnalysisConfig = AnalysisConfig(),
                      grid: PitchGrid | None = None) -> Pitchgram:
    if cfg.domain == "freq":
        return pitchgram_freq(buf, grid, cfg)
    return pitchgram_time(buf, grid, cfg)


# --------------------------------------------------------------------------
# derived representations

def chromagram(pg: Pitchgram) -> Chromagram:
    """Fold a pitchgram over octaves into 12 pitch classes (C = 0).

    Octave folding favours the plain sinc kernel; pass a sinc-kind pitchgram
    for best results.
    """
    pitches = np.round(pg.pitches).astype(int)
    if pitches.max() - pitches.min() < 11:
        raise ValueError("chromagram needs a grid spanning at least one octave")
    Z = np.zeros((pg.n_frames, 12))
    for j, p in enumerate(pitches):
        Z[:, p % 12] += pg.scores[:, j]
    return Chromagram(Z, pg.hop, pg.sample_rate_hz)


def posterior_pitchgram(weighted: Pitchgram, invariant: Pitchgram) -> Pitchgram:
    """Elementwise product normalized to unit Frobenius norm."""
    if weighted.shape != invariant.shape or not np.allclose(weighted.pitches, invariant.pitches):
        raise ValueError("pitchgrams must share shape and grid")
    prod = weighted.scores * invariant.scores
    norm = np.linalg.norm(prod)
    out = prod / norm if norm > 0 else np.zeros_like(prod)
    return weighted.with_scores(out, variant=WEIGHTED)


def framewise_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity of matching rows; rows where either is zero give nan."""
    n = min(len(a), len(b))
    a, b = np.asarray(a)[:n], np.asarray(b)[:n]
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, np.sum(a * b, axis=1) / den, np.nan)


# --------------------------------------------------------------------------
# containers

MAGIC = b"PGRM"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIff")  # 32 bytes
FLAG_INVARIANT, FLAG_FREQ, FLAG_SINC = 1, 2, 4


def save_pgrm(pg: Pitchgram, path) -> None:
    """Binary dump: 32-byte header then row-major little-endian float32."""
    steps = np.diff(pg.pitches)
    step = float(steps[0]) if steps.size else 1.0
    if steps.size and not np.allclose(steps, step):
        raise ValueError("container needs a uniform pitch grid")
    flags = ((pg.variant == INVARIANT) * FLAG_INVARIANT | (pg.domain == "freq") * FLAG_FREQ
             | (pg.kind == "sinc") * FLAG_SINC)
    rows, cols = pg.shape
    header = _HEADER.pack(MAGIC, VERSION, flags, rows, cols, pg.hop, pg.sample_rate_hz,
                          float(pg.pitches[0]), step)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pg.scores.astype("<f4").tobytes())


def load_pgrm(path) -> Pitchgram:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated PGRM header")
    magic, version, flags, rows, cols, hop, rate, lo, step = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not a PGRM v1 file")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if data.size != rows * cols:
        raise ValueError("PGRM payload size does not match header")
    return Pitchgram(
        data.reshape(rows, cols).astype(float), lo + step * np.arange(cols), hop, hop, rate,
        INVARIANT if flags & FLAG_INVARIANT else WEIGHTED,
        "freq" if flags & FLAG_FREQ else "time",
        "sinc" if flags & FLAG_SINC else "bident")


def save_csv(pg: Pitchgram, path) -> None:
    header = "frame,time_s," + ",".join(f"{p:g}" for p in pg.pitches)
    times = pg.frame_times()
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for m, row in enumerate(pg.scores):
            fh.write(f"{m},{times[m]:.6f}," + ",".join(f"{v:.9g}" for v in row) + "\n")
