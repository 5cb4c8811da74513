"""Biased autocorrelation, power normalization and signed-root compression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft


class SilentFrame(ValueError):
    """The zero-lag value is zero; the frame carries no power."""


@dataclass(frozen=True)
class AcfSeries:
    values: np.ndarray
    normalized: bool = False
    compressed: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def scaled(self, factor: float) -> "AcfSeries":
        return AcfSeries(self.values * factor, self.normalized, self.compressed)


def acf_direct(y, max_lag: int) -> np.ndarray:
    """Reference double loop of the biased estimator.  O(N * max_lag)."""
    y = np.asarray(y, dtype=float)
    N = y.size
    r = np.empty(max_lag)
    for nu in range(max_lag):
        r[nu] = np.dot(y[nu:], y[:N - nu]) / N
    return r


def acf_fft(y, max_lag: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    N = y.size
    n_fft = sp_fft.next_fast_len(N + max_lag, real=True)
    spec = sp_fft.rfft(y, n_fft)
    return sp_fft.irfft(spec.real ** 2 + spec.imag ** 2, n_fft)[:max_lag] / N


def acf(y, max_lag: int) -> AcfSeries:
    """Biased autocorrelation ``r(nu) = 1/N sum_n y(n) y(n - nu)``.

    Samples outside the frame count as zero.  Computed through a zero-padded
    FFT, which agrees with :func:`acf_direct` to rounding error.
    """
    y = np.asarray(y, dtype=float)
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if y.size < max_lag:
        raise ValueError(f"frame of {y.size} samples is shorter than max_lag={max_lag}")
    return AcfSeries(acf_fft(y, max_lag))


def acc(r: AcfSeries) -> AcfSeries:
    """Divide by the zero-lag value."""
    if r.normalized:
        raise ValueError("series is already normalized")
    r0 = r.values[0]
    if r0 <= 0.0:
        raise SilentFrame("silent frame")
    return AcfSeries(r.values / r0, normalized=True, compressed=r.compressed)


def signed_sqrt(v):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.sqrt(np.abs(v))


def compress(r: AcfSeries) -> AcfSeries:
    """Elementwise ``sgn(r) |r| ** 0.5``; refuses a second application."""
    if r.compressed:
        raise ValueError("series is already compressed")
    return AcfSeries(signed_sqrt(r.values), normalized=r.normalized, compressed=True)
