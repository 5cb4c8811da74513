"""Cosine-modulated chromatic bident and sinc analysis kernels.

A kernel for pitch period ``N0`` spans ``12 * N0`` lags.  The bident kernel
is ``h(n) = g(n) cos(pi n / N0)`` with the prototype

    g(n) = alpha sin(3 pi n / N0) tan(pi n / N0) - beta

whose response has three spikes: ``+alpha/4`` at f0 and ``-beta/2``,
``-alpha/4`` at f0/2 and 2 f0.  With ``alpha=2, beta=1`` all three have the
same magnitude.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .acf import AcfSeries

POLE_EPS = 1e-6  # in periods


class KernelKind(str, Enum):
    BIDENT = "bident"
    SINC = "sinc"


@dataclass(frozen=True)
class BidentParams:
    alpha: float = 2.0
    beta: float = 1.0
    span_periods: int = 12

    def __post_init__(self):
        if self.alpha <= 0 or self.beta < 0:
            raise ValueError("need alpha > 0 and beta >= 0")
        if self.span_periods < 1:
            raise ValueError("span_periods must be >= 1")


@dataclass(frozen=True)
class FilterKernel:
    taps: np.ndarray
    kind: KernelKind
    N0: int

    def __len__(self):
        return self.taps.size


def _g(u, alpha, beta):
    return alpha * np.sin(3 * np.pi * u) * np.tan(np.pi * u) - beta


def pole_mask(n, N0: int) -> np.ndarray:
    """True where ``pi n / N0`` is an odd multiple of pi/2."""
    n = np.asarray(n)
    return (N0 % 2 == 0) & ((2 * n) % N0 == 0) & (((2 * n) // N0) % 2 == 1)


def prototype_g(n, N0: int, params: BidentParams = BidentParams()):
    """Bident prototype at sample index ``n`` (scalar or array).

    At tangent poles, which only occur for even ``N0``, the tap is the mean of
    ``g`` at ``n +- POLE_EPS * N0``.
    """
    if N0 < 2:
        raise ValueError("N0 must be >= 2")
    n = np.asarray(n, dtype=float)
    scalar = n.ndim == 0
    n = np.atleast_1d(n)
    if np.any(n < 0) or np.any(n >= params.span_periods * N0):
        raise ValueError("n outside kernel support")

    out = _g(n / N0, params.alpha, params.beta)
    poles = pole_mask(n.astype(int), N0) & (n == np.round(n))
    if np.any(poles):
        d = POLE_EPS
        u = n[poles] / N0
        out[poles] = 0.5 * (_g(u + d, params.alpha, params.beta)
                            + _g(u - d, params.alpha, params.beta))
    return float(out[0]) if scalar else out


def _build(N0: int, params: BidentParams, kind: KernelKind) -> FilterKernel:
    n = np.arange(params.span_periods * N0)
    u = n / N0
    if kind is KernelKind.SINC:
        taps = np.cos(2 * np.pi * u)
    else:
        # g(n) cos(pi u) with tan * cos folded into sin: no pole at odd
        # multiples of pi/2, where the product tends to -alpha
        taps = (params.alpha * np.sin(3 * np.pi * u) * np.sin(np.pi * u)
                - params.beta * np.cos(np.pi * u))
    taps.setflags(write=False)
    return FilterKernel(taps, kind, N0)


_cache: dict = {}
_cache_lock = threading.Lock()


def build_kernel(N0: int, params: BidentParams = BidentParams(),
                 kind: KernelKind | str = KernelKind.BIDENT) -> FilterKernel:
    """Memoized kernel for period ``N0``."""
    if N0 < 2:
        raise ValueError("N0 must be >= 2")
    kind = KernelKind(kind)
    key = (int(N0), params, kind)
    kern = _cache.get(key)
    if kern is None:
        kern = _build(int(N0), params, kind)
        with _cache_lock:
            kern = _cache.setdefault(key, kern)
    return kern


def score(r: AcfSeries | np.ndarray, kernel: FilterKernel) -> float:
    """``Y = 1/L sum_{n<L} r(n) h(n)`` with ``L = len(kernel)``."""
    values = r.values if isinstance(r, AcfSeries) else np.asarray(r, dtype=float)
    L = kernel.taps.size
    if values.size < L:
        raise ValueError(f"need {L} lags, got {values.size}")
    return float(np.dot(values[:L], kernel.taps) / L)


def kernel_matrix(periods, params: BidentParams = BidentParams(),
                  kind: KernelKind | str = KernelKind.BIDENT) -> np.ndarray:
    """Stack of zero-padded, length-normalized kernels, shape ``(lags, P)``.

    ``R @ kernel_matrix(...)`` scores a batch of lag series ``R`` against all
    channels at once.
    """
    kernels = [build_kernel(int(N0), params, kind) for N0 in periods]
    lags = max(k.taps.size for k in kernels)
    K = np.zeros((lags, len(kernels)))
    for j, k in enumerate(kernels):
        K[:k.taps.size, j] = k.taps / k.taps.size
    return K


def analytic_response(freqs_hz, f0_hz: float, params: BidentParams = BidentParams(),
                      kind: KernelKind | str = KernelKind.BIDENT) -> np.ndarray:
    """Length-matched continuous response of the truncated kernel.

    Normalized like :func:`score`, i.e. the response that multiplies a
    two-sided power spectrum.  ``S(f) = sinc(2 * span * f / f0)``.
    """
    f = np.asarray(freqs_hz, dtype=float)
    w = 2 * params.span_periods / f0_hz

    def S(d):
        return np.sinc(w * d)

    def E(d):
        return S(f - d) + S(f + d)

    if KernelKind(kind) is KernelKind.SINC:
        return 0.5 * E(f0_hz)
    return (params.alpha / 4) * (E(f0_hz) - E(2 * f0_hz)) - (params.beta / 2) * E(f0_hz / 2)


def dtft(taps, freqs_norm) -> np.ndarray:
    """Real part of the DTFT of ``taps`` at normalized frequencies (cycles/sample).

    For an even extension this is the response that an even lag series sees.
    """
    taps = np.asarray(taps, dtype=float)
    n = np.arange(taps.size)
    f = np.atleast_1d(np.asarray(freqs_norm, dtype=float))
    out = np.empty(f.size)
    for i in range(0, f.size, 256):
        out[i:i + 256] = np.cos(2 * np.pi * np.outer(f[i:i + 256], n)) @ taps
    return out
