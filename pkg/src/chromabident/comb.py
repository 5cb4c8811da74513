"""Pitch-synchronous comb pre-filter and harmonicity coefficient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

DEFAULT_A = 0.8


@dataclass(frozen=True)
class CombParams:
    """Comb scaling factor ``a`` and delay ``N0`` in samples."""

    a: float = DEFAULT_A
    N0: int = 100

    def __post_init__(self):
        if int(self.N0) != self.N0 or self.N0 < 1:
            raise ValueError("N0 must be a positive integer")
        if not -1.0 <= self.a <= 1.0:
            raise ValueError("|a| must not exceed 1")


def period_samples(f0_hz: float, sample_rate_hz: float) -> int:
    """Nearest-integer pitch period."""
    return max(int(round(sample_rate_hz / f0_hz)), 1)


def comb_feedforward(x, params: CombParams) -> np.ndarray:
    """``y(n) = x(n) + a x(n - N0)`` with zero history."""
    x = np.asarray(x, dtype=float)
    y = x.copy()
    if params.N0 < x.size:
        y[params.N0:] += params.a * x[:-params.N0]
    return y


def comb_feedback(x, params: CombParams) -> np.ndarray:
    """``y(n) = x(n) + a y(n - N0)`` with zero initial state."""
    if abs(params.a) >= 1.0:
        raise ValueError("feed-backward comb is unstable for |a| >= 1")
    den = np.zeros(params.N0 + 1)
    den[0] = 1.0
    den[-1] = -params.a
    return lfilter([1.0], den, np.asarray(x, dtype=float))


def comb_feedback_tail(x, params: CombParams) -> np.ndarray:
    """Last ``N0`` samples of :func:`comb_feedback` without filtering the
    whole frame.

    With zero initial state the output is ``sum_j a**j x(n - j N0)``, so the
    tail only needs the input folded into whole periods.
    """
    x = np.asarray(x, dtype=float)
    N0 = params.N0
    if x.size < N0:
        raise ValueError("fewer than N0 samples")
    periods = x.size // N0
    lead = x.size - periods * N0
    # rows: newest period first
    folded = x[lead:].reshape(periods, N0)[::-1]
    weights = params.a ** np.arange(periods)
    tail = weights @ folded
    if lead:
        tail[N0 - lead:] += params.a ** periods * x[:lead]
    return tail


def harmonicity(x_tilde, N0: int, *, last: bool = True) -> float:
    """RMS of one period of the comb-filtered signal.

    By default the last ``N0`` samples are used (steady state); pass
    ``last=False`` for the first period.
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    if N0 < 1 or x_tilde.size < N0:
        raise ValueError("fewer than N0 samples")
    seg = x_tilde[-N0:] if last else x_tilde[:N0]
    return float(np.sqrt(np.mean(seg ** 2)))


def weight_by_harmonicity(x, eta: float) -> np.ndarray:
    """Scale the unfiltered signal by its harmonicity coefficient."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return eta * np.asarray(x, dtype=float)


def comb_response(freqs_hz, params: CombParams, sample_rate_hz: float,
                  feedback: bool = True) -> np.ndarray:
    """Complex frequency response of the comb at ``freqs_hz``."""
    z = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) * params.N0 / sample_rate_hz)
    if feedback:
        return 1.0 / (1.0 - params.a * z)
    return 1.0 + params.a * z
