"""Analysis and transcriber settings, and their ``key = value`` file format.

A config file has up to two sections::

    [analysis]
    comb_a = 0.8
    kernel = bident

    [transcriber]
    eps1 = 0.12

Unknown sections or keys are rejected with :class:`ConfigError` naming the
offending key.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

DEFAULT_PITCH_RANGE = (40, 88)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    """Every tunable of the filter bank.

    ``dft_window_length`` and ``dft_size`` default to ``None``: the window
    then matches the time-domain frame and the DFT is zero-padded far enough
    that the bident response can be sampled without lag aliasing.
    """

    sample_rate_hz: Optional[int] = None   # expected rate; None accepts any
    comb_a: float = 0.8
    alpha: float = 2.0
    beta: float = 1.0
    span_periods: int = 12
    kernel: str = "bident"
    compression: bool = True
    hop: int = 1024
    pitch_lo: int = DEFAULT_PITCH_RANGE[0]
    pitch_hi: int = DEFAULT_PITCH_RANGE[1]
    tuning_hz: float = 440.0
    variant: str = "weighted"
    domain: str = "time"
    dft_window: str = "rect"
    dft_window_length: Optional[int] = None
    dft_size: Optional[int] = None
    fd_spectrum: str = "power"            # power | magnitude
    target_dbfs: float = -20.0
    silence_power: float = 1e-12          # frames at or below count as silent

    def __post_init__(self):
        if not -1.0 < self.comb_a < 1.0:
            raise ConfigError("comb_a: feed-backward comb needs |a| < 1")
        if self.kernel not in ("bident", "sinc"):
            raise ConfigError(f"kernel: unknown kind '{self.kernel}'")
        if self.variant not in ("weighted", "invariant"):
            raise ConfigError(f"variant: unknown '{self.variant}'")
        if self.domain not in ("time", "freq"):
            raise ConfigError(f"domain: unknown '{self.domain}'")
        if self.dft_window not in ("rect", "hamming", "hann"):
            raise ConfigError(f"dft_window: unknown '{self.dft_window}'")
        if self.fd_spectrum not in ("power", "magnitude"):
            raise ConfigError(f"fd_spectrum: unknown '{self.fd_spectrum}'")
        if self.hop < 1:
            raise ConfigError("hop: must be >= 1")
        if self.pitch_hi < self.pitch_lo:
            raise ConfigError("pitch_hi: must be >= pitch_lo")
        if self.tuning_hz <= 0:
            raise ConfigError("tuning_hz: must be positive")

    @classmethod
    def spectrogram_4096(cls, **overrides) -> "AnalysisConfig":
        """4096-point DFT, Hamming window, 75 % overlap."""
        base = dict(domain="freq", dft_window="hamming", dft_window_length=4096,
                    dft_size=4096, hop=1024)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "AnalysisConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TranscriberConfig:
    """Decision thresholds of the transcriber.

    ``eps1``/``eps3`` are power-invariant score levels, ``eps2``/``eps4``
    bounds on the normalized derivative.  When the vibrato guard adds a
    neighbour score to the decay test, ``eps3`` is not rescaled.
    """

    eps1: float = 0.11
    eps2: float = 0.1
    eps3: float = 0.08
    eps4: float = -0.05
    ambiguity_hi: Optional[float] = 0.3  # upper edge of the ambiguity band; None => eps1
    eps4_weighted: Optional[float] = -0.4  # slope bound on Yw inside the band; None => eps4
    onset_backtrack: int = 3              # frames an onset stamp may move back along its rise
    dominance: float = 0.6                # onset needs Yi >= dominance * frame max; 0 disables
    decay_memory: int = 5                 # frames the falling-slope test looks back
    d_min: int = 4
    smoother: str = "moving-average"      # or "median"
    smoother_length: int = 3
    rising_slope: bool = False
    octave_rule: bool = True
    vibrato_guard: bool = True
    transient_gate: bool = True
    transient_eps: Optional[float] = 0.3  # None => eps2
    transient_min_score: Optional[float] = None  # defaults to eps1
    velocity_mode: str = "onset"           # or "energy"
    velocity_scale: float = 0.0            # 0 => auto-scale to the loudest note
    velocity_offset: float = 0.0

    def __post_init__(self):
        if not self.eps1 > self.eps3 >= 0:
            raise ConfigError("eps1/eps3: need eps1 > eps3 >= 0")
        if not self.eps2 > 0 > self.eps4:
            raise ConfigError("eps2/eps4: need eps2 > 0 > eps4")
        if self.eps4_weighted is not None and not self.eps4_weighted < 0:
            raise ConfigError("eps4_weighted: must be negative")
        if self.ambiguity_hi is not None and self.ambiguity_hi < self.eps3:
            raise ConfigError("ambiguity_hi: must be >= eps3")
        if self.onset_backtrack < 0:
            raise ConfigError("onset_backtrack: must be >= 0")
        if not 0.0 <= self.dominance <= 1.0:
            raise ConfigError("dominance: must lie in [0, 1]")
        if self.decay_memory < 1:
            raise ConfigError("decay_memory: must be >= 1")
        if self.d_min < 1:
            raise ConfigError("d_min: must be >= 1")
        if self.smoother not in ("moving-average", "median"):
            raise ConfigError(f"smoother: unknown '{self.smoother}'")
        if self.smoother_length < 3 or self.smoother_length % 2 == 0:
            raise ConfigError("smoother_length: must be odd and >= 3")
        if self.velocity_mode not in ("onset", "energy"):
            raise ConfigError(f"velocity_mode: unknown '{self.velocity_mode}'")

    def replace(self, **changes) -> "TranscriberConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def for_domain(cls, domain: str, **overrides) -> "TranscriberConfig":
        """Calibrated defaults for pitchgrams from the given domain.

        Frequency-domain scores come from a power spectrum rather than a
        compressed lag series and sit about a third lower, so their level
        thresholds are lower too.
        """
        if domain not in ("time", "freq"):
            raise ConfigError(f"domain: unknown '{domain}'")
        base = dict(FREQ_DOMAIN_TRANSCRIBER) if domain == "freq" else {}
        base.update(overrides)
        return cls(**base)


# calibrated on the synthetic corpus with frequency-domain pitchgrams
FREQ_DOMAIN_TRANSCRIBER = {"eps1": 0.06, "eps3": 0.05, "eps4_weighted": -0.3,
                           "transient_eps": 0.05}


_SECTIONS = {"analysis": AnalysisConfig, "transcriber": TranscriberConfig}


def _convert(raw: str, f: dataclasses.Field, key: str):
    kind = str(f.type)
    text = raw.strip()
    if "Optional" in kind and text.lower() in ("", "none", "auto"):
        return None
    try:
        if "bool" in kind:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse '{raw}'") from None
    return text


def _apply(parser, section: str, base):
    known = {f.name: f for f in fields(_SECTIONS[section])}
    changes = {}
    for key, raw in parser.items(section):
        if key not in known:
            raise ConfigError(f"unknown config key '{key}' in [{section}]")
        changes[key] = _convert(raw, known[key], key)
    try:
        return dataclasses.replace(base, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, analysis: AnalysisConfig | None = None,
                 transcriber: TranscriberConfig | None = None):
    """Parse config text on top of the given (or default) configs.

    Without a ``transcriber`` base, the ``[transcriber]`` keys apply on top of
    the calibrated defaults for the analysis domain the file ends up with.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")

    analysis = analysis or AnalysisConfig()
    if parser.has_section("analysis"):
        analysis = _apply(parser, "analysis", analysis)
    if transcriber is None:
        transcriber = TranscriberConfig.for_domain(analysis.domain)
    if parser.has_section("transcriber"):
        transcriber = _apply(parser, "transcriber", transcriber)
    return analysis, transcriber


def load_config(path):
    return parse_config(Path(path).read_text())


def format_config(analysis: AnalysisConfig, transcriber: TranscriberConfig) -> str:
    lines = []
    for name, obj in (("analysis", analysis), ("transcriber", transcriber)):
        lines.append(f"[{name}]")
        for f in fields(obj):
            value = getattr(obj, f.name)
            lines.append(f"{f.name} = {'auto' if value is None else value}")
        lines.append("")
    return "\n".join(lines)
