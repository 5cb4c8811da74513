"""Audio -> notes in one call, with optional per-stage timing."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .config import AnalysisConfig, TranscriberConfig
from .pitchgram import Pitchgram, PitchGrid, compute_pitchgram
from .signal_io import AudioBuffer, NoteEvent, normalize_rms
from .transcriber import transcribe


@dataclass
class TranscriptionResult:
    notes: list[NoteEvent]
    weighted: Pitchgram
    invariant: Pitchgram
    frame_period_s: float
    timings: dict = field(default_factory=dict)
    audio_s: float = 0.0

    @property
    def real_time_factor(self) -> float:
        """Processing time over audio duration; below 1 is faster than real time."""
        total = sum(self.timings.values())
        return total / self.audio_s if self.audio_s > 0 else float("inf")


def analyze(buf: AudioBuffer, analysis: AnalysisConfig = AnalysisConfig(),
            normalize: bool = True):
    """Both pitchgram variants of ``buf`` (RMS-normalized first by default)."""
    if normalize:
        buf = normalize_rms(buf, analysis.target_dbfs)
    grid = PitchGrid.from_config(analysis, buf.sample_rate_hz)
    Yw = compute_pitchgram(buf, analysis.replace(variant="weighted"), grid)
    Yi = compute_pitchgram(buf, analysis.replace(variant="invariant"), grid)
    return Yw, Yi


def transcribe_audio(buf: AudioBuffer, analysis: AnalysisConfig = AnalysisConfig(),
                     transcriber: TranscriberConfig | None = None,
                     normalize: bool = True) -> TranscriptionResult:
    """Normalize, compute both pitchgrams, run the transcriber.

    Without an explicit ``transcriber`` the calibrated defaults for
    ``analysis.domain`` are used.
    """
    if transcriber is None:
        transcriber = TranscriberConfig.for_domain(analysis.domain)
    timings = {}
    t0 = time.perf_counter()
    if normalize:
        buf = normalize_rms(buf, analysis.target_dbfs)
    t1 = time.perf_counter()
    timings["normalize"] = t1 - t0
    grid = PitchGrid.from_config(analysis, buf.sample_rate_hz)
    Yw = compute_pitchgram(buf, analysis.replace(variant="weighted"), grid)
    t2 = time.perf_counter()
    timings["pitchgram_weighted"] = t2 - t1
    Yi = compute_pitchgram(buf, analysis.replace(variant="invariant"), grid)
    t3 = time.perf_counter()
    timings["pitchgram_invariant"] = t3 - t2
    notes = transcribe(Yw, Yi, transcriber)
    timings["transcribe"] = time.perf_counter() - t3
    return TranscriptionResult(notes, Yw, Yi, Yw.frame_period_s, timings, buf.duration_s)
