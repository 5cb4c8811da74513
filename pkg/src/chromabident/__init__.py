"""Pitch-synchronous chromatic bident filter bank and decision-based transcriber."""
from .config import AnalysisConfig, ConfigError, TranscriberConfig, load_config
from .evaluation import EvalReport, evaluate, notes_to_mask, parse_grid
from .pipeline import TranscriptionResult, analyze, transcribe_audio
from .pitchgram import (Chromagram, Pitchgram, PitchGrid, chromagram, compute_pitchgram,
                        midi_to_freq, pitchgram_freq, pitchgram_time, posterior_pitchgram)
from .signal_io import (AudioBuffer, NoteEvent, ToneSpec, export_midi, import_midi,
                        load_audio, normalize_rms, synthesize)
from .transcriber import transcribe

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig", "ConfigError", "TranscriberConfig", "load_config",
    "EvalReport", "evaluate", "notes_to_mask", "parse_grid",
    "TranscriptionResult", "analyze", "transcribe_audio",
    "Chromagram", "Pitchgram", "PitchGrid", "chromagram", "compute_pitchgram",
    "midi_to_freq", "pitchgram_freq", "pitchgram_time", "posterior_pitchgram",
    "AudioBuffer", "NoteEvent", "ToneSpec", "export_midi", "import_midi",
    "load_audio", "normalize_rms", "synthesize", "transcribe",
]
