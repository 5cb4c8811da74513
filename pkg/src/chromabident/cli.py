"""Command-line entry point.

Subcommands::

    chromabident pitchgram in.wav -o out.pgm [--csv out.csv]
    chromabident transcribe in.wav -o out.mid [--timing]
    chromabident eval det.mid ref.mid [--grid 23.2ms]
    chromabident synth tones.txt -o out.wav [--midi ref.mid]

Every command exits with status 0 on success and 1 with a one-line message
on stderr otherwise.  ``PITCHGRAM_THREADS`` caps the number of FFT workers.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from scipy import fft as sp_fft

from .config import AnalysisConfig, ConfigError, TranscriberConfig, parse_config
from .evaluation import EvalError, evaluate, notes_to_mask, parse_grid
from .pipeline import transcribe_audio
from .pitchgram import PitchGrid, compute_pitchgram, save_csv, save_pgrm
from .signal_io import (AudioBuffer, AudioError, MidiError, export_midi, load_audio,
                        normalize_rms, read_midi_notes, read_tone_specs, save_wav, synthesize)

log = logging.getLogger("chromabident")

# reference MIDI from `synth` is quantized to this step, well below a hop
_REF_STEP_S = 1e-3


class CliError(Exception):
    pass


def _threads() -> int:
    raw = os.environ.get("PITCHGRAM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"PITCHGRAM_THREADS must be an integer, got '{raw}'") from None
    if n < 1:
        raise CliError("PITCHGRAM_THREADS must be >= 1")
    return n


def _pitch_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.replace(":", "-").split("-"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO-HI, got '{text}'") from None
    return lo, hi


def _configs(args) -> tuple[AnalysisConfig, TranscriberConfig]:
    """Config file first, then command-line flags on top.

    Transcriber keys from the file apply over the calibrated defaults of the
    final analysis domain, so ``--domain`` also picks matching thresholds.
    """
    text = ""
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        text = path.read_text()
    analysis, _ = parse_config(text)
    changes = {}
    for flag, key in (("domain", "domain"), ("variant", "variant"), ("kernel", "kernel"),
                      ("hop", "hop"), ("dft_size", "dft_size"), ("tuning", "tuning_hz")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    if getattr(args, "pitch_range", None):
        changes["pitch_lo"], changes["pitch_hi"] = args.pitch_range
    analysis = analysis.replace(**changes)
    _, transcriber = parse_config(text, transcriber=TranscriberConfig.for_domain(analysis.domain))
    return analysis, transcriber


def _load(path) -> AudioBuffer:
    if not Path(path).is_file():
        raise CliError(f"input file not found: {path}")
    return load_audio(path)


def cmd_pitchgram(args) -> int:
    analysis, _ = _configs(args)
    buf = _load(args.input)
    if not args.no_normalize:
        buf = normalize_rms(buf, analysis.target_dbfs)
    grid = PitchGrid.from_config(analysis, buf.sample_rate_hz)
    pg = compute_pitchgram(buf, analysis, grid)
    out = Path(args.output or Path(args.input).with_suffix(".pgm"))
    save_pgrm(pg, out)
    if args.csv:
        save_csv(pg, args.csv)
    log.info("wrote %s (%d frames x %d pitches)", out, *pg.shape)
    return 0


def cmd_transcribe(args) -> int:
    analysis, transcriber = _configs(args)
    buf = _load(args.input)
    result = transcribe_audio(buf, analysis, transcriber, normalize=not args.no_normalize)
    out = Path(args.output or Path(args.input).with_suffix(".mid"))
    export_midi(result.notes, result.frame_period_s, out)
    print(f"notes={len(result.notes)}")
    if args.timing:
        for stage, seconds in result.timings.items():
            print(f"time_{stage}_s={seconds:.4f}")
        print(f"audio_s={result.audio_s:.4f}")
        print(f"real_time_factor={result.real_time_factor:.4f}")
    return 0


def cmd_eval(args) -> int:
    for path in (args.detected, args.reference):
        if not Path(path).is_file():
            raise CliError(f"MIDI file not found: {path}")
    det = read_midi_notes(args.detected)
    ref = read_midi_notes(args.reference)
    if not ref:
        raise CliError(f"reference has no notes: {args.reference}")
    step = parse_grid(args.grid)
    if args.pitch_range:
        lo, hi = args.pitch_range
    else:
        pitches = [n[2] for n in det + ref]
        lo, hi = min(pitches), max(pitches)
    total = max(n[1] for n in det + ref)
    det_mask = notes_to_mask(det, step, (lo, hi), total)
    ref_mask = notes_to_mask(ref, step, (lo, hi), total)
    report = evaluate(det_mask, ref_mask, weighted=args.weighted)
    print(f"grid_s={step:.6g}")
    sys.stdout.write(report.to_text())
    return 0


def cmd_synth(args) -> int:
    path = Path(args.spec)
    if not path.is_file():
        raise CliError(f"spec file not found: {path}")
    specs = read_tone_specs(path)
    if not specs:
        raise CliError(f"no tones in spec file: {path}")
    buf, notes = synthesize(specs, args.sample_rate, frame_period_s=_REF_STEP_S)
    out = Path(args.output or path.with_suffix(".wav"))
    save_wav(buf, out)
    midi = Path(args.midi or out.with_suffix(".mid"))
    export_midi(notes, _REF_STEP_S, midi)
    log.info("wrote %s and %s", out, midi)
    return 0


def _analysis_flags(p: argparse.ArgumentParser, variant: bool = False):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--domain", choices=("time", "freq"))
    if variant:
        p.add_argument("--variant", choices=("weighted", "invariant"))
    p.add_argument("--kernel", choices=("bident", "sinc"))
    p.add_argument("--hop", type=int)
    p.add_argument("--dft-size", dest="dft_size", type=int)
    p.add_argument("--pitch-range", dest="pitch_range", type=_pitch_range, metavar="LO-HI")
    p.add_argument("--tuning", type=float, metavar="HZ")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip RMS normalization of the input")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chromabident", description="Pitchgram analysis and transcription of tonal audio.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pitchgram", help="compute a pitchgram container")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--csv", help="also write the scores as CSV")
    _analysis_flags(p, variant=True)
    p.set_defaults(func=cmd_pitchgram)

    p = sub.add_parser("transcribe", help="audio to MIDI")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--timing", action="store_true", help="print stage times and real-time factor")
    _analysis_flags(p)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("eval", help="score a detected MIDI file against a reference")
    p.add_argument("detected")
    p.add_argument("reference")
    p.add_argument("--grid", default="23.2ms", help="e.g. 0.05s, 23.2ms or 120bpm:1/32")
    p.add_argument("--pitch-range", dest="pitch_range", type=_pitch_range, metavar="LO-HI")
    p.add_argument("--weighted", action="store_true", help="velocity-weighted precision")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="render a tone spec file to WAV and reference MIDI")
    p.add_argument("spec")
    p.add_argument("-o", "--output")
    p.add_argument("--midi", help="reference MIDI path (default: next to the WAV)")
    p.add_argument("--sample-rate", dest="sample_rate", type=int, default=44100)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        with sp_fft.set_workers(_threads()):
            return args.func(args)
    except (CliError, ConfigError, EvalError, AudioError, MidiError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
