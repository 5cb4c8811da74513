import struct

import mido
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.io import wavfile

from chromabident.signal_io import (AudioBuffer, AudioError, MidiError, NoteEvent, SynthesisError,
                                    ToneSpec, export_midi, format_tone_specs, import_midi,
                                    load_audio, normalize_rms, parse_tone_specs, read_midi_notes,
                                    save_wav, synthesize)

FS = 44100


# --------------------------------------------------------------------------
# types

def test_audio_buffer_rejects_bad_input():
    with pytest.raises(AudioError):
        AudioBuffer([], FS)
    with pytest.raises(AudioError):
        AudioBuffer([0.0, np.nan], FS)
    with pytest.raises(AudioError):
        AudioBuffer([0.0], 0)


def test_note_event_invariants():
    with pytest.raises(ValueError):
        NoteEvent(5, 60, 5)
    with pytest.raises(ValueError):
        NoteEvent(0, 128, 4)
    with pytest.raises(ValueError):
        NoteEvent(0, 60, 4, velocity=0)
    assert NoteEvent(2, 60, 7).duration == 5


def test_tone_spec_partials_strictly_decrease():
    amps = ToneSpec(57, 0, 1, partial_count=6, partial_decay_ratio=0.7).partial_amplitudes()
    assert np.all(np.diff(amps) < 0)


# --------------------------------------------------------------------------
# WAV

def test_load_pcm16_peak(tmp_path):
    path = tmp_path / "peak.wav"
    wavfile.write(path, FS, np.array([0, 32767, -100], dtype=np.int16))
    buf = load_audio(path)
    assert buf.samples.max() == pytest.approx(0.99997, abs=1e-5)
    assert buf.sample_rate_hz == FS


def test_load_stereo_mean_downmix(tmp_path):
    path = tmp_path / "st.wav"
    data = np.tile(np.array([[0.5, -0.5]], dtype=np.float32), (100, 1))
    wavfile.write(path, FS, data)
    assert np.all(load_audio(path).samples == 0.0)


def test_load_truncated_header(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFF\x10\x00\x00\x00WAVEfmt ")
    with pytest.raises(AudioError, match="unreadable file"):
        load_audio(path)


def test_load_zero_length(tmp_path):
    path = tmp_path / "empty.wav"
    wavfile.write(path, FS, np.zeros(0, dtype=np.int16))
    with pytest.raises(AudioError, match="zero-length"):
        load_audio(path)


def test_load_24bit(tmp_path):
    # hand-built 24-bit PCM: one sample at half scale
    path = tmp_path / "24.wav"
    sample = (2 ** 22).to_bytes(3, "little", signed=True)
    fmt = struct.pack("<HHIIHH", 1, 1, FS, FS * 3, 3, 24)
    body = b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", 3) + sample
    path.write_bytes(b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body)
    assert load_audio(path).samples[0] == pytest.approx(0.5)


@given(st.lists(st.integers(-32768, 32767), min_size=1, max_size=200))
def test_pcm16_roundtrip_is_sample_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("wav") / "x.wav"
    wavfile.write(path, FS, np.array(values, dtype=np.int16))
    first = load_audio(path)
    save_wav(first, path)
    second = load_audio(path)
    np.testing.assert_array_equal(first.samples, second.samples)


# --------------------------------------------------------------------------
# normalization

def test_normalize_sine_to_minus_20():
    t = np.arange(FS) / FS
    buf = AudioBuffer(np.sin(2 * np.pi * 441 * t), FS)
    out = normalize_rms(buf, -20.0)
    assert np.max(np.abs(out.samples)) == pytest.approx(0.1 * np.sqrt(2), rel=1e-4)
    assert out.rms() == pytest.approx(0.1, rel=1e-6)


def test_normalize_silence_errors():
    with pytest.raises(AudioError, match="silent"):
        normalize_rms(AudioBuffer(np.zeros(10), FS))


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=64)
       .filter(lambda v: np.sqrt(np.mean(np.square(v))) > 1e-6),
       st.floats(-40, 0))
def test_normalize_idempotent_and_polarity(values, target):
    buf = AudioBuffer(values, FS)
    once = normalize_rms(buf, target)
    assert once.rms() == pytest.approx(10 ** (target / 20), rel=1e-6)
    np.testing.assert_allclose(normalize_rms(once, target).samples, once.samples, rtol=1e-6)
    flipped = normalize_rms(buf.scaled(-1.0), target)
    np.testing.assert_allclose(flipped.samples, -once.samples, rtol=1e-12)


# --------------------------------------------------------------------------
# MIDI

def test_export_single_note_times(tmp_path):
    path = tmp_path / "a.mid"
    export_midi([NoteEvent(0, 69, 10, 90)], 0.0232, path)
    mid = mido.MidiFile(path)
    assert mid.type == 0 and len(mid.tracks) == 1
    assert read_midi_notes(path) == [pytest.approx((0.0, 0.232, 69, 90), abs=2e-3)]


def test_export_empty_is_valid(tmp_path):
    path = tmp_path / "e.mid"
    export_midi([], 0.0232, path)
    assert read_midi_notes(path) == []


def test_export_rejects_overlap(tmp_path):
    with pytest.raises(MidiError):
        export_midi([NoteEvent(0, 60, 10), NoteEvent(5, 60, 12)], 0.01, tmp_path / "o.mid")


@given(st.lists(st.tuples(st.integers(0, 200), st.integers(1, 30), st.integers(30, 90),
                          st.integers(1, 127)), max_size=12))
def test_midi_roundtrip(tmp_path_factory, raw):
    # build non-overlapping notes per pitch
    notes, busy = [], {}
    for on, dur, p, v in raw:
        if on >= busy.get(p, 0):
            notes.append(NoteEvent(on, p, on + dur, v))
            busy[p] = on + dur
    path = tmp_path_factory.mktemp("mid") / "r.mid"
    fp = 1024 / 44100
    export_midi(notes, fp, path)
    assert import_midi(path, fp) == sorted(notes)


def test_import_unmatched_note_on(tmp_path):
    track = mido.MidiTrack([mido.Message("note_on", note=60, velocity=64, time=0)])
    mid = mido.MidiFile(type=0)
    mid.tracks.append(track)
    path = tmp_path / "u.mid"
    mid.save(path)
    with pytest.raises(MidiError, match="unmatched"):
        import_midi(path, 0.01)


def test_import_malformed(tmp_path):
    path = tmp_path / "m.mid"
    path.write_bytes(b"MThd garbage")
    with pytest.raises(MidiError):
        read_midi_notes(path)


def test_import_tempo_change_mid_note(tmp_path):
    # 480 ticks at 120 BPM (0.5 s), tempo halves, then 480 ticks at 60 BPM (1 s)
    track = mido.MidiTrack([
        mido.MetaMessage("set_tempo", tempo=500000, time=0),
        mido.Message("note_on", note=64, velocity=80, time=0),
        mido.MetaMessage("set_tempo", tempo=1000000, time=480),
        mido.Message("note_off", note=64, velocity=0, time=480),
    ])
    mid = mido.MidiFile(type=0, ticks_per_beat=480)
    mid.tracks.append(track)
    path = tmp_path / "t.mid"
    mid.save(path)
    (on, off, pitch, vel), = read_midi_notes(path)
    assert (on, pitch, vel) == (0.0, 64, 80)
    assert off == pytest.approx(1.5)


# --------------------------------------------------------------------------
# synthesis

def _spectrum_peaks(x, freqs):
    X = np.abs(np.fft.rfft(x)) * 2 / x.size
    f = np.fft.rfftfreq(x.size, 1 / FS)
    return [X[np.argmin(np.abs(f - fq))] for fq in freqs]


def test_synth_pure_a440():
    buf, notes = synthesize([ToneSpec(69, 0.0, 1.0, partial_count=1, amplitude=1.0,
                                      release_s=0.0)], total_s=1.0)
    t = np.arange(FS) / FS
    np.testing.assert_allclose(buf.samples, np.sin(2 * np.pi * 440 * t), atol=1e-9)
    assert notes[0].pitch == 69


def test_synth_partials_220_440_660():
    buf, _ = synthesize([ToneSpec(57, 0.0, 1.0, partial_count=3, partial_decay_ratio=0.5,
                                  amplitude=1.0, release_s=0.0)], total_s=1.0)
    np.testing.assert_allclose(_spectrum_peaks(buf.samples, [220, 440, 660]),
                               [1.0, 0.5, 0.25], atol=1e-6)


def test_synth_aliasing_error():
    with pytest.raises(SynthesisError, match="aliasing"):
        synthesize([ToneSpec(100, 0.0, 0.1, partial_count=10)])


@given(st.integers(45, 80), st.integers(1, 8), st.floats(0.3, 1.0))
def test_synth_power_matches_partial_sum(p, k, ratio):
    spec = ToneSpec(p, 0.0, 1.0, partial_count=k, partial_decay_ratio=ratio, release_s=0.0)
    buf, _ = synthesize([spec], total_s=1.0)
    expected = np.sum(spec.partial_amplitudes() ** 2) / 2
    # Parseval on the DFT of the rendered signal
    X = np.fft.fft(buf.samples)
    power = np.sum(np.abs(X) ** 2) / buf.samples.size ** 2
    assert power == pytest.approx(expected, rel=0.01)


def test_synth_reference_notes():
    buf, notes = synthesize([ToneSpec(60, 0.5, 0.25, amplitude=1.0)], frame_period_s=0.05)
    assert notes == [NoteEvent(10, 60, 15, 127)]


def test_tone_spec_text_roundtrip():
    specs = [ToneSpec(57, 0.2, 0.5), ToneSpec(62, 0.8, 0.4, vibrato_extent_cents=50,
                                              vibrato_rate_hz=5, envelope_decay=1.5)]
    again = parse_tone_specs(format_tone_specs(specs))
    assert again == specs


def test_tone_spec_text_errors():
    with pytest.raises(ValueError, match="missing"):
        parse_tone_specs("pitch = 60\n")
    with pytest.raises(ValueError, match="unknown key"):
        parse_tone_specs("pitch = 60\nonset = 0\nduration = 1\ncolour = red\n")
    assert parse_tone_specs("# nothing\n\n") == []
