import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from chromabident.config import AnalysisConfig, ConfigError, TranscriberConfig
from chromabident.corpus import tremolo_lick, vibrato_lick
from chromabident.pipeline import analyze, transcribe_audio
from chromabident.pitchgram import Pitchgram
from chromabident.signal_io import AudioBuffer, ToneSpec, synthesize
from chromabident.transcriber import (TrackState, causal_smooth, decay_decision, frame_shift,
                                      normalized_derivative, normalized_derivative_matrix,
                                      onset_decision, prune, rise_start, transcribe,
                                      transient_score, velocity, vibrato_level)
from chromabident.signal_io import NoteEvent

CFG = TranscriberConfig()


def pg(scores, lo=40, variant="invariant"):
    """Pitchgram on a unit hop so that frame stamps are not shifted."""
    scores = np.asarray(scores, dtype=float)
    return Pitchgram(scores, np.arange(lo, lo + scores.shape[1]), hop=1, frame_length=1,
                     sample_rate_hz=44100, variant=variant)


def pair(scores, lo=40):
    return pg(scores, lo, "weighted"), pg(scores, lo)


def octave_overlaps(notes):
    """Notes that start while a note an octave below is sounding."""
    bad = []
    for n in notes:
        for q in notes:
            if q.pitch == n.pitch - 12 and q.onset_frame <= n.onset_frame < q.offset_frame:
                bad.append((q, n))
    return bad


# --------------------------------------------------------------------------
# derivatives

def test_normalized_derivative_constant_is_zero():
    Y = np.full((10, 2), 0.4)
    assert normalized_derivative(Y, 0, 6, CFG) == 0.0
    np.testing.assert_allclose(normalized_derivative_matrix(Y, CFG)[3:], 0.0)


def test_normalized_derivative_step_with_ma3():
    # 0, 0, 0, c: difference c over a three-frame mean of c / 3
    Y = np.zeros((4, 1))
    Y[3] = 0.7
    assert normalized_derivative(Y, 0, 3, CFG) == pytest.approx(3.0)
    assert normalized_derivative_matrix(Y, CFG)[3, 0] == pytest.approx(3.0)


def test_normalized_derivative_needs_history():
    with pytest.raises(ValueError):
        normalized_derivative(np.ones((3, 1)), 0, 0, CFG)


def test_normalized_derivative_nonpositive_mean_is_zero():
    Y = np.array([[-1.0], [-0.5], [-0.2]])
    assert normalized_derivative(Y, 0, 2, CFG) == 0.0


@given(arrays(np.float64, (12, 3), elements=st.floats(0.01, 1)), st.floats(0.01, 100))
def test_normalized_derivative_scale_invariant(Y, k):
    np.testing.assert_allclose(normalized_derivative_matrix(k * Y, CFG),
                               normalized_derivative_matrix(Y, CFG), rtol=1e-9, atol=1e-12)


@given(arrays(np.float64, (12, 2), elements=st.floats(0.01, 1)), st.integers(1, 11))
def test_pointwise_and_matrix_forms_agree(Y, m):
    for kind in ("moving-average", "median"):
        cfg = CFG.replace(smoother=kind)
        assert normalized_derivative(Y, 1, m, cfg) == pytest.approx(
            normalized_derivative_matrix(Y, cfg)[m, 1], rel=1e-9, abs=1e-12)


def test_causal_smooth_uses_only_past():
    Y = np.arange(6.0)[:, None]
    out = causal_smooth(Y, 3)
    np.testing.assert_allclose(out[:, 0], [0, 1 / 3, 1, 2, 3, 4])
    med = causal_smooth(np.array([0, 0, 9, 0, 0, 0.0])[:, None], 3, "median")
    np.testing.assert_allclose(med[:, 0], 0.0)


# --------------------------------------------------------------------------
# onset rule

def onset_fixture():
    Y = np.zeros((3, 30))
    Y[2, 15] = 0.8
    Y[2, 14] = Y[2, 16] = 0.1
    return Y


def test_onset_isolated_peak():
    Y = onset_fixture()
    D = normalized_derivative_matrix(Y, CFG)
    assert onset_decision(Y, D, TrackState(30), 2, 15, CFG)
    # the neighbours are not local maxima
    assert not onset_decision(Y, D, TrackState(30), 2, 14, CFG)


def test_onset_needs_level_and_slope():
    Y = onset_fixture()
    D = normalized_derivative_matrix(Y, CFG)
    assert not onset_decision(Y, D, None, 2, 15, CFG.replace(eps1=0.9, ambiguity_hi=0.9))
    flat = np.tile(Y[2], (3, 1))
    assert not onset_decision(flat, normalized_derivative_matrix(flat, CFG), None, 2, 15, CFG)


def test_onset_blocked_by_active_octave_below():
    Y = onset_fixture()
    D = normalized_derivative_matrix(Y, CFG)
    state = TrackState(30)
    state.start(3, 0)
    assert not onset_decision(Y, D, state, 2, 15, CFG)
    assert onset_decision(Y, D, state, 2, 15, CFG.replace(octave_rule=False))


def test_onset_blocked_by_neighbour_spread():
    # the neighbour rose by more and holds the higher score
    Y = onset_fixture()
    Y[2, 16] = 0.9
    D = normalized_derivative_matrix(Y, CFG)
    assert not onset_decision(Y, D, None, 2, 15, CFG)
    assert onset_decision(Y, D, None, 2, 16, CFG)


def test_onset_dominance():
    Y = onset_fixture()
    Y[2, 25] = 2.0
    D = normalized_derivative_matrix(Y, CFG)
    assert not onset_decision(Y, D, None, 2, 15, CFG)
    assert onset_decision(Y, D, None, 2, 15, CFG.replace(dominance=0.0))


def test_rise_start_backtracks_along_rise():
    Y = np.zeros((8, 1))
    Y[3:, 0] = [0.1, 0.3, 0.6, 0.8, 0.9]
    assert rise_start(Y, 6, 0, CFG) == 3
    assert rise_start(Y, 6, 0, CFG.replace(onset_backtrack=0)) == 6
    assert rise_start(Y, 6, 0, CFG, floor=4) == 5


# --------------------------------------------------------------------------
# decay rule

def test_decay_on_collapse():
    Y = np.zeros((6, 5))
    Y[:3, 2] = 0.8
    D = normalized_derivative_matrix(Y, CFG)
    assert decay_decision(Y, D, None, 3, 2, CFG)
    # a score that was never high has no falling slope
    assert not decay_decision(np.zeros((6, 5)), np.zeros((6, 5)), None, 3, 2, CFG)


def test_decay_slope_memory():
    Y = np.zeros((12, 3))
    Y[:3, 1] = 0.8
    D = normalized_derivative_matrix(Y, CFG)
    cfg = CFG.replace(decay_memory=2)
    assert decay_decision(Y, D, None, 4, 1, cfg)
    assert not decay_decision(Y, D, None, 8, 1, cfg)


def test_vibrato_neighbour_keeps_note_alive():
    # the pitch wandered a semitone up: the sum stays above eps3
    Y = np.zeros((6, 5))
    Y[:3, 2] = 0.8
    Y[3:, 3] = 0.5
    D = normalized_derivative_matrix(Y, CFG)
    assert not decay_decision(Y, D, TrackState(5), 3, 2, CFG)
    assert decay_decision(Y, D, TrackState(5), 3, 2, CFG.replace(vibrato_guard=False))


def test_vibrato_level_skips_active_neighbours():
    Y = np.zeros((1, 5))
    Y[0, 1], Y[0, 3] = 0.2, 0.5
    state = TrackState(5)
    assert vibrato_level(Y, state, 0, 2) == 0.5
    state.start(3, 0)
    assert vibrato_level(Y, state, 0, 2) == 0.2
    # pitch 4 is active: neighbour 3 carries that note, not p = 2
    state.stop(3)
    state.start(4, 0)
    assert vibrato_level(Y, state, 0, 2) == 0.2


# --------------------------------------------------------------------------
# prune, velocity, transient score

def test_prune_boundary():
    notes = [NoteEvent(0, 60, 4), NoteEvent(0, 61, 5), NoteEvent(10, 62, 30)]
    assert prune(notes, CFG) == notes[1:]
    assert prune([], CFG) == []


def test_velocity_mapping():
    Yw = np.array([[0.0, 0.5, 2.0]])
    cfg = CFG.replace(velocity_scale=100.0)
    assert velocity(Yw, 0, 0, cfg) == 1
    assert velocity(Yw, 0, 1, cfg) == 50
    assert velocity(Yw, 0, 2, cfg) == 127
    assert velocity(Yw, 0, 1, cfg, scale=20.0) == 10


def test_transient_score_positive_part():
    Y = np.array([[0.5, -0.3, 0.2], [0.0, 0.0, 0.0], [-1.0, -1.0, -1.0]])
    np.testing.assert_allclose(transient_score(Y), [0.7, 0.0, 0.0])
    np.testing.assert_allclose(transient_score(Y[:, :1]), [0.5, 0.0, 0.0])


# --------------------------------------------------------------------------
# driver on synthetic pitchgrams

def block_scores(n_frames=40, n_pitches=30, notes=((5, 15, 25),), level=0.8):
    Y = np.full((n_frames, n_pitches), -0.05)
    for on, p, off in notes:
        Y[on:off, p] = level
    return Y


def test_driver_single_block():
    Yw, Yi = pair(block_scores())
    (n,) = transcribe(Yw, Yi, CFG)
    assert (n.onset_frame, n.pitch, n.offset_frame) == (5, 55, 25)
    assert n.velocity == 127


def test_driver_silence_is_empty():
    Yw, Yi = pair(np.zeros((40, 30)))
    assert transcribe(Yw, Yi, CFG) == []


def test_driver_shift_and_mismatch():
    Yw, Yi = pair(block_scores())
    assert transcribe(Yw, Yi, CFG, shift=3)[0].onset_frame == 8
    with pytest.raises(ValueError):
        transcribe(Yw, pg(np.zeros((39, 30))), CFG)


def test_driver_octave_rule_suppresses_upper_octave():
    Y = block_scores(notes=((5, 3, 30), (10, 15, 30)))
    Yw, Yi = pair(Y)
    assert [n.pitch for n in transcribe(Yw, Yi, CFG.replace(dominance=0.0))] == [43]
    both = transcribe(Yw, Yi, CFG.replace(dominance=0.0, octave_rule=False))
    assert sorted(n.pitch for n in both) == [43, 55]


def test_driver_frame_shift_default():
    Y = block_scores()
    Yw = Pitchgram(Y, np.arange(40, 70), hop=1024, frame_length=6955, sample_rate_hz=44100)
    Yi = Pitchgram(Y, np.arange(40, 70), hop=1024, frame_length=6955, sample_rate_hz=44100,
                   variant="invariant")
    assert frame_shift(Yi) == 6
    assert transcribe(Yw, Yi, CFG)[0].onset_frame == 11


score_matrices = arrays(np.float64, st.tuples(st.integers(8, 40), st.just(26)),
                        elements=st.floats(-0.3, 1.0))


@settings(max_examples=60)
@given(score_matrices)
def test_driver_invariants(Y):
    Yw, Yi = pair(Y)
    cfg = CFG.replace(velocity_scale=60.0)
    notes = transcribe(Yw, Yi, cfg)
    assert notes == transcribe(Yw, Yi, cfg)
    assert all(n.duration > cfg.d_min for n in notes)
    assert all(1 <= n.velocity <= 127 for n in notes)
    assert octave_overlaps(notes) == []
    # no overlapping notes on one pitch
    for p in {n.pitch for n in notes}:
        ns = [n for n in notes if n.pitch == p]
        assert all(a.offset_frame <= b.onset_frame for a, b in zip(ns, ns[1:]))


@settings(max_examples=60)
@given(score_matrices, st.integers(1, 40))
def test_driver_is_causal(Y, k):
    """Notes that ended before frame k do not depend on frames >= k."""
    k = min(k, Y.shape[0])
    cfg = CFG.replace(velocity_scale=60.0)
    full = transcribe(*pair(Y), cfg)
    head = transcribe(*pair(Y[:k]), cfg)
    assert [n for n in full if n.offset_frame < k] == [n for n in head if n.offset_frame < k]


# --------------------------------------------------------------------------
# audio end to end

@pytest.fixture(scope="module")
def lick():
    specs = [ToneSpec(57, 0.2, 0.5), ToneSpec(60, 0.7, 0.5), ToneSpec(64, 1.2, 0.5)]
    return synthesize(specs, total_s=2.0)


def test_three_note_lick(lick):
    buf, ref = lick
    for domain in ("time", "freq"):
        notes = transcribe_audio(buf, AnalysisConfig(domain=domain)).notes
        assert [n.pitch for n in notes] == [57, 60, 64]
        for n, r in zip(notes, ref):
            assert abs(n.onset_frame - r.onset_frame) <= 1


def test_gain_invariant_segmentation(lick):
    buf, _ = lick
    cfg = CFG.replace(velocity_scale=100.0)
    loud = transcribe_audio(buf, transcriber=cfg, normalize=False).notes
    quiet = transcribe_audio(buf.scaled(0.25), transcriber=cfg, normalize=False).notes
    assert [(n.onset_frame, n.pitch, n.offset_frame) for n in loud] == \
        [(n.onset_frame, n.pitch, n.offset_frame) for n in quiet]
    assert all(q.velocity < n.velocity for n, q in zip(loud, quiet))


def test_silent_audio_is_empty():
    Yw, Yi = analyze(AudioBuffer(np.zeros(44100), 44100), normalize=False)
    assert transcribe(Yw, Yi, CFG) == []


def test_tremolo_restrikes():
    buf, ref = tremolo_lick().render()
    Yw, Yi = analyze(buf)
    assert len(transcribe(Yw, Yi, CFG)) == len(ref) == 8
    assert len(transcribe(Yw, Yi, CFG.replace(transient_gate=False))) == 1


def test_vibrato_single_event_per_note():
    buf, ref = vibrato_lick().render()
    notes = transcribe_audio(buf).notes
    assert [n.pitch for n in notes] == [r.pitch for r in ref]


# --------------------------------------------------------------------------
# configuration

@pytest.mark.parametrize("bad", [dict(eps1=0.05, eps3=0.08), dict(eps2=0.0), dict(eps4=0.1),
                                 dict(d_min=0), dict(smoother_length=4), dict(smoother="mean"),
                                 dict(velocity_mode="peak"), dict(dominance=1.5),
                                 dict(eps4_weighted=0.1), dict(ambiguity_hi=0.01)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        TranscriberConfig(**bad)
