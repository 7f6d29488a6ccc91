import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from breathnet.data import (ManifestEntry, PairManifest, SynthConfig, burst_frame_labels,
                            frame_breath_labels, load_pair, read_manifest, split_corpus,
                            synth_pair, write_manifest, write_synthetic_corpus)
from breathnet.dsp import AudioClip, MagnitudeSpectrogram, SpectrogramConfig, stft
from breathnet.errors import ConfigurationError, InputError
from breathnet.wavio import write_wav

SYNTH = SynthConfig(seed=11)


def fake_manifest(durations):
    return PairManifest(tuple(ManifestEntry(f"in{i}", f"tg{i}", d) for i, d in enumerate(durations)))


@pytest.fixture(scope="module")
def corpus():
    return [synth_pair(SYNTH, i) for i in range(6)]


# -- split_corpus -----------------------------------------------------------------------------

def test_hundred_equal_clips_split_80_11_9():
    s = split_corpus(fake_manifest([3.0] * 100), seed=0)
    assert (len(s.train), len(s.validation), len(s.test)) == (80, 11, 9)


def test_single_clip_lands_in_train_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="breathnet"):
        s = split_corpus(fake_manifest([3.0]), seed=0)
    assert (s.train, s.validation, s.test) == ([0], [], [])
    assert "empty" in caplog.text


def test_desk_corpus_split():
    s = split_corpus(fake_manifest([4.0] * 8), seed=0)
    assert (len(s.train), len(s.validation), len(s.test)) == (6, 1, 1)


def test_split_is_seeded():
    m = fake_manifest(np.random.default_rng(0).uniform(1, 10, 30))
    assert split_corpus(m, seed=4) == split_corpus(m, seed=4)
    assert split_corpus(m, seed=4) != split_corpus(m, seed=5)


def test_split_follows_duration_not_count():
    durations = np.random.default_rng(7).uniform(0.5, 20.0, 200)
    s = split_corpus(fake_manifest(durations), seed=1)
    for part, share in zip((s.train, s.validation, s.test), (0.80, 0.11, 0.09)):
        # greedy assignment overshoots a target by at most one clip
        assert abs(durations[part].sum() - share * durations.sum()) <= durations.max()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.1, 100), min_size=1, max_size=60), st.integers(0, 2**32 - 1))
def test_split_is_disjoint_and_exhaustive(durations, seed):
    s = split_corpus(fake_manifest(durations), seed=seed)
    ids = s.train + s.validation + s.test
    assert sorted(ids) == list(range(len(durations)))
    assert abs(sum(s.fractions) - 1.0) <= 1e-9


def test_split_errors():
    with pytest.raises(InputError):
        split_corpus(fake_manifest([]))
    with pytest.raises(ConfigurationError):
        split_corpus(fake_manifest([1.0]), fractions=(0.5, 0.5, 0.5))


# -- synth_pair ---------------------------------------------------------------------------------

def test_difference_is_zero_outside_bursts(corpus):
    for p in corpus:
        diff = p.input.samples - p.target.samples
        outside = np.ones(len(diff), bool)
        for s, e in p.bursts:
            outside[s:e] = False
            assert np.sqrt(np.mean(diff[s:e] ** 2)) > 0
        # the two clips share one scale factor, so the difference is exact up to rounding
        assert np.max(np.abs(diff[outside])) < 1e-12


def test_peak_and_energy(corpus):
    for p in corpus:
        assert np.max(np.abs(p.input.samples)) == pytest.approx(0.9, abs=1e-12)
        assert np.sum(p.target.samples ** 2) <= np.sum(p.input.samples ** 2)


def test_bursts_sit_inside_pauses(corpus):
    for p in corpus:
        for s, e in p.bursts:
            for a, b in p.speech:
                assert e <= a or s >= b


def test_bursts_follow_the_config(corpus):
    sr = SYNTH.sample_rate
    for p in corpus:
        assert len(p.bursts) == SYNTH.bursts_per_clip
        for s, e in p.bursts:
            assert SYNTH.burst_min_seconds - 1 / sr <= (e - s) / sr <= SYNTH.burst_max_seconds + 1 / sr


def test_breath_energy_is_in_band(corpus):
    sr = SYNTH.sample_rate
    diff = corpus[0].input.samples - corpus[0].target.samples
    power = np.abs(np.fft.rfft(diff)) ** 2
    freqs = np.fft.rfftfreq(len(diff), 1 / sr)
    band = (freqs >= SYNTH.band_low) & (freqs <= SYNTH.band_high)
    assert power[band].sum() / power.sum() > 0.9


def test_breath_gain_relative_to_speech(corpus):
    p = corpus[0]
    diff = p.input.samples - p.target.samples
    burst = np.concatenate([diff[s:e] for s, e in p.bursts])
    speech = np.concatenate([p.target.samples[a:b] for a, b in p.speech])
    # room tone is 43 dB below the breath, so it barely moves the speech RMS
    level = 20 * np.log10(np.sqrt(np.mean(burst ** 2)) / np.sqrt(np.mean(speech ** 2)))
    # the attack/decay envelope is applied before the gain, so the level is exact
    assert level == pytest.approx(SYNTH.breath_gain_db, abs=0.05)


def test_synth_is_deterministic_in_seed_and_index():
    a, b = synth_pair(SYNTH, 3), synth_pair(SYNTH, 3)
    np.testing.assert_array_equal(a.input.samples, b.input.samples)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = synth_pair(SYNTH, 4)
    assert not np.array_equal(a.input.samples, c.input.samples)


def test_synth_config_validation():
    for bad in (dict(f0_min=300.0, f0_max=200.0), dict(band_high=20000.0),
                dict(breath_gain_db=float("inf")), dict(headroom=0.0), dict(bursts_per_clip=-1)):
        with pytest.raises(ConfigurationError):
            SynthConfig(**bad)
    with pytest.raises(ConfigurationError):
        synth_pair(SynthConfig(clip_seconds=1.0, bursts_per_clip=4), 0)


def test_no_bursts_means_identical_clips():
    p = synth_pair(SynthConfig(bursts_per_clip=0), 0)
    np.testing.assert_array_equal(p.input.samples, p.target.samples)
    assert not p.labels.any()


# -- labels --------------------------------------------------------------------------------------

def test_burst_labels_use_the_central_half_of_each_window():
    cfg = SpectrogramConfig()
    labels = burst_frame_labels(22050, [(10240, 10241)], cfg)
    # frame k's central half covers samples [512 k - 1024, 512 k + 1024)
    assert np.flatnonzero(labels).tolist() == [19, 20, 21, 22]


def mags(x, cfg=SpectrogramConfig()):
    return MagnitudeSpectrogram(np.abs(stft(AudioClip(x, 22050), cfg).data), cfg)


def test_identical_inputs_have_no_breath_frames():
    x = np.random.default_rng(0).standard_normal(22050) * 0.1
    assert not frame_breath_labels(mags(x), mags(x)).any()


def test_loud_frame_removed_entirely_is_breath():
    x = np.random.default_rng(0).standard_normal(22050) * 0.1
    labels = frame_breath_labels(mags(x), mags(np.zeros_like(x)))
    assert labels.all()


def test_frames_below_the_floor_are_never_breath():
    x = np.random.default_rng(0).standard_normal(22050) * 1e-5  # about -100 dBFS
    assert not frame_breath_labels(mags(x), mags(np.zeros_like(x))).any()


def test_label_shape_mismatch():
    with pytest.raises(InputError):
        frame_breath_labels(mags(np.zeros(22050)), mags(np.zeros(11025)))


def test_magnitude_labels_agree_with_time_domain_labels(corpus):
    agree = total = 0
    for p in corpus:
        got = frame_breath_labels(mags(p.input.samples), mags(p.target.samples))
        agree += int(np.sum(got == p.labels))
        total += len(got)
    assert agree / total >= 0.95


def test_labels_are_monotone_in_theta(corpus):
    p = corpus[1]
    a, b = mags(p.input.samples), mags(p.target.samples)
    prev = None
    for theta in np.linspace(0.0, 0.99, 12):
        cur = frame_breath_labels(a, b, theta)
        if prev is not None:
            assert not np.any(cur & ~prev)
        prev = cur


# -- manifests and corpora on disk --------------------------------------------------------------

def test_written_corpus_round_trips(tmp_path):
    cfg = SynthConfig(seed=2)
    path = write_synthetic_corpus(tmp_path, 3, cfg)
    m = read_manifest(path)
    assert len(m) == 3
    assert path.read_text().splitlines()[0] == "input,target"
    pair = load_pair(m, 1)
    ref = synth_pair(cfg, 1)
    np.testing.assert_array_equal(pair.input.samples, ref.input.samples.astype(np.float32))
    rows = (tmp_path / "labels.csv").read_text().splitlines()
    assert rows[0] == "pair_index,frame_index,is_breath"
    assert len(rows) - 1 == 3 * len(ref.labels)


def test_manifest_paths_are_relative_to_the_manifest(tmp_path):
    sub = tmp_path / "audio"
    sub.mkdir()
    clip = AudioClip(np.zeros(1000), 22050)
    write_wav(sub / "a.wav", clip)
    write_wav(sub / "b.wav", clip)
    write_manifest(tmp_path / "m.csv", [ManifestEntry(str(sub / "a.wav"), str(sub / "b.wav"), 0.0)])
    assert "audio/a.wav" in (tmp_path / "m.csv").read_text()
    assert read_manifest(tmp_path / "m.csv")[0].duration_seconds == pytest.approx(1000 / 22050)


def test_manifest_errors(tmp_path):
    with pytest.raises(InputError):
        read_manifest(tmp_path / "missing.csv")
    (tmp_path / "bad.csv").write_text("a,b\nx,y\n")
    with pytest.raises(InputError):
        read_manifest(tmp_path / "bad.csv")
    write_wav(tmp_path / "a.wav", AudioClip(np.zeros(1000), 22050))
    write_wav(tmp_path / "b.wav", AudioClip(np.zeros(1000), 16000))
    write_wav(tmp_path / "c.wav", AudioClip(np.zeros(3000), 22050))
    for target in ("b.wav", "c.wav", "gone.wav"):
        (tmp_path / "m.csv").write_text(f"input,target\na.wav,{target}\n")
        with pytest.raises(InputError):
            read_manifest(tmp_path / "m.csv")


def test_empty_corpus_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING, logger="breathnet"):
        path = write_synthetic_corpus(tmp_path, 0, SynthConfig())
    assert len(read_manifest(path)) == 0
    assert "empty" in caplog.text
