"""Windowing, resampling, normalization, and sample-set persistence."""

import numpy as np
import pytest

from preictalsynth.annotations import PeriodConfig, SeizureAnnotations, annotate_periods
from preictalsynth.edf import EegRecord
from preictalsynth.errors import DataError
from preictalsynth.sampleset import (
    SampleSet,
    concat_sets,
    load_sampleset,
    parse_manifest,
    save_sampleset,
    write_manifest,
)
from preictalsynth.windows import (
    lowpass_taps,
    normalize_amplitude,
    resample,
    segment_windows,
)


def record_of(duration_s, rate=256, channels=2, seed=0):
    rng = np.random.default_rng(seed)
    n = int(duration_s * rate)
    x = rng.normal(size=(channels, n))
    names = tuple(f"ch{i}" for i in range(channels))
    calib = ((-200.0, 200.0, -32768, 32767),) * channels
    return EegRecord(samples=x, rate=rate, channels=names, start_epoch=0.0,
                     calibration=calib)


class TestSegmentation:
    def test_full_preictal_interval_window_count(self):
        # a whole 1800 s preictal span at 256 Hz gives 90 windows of 20 s
        rec = record_of(7200, rate=256, channels=22)
        ann = SeizureAnnotations([(3600.0, 3660.0)], [True])
        pm = annotate_periods(rec.duration, ann)
        out = segment_windows(rec, pm)
        pre = [i for i, l in enumerate(out.labels) if l == "preictal"]
        assert len(pre) == 90
        assert out.windows.shape[1:] == (22, 5120)
        assert all(out.seizure[i] == 0 for i in pre)
        assert out.leading == (0,)

    def test_window_counts_follow_floor_rule(self):
        rec = record_of(7200)
        ann = SeizureAnnotations([(3600.0, 3660.0)], [True])
        pm = annotate_periods(rec.duration, ann)
        out = segment_windows(rec, pm)
        expect = sum(int(iv.span // 20.0) for iv in pm.intervals
                     if iv.label in ("preictal", "interictal"))
        assert out.n == expect

    def test_short_interval_yields_nothing(self):
        rec = record_of(19, rate=16)
        pm = annotate_periods(rec.duration, SeizureAnnotations([], []))
        assert segment_windows(rec, pm).n == 0

    def test_two_windows_are_adjacent(self):
        rec = record_of(40, rate=16)
        pm = annotate_periods(rec.duration, SeizureAnnotations([], []))
        out = segment_windows(rec, pm)
        assert out.n == 2
        assert np.array_equal(out.windows[0], rec.samples[:, 0:320])
        assert np.array_equal(out.windows[1], rec.samples[:, 320:640])

    def test_windows_fall_inside_their_interval(self):
        rec = record_of(9000, rate=32, channels=1, seed=2)
        ann = SeizureAnnotations([(4000.0, 4030.0)], [True])
        pm = annotate_periods(rec.duration, ann)
        out = segment_windows(rec, pm)
        # reconstruct each window's time span from its data by matching start
        n_per = 20 * 32
        hits = {tuple(np.round(rec.samples[0, a:a + 4], 9)): a
                for a in range(0, rec.samples.shape[1] - n_per + 1)}
        for w, lab in zip(out.windows, out.labels):
            a = hits[tuple(np.round(w[0, :4], 9))]
            t0, t1 = a / 32.0, (a + n_per) / 32.0
            ok = any(iv.start <= t0 and t1 <= iv.end and iv.label == lab
                     for iv in pm.intervals)
            assert ok

    def test_preictal_distance_from_onset(self):
        # every preictal window sits >= 300 s and < 2100 s before its onset
        rec = record_of(9000, rate=32, channels=1, seed=3)
        ann = SeizureAnnotations([(4000.0, 4030.0), (8000.0, 8020.0)], [True, False])
        pm = annotate_periods(rec.duration, ann)
        out = segment_windows(rec, pm)
        n_per = 20 * 32
        starts = {tuple(np.round(rec.samples[0, a:a + 4], 9)): a
                  for a in range(0, rec.samples.shape[1] - n_per + 1)}
        onsets = {0: 4000.0, 1: 8000.0}
        seen = 0
        for w, lab, sz in zip(out.windows, out.labels, out.seizure):
            if lab != "preictal":
                continue
            seen += 1
            a = starts[tuple(np.round(w[0, :4], 9))]
            end_t = (a + n_per) / 32.0
            gap = onsets[sz] - end_t
            assert 300.0 - 1e-9 <= gap
            assert (onsets[sz] - a / 32.0) <= 2100.0 + 1e-9
        assert seen > 0

    def test_bad_window_length(self):
        rec = record_of(60, rate=16)
        pm = annotate_periods(rec.duration, SeizureAnnotations([], []))
        with pytest.raises(DataError):
            segment_windows(rec, pm, window_seconds=0)
        with pytest.raises(DataError):
            segment_windows(rec, pm, window_seconds=0.3)   # 4.8 samples


class TestResample:
    def test_constant_passes_exactly(self):
        x = np.full((3, 5120), 0.7)
        y = resample(x, 256, 100)
        assert y.shape == (3, 2000)
        assert np.allclose(y, 0.7, atol=1e-12)

    def test_length_arithmetic(self):
        assert resample(np.zeros((1, 5120)), 256, 100).shape == (1, 2000)
        assert resample(np.zeros(5120), 256, 100).shape == (2000,)
        assert resample(np.zeros((4, 2, 5120)), 256, 100).shape == (4, 2, 2000)

    def test_five_hz_sine_tracks_analytic(self):
        t = np.arange(5120) / 256.0
        x = np.sin(2 * np.pi * 5.0 * t)
        y = resample(x, 256, 100)
        t_new = np.arange(2000) / 100.0
        assert np.max(np.abs(y - np.sin(2 * np.pi * 5.0 * t_new))) < 0.02

    def test_high_frequency_attenuated(self):
        # 120 Hz is far above the 50 Hz cutoff and must mostly vanish
        t = np.arange(5120) / 256.0
        x = np.sin(2 * np.pi * 120.0 * t)
        y = resample(x, 256, 100)
        assert np.sqrt(np.mean(y ** 2)) < 0.05 * np.sqrt(0.5)

    def test_rejects_bad_rates(self):
        with pytest.raises(DataError):
            resample(np.zeros(100), 0, 10)
        with pytest.raises(DataError):
            resample(np.zeros(100), 100, -1)
        with pytest.raises(DataError):
            resample(np.zeros(100), 100, 100)

    def test_taps_unit_dc(self):
        taps = lowpass_taps(50.0, 256.0)
        assert taps.shape == (63,)
        assert taps.sum() == pytest.approx(1.0)
        assert np.allclose(taps, taps[::-1])   # linear phase


class TestNormalize:
    def test_symmetric_map(self):
        out = normalize_amplitude(np.array([[0.0, 5.0, 10.0]]))
        assert np.allclose(out, [[-1.0, 0.0, 1.0]])

    def test_constant_channel_zeroed(self):
        out = normalize_amplitude(np.array([[3.0, 3.0, 3.0], [0.0, 1.0, 2.0]]))
        assert np.allclose(out[0], 0.0)
        assert np.allclose(out[1], [-1.0, 0.0, 1.0])

    def test_idempotent_on_full_range(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(4, 50))
        x[:, 0], x[:, 1] = -1.0, 1.0
        assert np.allclose(normalize_amplitude(x), x)

    def test_bounds_attained_per_channel(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(5, 3, 100)) * rng.uniform(0.1, 40, size=(5, 3, 1))
        out = normalize_amplitude(x)
        assert np.allclose(out.min(axis=-1), -1.0)
        assert np.allclose(out.max(axis=-1), 1.0)


class TestSampleSet:
    def set_of(self, n=6, channels=2, length=40, latents=False, seed=0):
        rng = np.random.default_rng(seed)
        labels = ["preictal" if i % 2 == 0 else "interictal" for i in range(n)]
        return SampleSet(
            windows=rng.normal(size=(n, channels, length)),
            labels=labels,
            provenance=["real"] * n,
            seizure=[0 if l == "preictal" else -1 for l in labels],
            rate=100.0,
            channels=tuple(f"c{i}" for i in range(channels)),
            leading=(0,),
            latents=rng.normal(size=(n, 5)) if latents else None)

    def test_validation(self):
        good = self.set_of()
        with pytest.raises(DataError):
            SampleSet(good.windows, good.labels[:-1], good.provenance,
                      good.seizure, 100.0)
        with pytest.raises(DataError):
            SampleSet(good.windows, ["funny"] * good.n, good.provenance,
                      good.seizure, 100.0)
        with pytest.raises(DataError):
            SampleSet(good.windows, good.labels, good.provenance,
                      good.seizure, 0.0)
        with pytest.raises(DataError):
            SampleSet(good.windows[0], good.labels, good.provenance,
                      good.seizure, 100.0)

    def test_select_and_counts(self):
        s = self.set_of(latents=True)
        pre = s.select([l == "preictal" for l in s.labels])
        assert pre.n == s.count("preictal") == 3
        assert set(pre.labels) == {"preictal"}
        assert pre.latents.shape == (3, 5)
        sub = s.select([5, 0])
        assert np.array_equal(sub.windows[0], s.windows[5])

    def test_channel_slice(self):
        s = self.set_of()
        one = s.channel_slice(1)
        assert one.windows.shape == (6, 1, 40)
        assert one.channels == ("c1",)
        assert np.array_equal(one.windows[:, 0], s.windows[:, 1])
        with pytest.raises(DataError):
            s.channel_slice(2)

    def test_concat(self):
        a, b = self.set_of(seed=1), self.set_of(seed=2)
        both = concat_sets([a, b])
        assert both.n == 12
        assert np.array_equal(both.windows[:6], a.windows)
        assert both.labels == a.labels + b.labels
        with pytest.raises(DataError):
            concat_sets([a, self.set_of(length=50, seed=3)])

    def test_roundtrip(self, tmp_path):
        s = self.set_of(latents=True)
        p = str(tmp_path / "set.pfg")
        save_sampleset(s, p)
        back = load_sampleset(p)
        assert back.labels == s.labels
        assert back.provenance == s.provenance
        assert back.seizure == s.seizure
        assert back.rate == s.rate
        assert back.channels == s.channels
        assert back.leading == s.leading
        # container stores 32-bit values
        assert np.allclose(back.windows, s.windows, atol=1e-6)
        assert np.allclose(back.latents, s.latents, atol=1e-6)

    def test_roundtrip_without_latents(self, tmp_path):
        s = self.set_of()
        p = str(tmp_path / "set.pfg")
        save_sampleset(s, p)
        assert load_sampleset(p).latents is None

    def test_missing_sidecar(self, tmp_path):
        s = self.set_of()
        p = str(tmp_path / "set.pfg")
        save_sampleset(s, p)
        (tmp_path / "set.meta.json").unlink()
        with pytest.raises(DataError, match="sidecar"):
            load_sampleset(p)


class TestManifest:
    def test_parse(self):
        text = """\
# dataset pointer
subject = chb01
summary = data/chb01-summary.txt

record.0 = data/chb01_03.edf
record.1 = data/chb01_04.edf
"""
        m = parse_manifest(text)
        assert m["subject"] == "chb01"
        assert m["summary"] == "data/chb01-summary.txt"
        assert m["records"] == ["data/chb01_03.edf", "data/chb01_04.edf"]

    def test_write_then_parse(self):
        text = write_manifest({"subject": "s1", "summary": "x.txt"}, ["a.edf", "b.edf"])
        m = parse_manifest(text)
        assert m["subject"] == "s1"
        assert m["records"] == ["a.edf", "b.edf"]

    def test_bad_line(self):
        with pytest.raises(DataError, match="line 2"):
            parse_manifest("subject = x\nnonsense\n")
