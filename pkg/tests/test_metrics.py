import math

import numpy as np
import pytest

from audiosr import metrics


def snr_oracle(x, x_ref):
    ref = err = 0.0
    for a, b in zip(x, x_ref):
        ref += b * b
        err += (a - b) ** 2
    return min(100.0, 10.0 * math.log10(ref / err))


def lsd_oracle(x, x_ref):
    per_window = []
    for w in range(len(x) // 2048):
        fx = np.fft.rfft(x[w * 2048 : (w + 1) * 2048])
        fr = np.fft.rfft(x_ref[w * 2048 : (w + 1) * 2048])
        acc = 0.0
        for i in range(1025):
            p = max(abs(fx[i]) ** 2, 1e-10)
            p_ref = max(abs(fr[i]) ** 2, 1e-10)
            acc += math.log10(p / p_ref) ** 2
        per_window.append(math.sqrt(acc / 1025))
    return sum(per_window) / len(per_window)


class TestSnr:
    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        ref = rng.standard_normal(500)
        x = ref + 0.1 * rng.standard_normal(500)
        np.testing.assert_allclose(metrics.snr(x, ref), snr_oracle(x, ref), rtol=1e-12)

    def test_known_value(self):
        assert metrics.snr([1.0, 1.0], [1.0, 0.0]) == 0.0

    def test_exact_match_capped(self):
        x = np.sin(np.arange(100))
        assert metrics.snr(x, x) == 100.0

    def test_near_match_capped(self):
        ref = np.ones(1000)
        x = ref.copy()
        x[0] += 1e-9
        assert metrics.snr(x, ref) == 100.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        ref = rng.standard_normal(200)
        x = ref + 0.05 * rng.standard_normal(200)
        np.testing.assert_allclose(metrics.snr(3.7 * x, 3.7 * ref), metrics.snr(x, ref), rtol=1e-12)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            metrics.snr(np.ones(10), np.zeros(10))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            metrics.snr(np.ones(10), np.ones(11))


class TestLsd:
    def test_identical_signals_give_zero(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(4096)
        assert metrics.lsd(x, x) == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        ref = rng.standard_normal(4096)
        x = ref + 0.3 * rng.standard_normal(4096)
        np.testing.assert_allclose(metrics.lsd(x, ref), lsd_oracle(x, ref), rtol=1e-10)

    def test_spectral_gap_measured(self):
        # removing the top half of the spectrum must register a large distance
        rng = np.random.default_rng(4)
        ref = rng.standard_normal(2048)
        spec = np.fft.rfft(ref)
        spec[513:] = 0.0
        muffled = np.fft.irfft(spec, 2048)
        assert metrics.lsd(muffled, ref) > 1.0
        assert metrics.lsd(muffled, ref) > metrics.lsd(ref + 0.01 * rng.standard_normal(2048), ref)

    def test_silence_vs_signal_finite(self):
        rng = np.random.default_rng(5)
        ref = rng.standard_normal(2048)
        value = metrics.lsd(np.zeros(2048), ref)
        assert np.isfinite(value) and value > 0.0

    def test_symmetric_in_floor_regime(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal(2048)
        b = rng.standard_normal(2048)
        np.testing.assert_allclose(metrics.lsd(a, b), metrics.lsd(b, a), rtol=1e-12)


class TestReport:
    def _reports(self):
        return [
            metrics.ClipReport("clip_a", 21.5, 1.75, 18.25, 2.5),
            metrics.ClipReport("clip_b", 24.0, 1.25, 20.0, 2.0),
        ]

    def test_per_clip_lines(self):
        text = metrics.format_report(self._reports())
        lines = text.strip().split("\n")
        assert lines[0] == (
            "clip=clip_a snr_db=21.500000 lsd=1.750000"
            " baseline_snr_db=18.250000 baseline_lsd=2.500000"
        )
        assert len(lines) == 3

    def test_mean_line(self):
        lines = metrics.format_report(self._reports()).strip().split("\n")
        fields = dict(kv.split("=") for kv in lines[-1].split())
        assert fields["clip"] == "mean"
        assert float(fields["snr_db"]) == pytest.approx(22.75)
        assert float(fields["lsd"]) == pytest.approx(1.5)
        assert float(fields["baseline_snr_db"]) == pytest.approx(19.125)
        assert float(fields["baseline_lsd"]) == pytest.approx(2.25)

    def test_evaluate_clip_routes_metrics(self):
        rng = np.random.default_rng(7)
        hr = rng.standard_normal(2048)
        sr = hr + 0.1 * rng.standard_normal(2048)
        baseline = hr + 0.5 * rng.standard_normal(2048)
        report = metrics.evaluate_clip(sr, hr, baseline, clip_id="x")
        assert report.clip_id == "x"
        assert report.snr_db == metrics.snr(sr, hr)
        assert report.lsd == metrics.lsd(sr, hr)
        assert report.baseline_snr_db == metrics.snr(baseline, hr)
        assert report.baseline_lsd == metrics.lsd(baseline, hr)
        assert report.snr_db > report.baseline_snr_db

    def test_evaluate_clip_perfect_model(self):
        hr = np.sin(np.arange(2048) * 0.01)
        report = metrics.evaluate_clip(hr, hr, np.zeros(2048) + 0.1)
        assert report.snr_db == 100.0
        assert report.lsd == 0.0
