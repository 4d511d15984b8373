"""Feature extraction against analytic and statistical oracles."""

import numpy as np
import pytest

from murmurlab.corpus import MurmurIntensity
from murmurlab.features import (
    FEATURE_NAMES,
    FeatureError,
    N_FEATURES,
    extract,
    feature_rows,
    mfcc,
    pitch_chroma,
    spectral_contrast,
    spectral_features,
    time_features,
)
from murmurlab.synth import SynthSpec, generate_recording
from murmurlab.dsp import segment_recording

from conftest import make_cycle, sine_cycle

FS = 4000.0


class TestTimeFeatures:
    def test_constant_cycle_conventions(self):
        f = time_features(make_cycle(np.full(4000, 0.5)))
        assert f["amp_mean"] == pytest.approx(0.5)
        assert f["amp_variance"] == 0.0
        assert f["amp_skewness"] == 0.0
        assert f["amp_kurtosis"] == 0.0
        assert f["zero_crossing_rate"] == 0.0
        assert f["amp_entropy"] == 0.0
        assert f["crest_factor"] == pytest.approx(1.0)

    def test_unit_sine_analytic_values(self):
        f = time_features(sine_cycle(100.0, duration=1.0))
        assert f["crest_factor"] == pytest.approx(np.sqrt(2), rel=1e-3)
        assert f["pitch_hz"] == pytest.approx(100.0, abs=3.0)
        # 100 Hz sine crosses zero 200 times per second
        assert f["zero_crossing_rate"] == pytest.approx(200.0, abs=2.0)

    def test_tempo_is_inverse_duration(self):
        f = time_features(make_cycle(np.ones(3000) * 0.1))  # 0.75 s at 4 kHz
        assert f["tempo_bpm"] == pytest.approx(80.0)
        assert f["duration_s"] == pytest.approx(0.75)

    def test_moments_match_numpy(self, rng):
        x = rng.standard_normal(2048) * 0.2
        x = np.clip(x, -1, 1)
        f = time_features(make_cycle(x))
        assert f["amp_mean"] == pytest.approx(np.mean(x), abs=1e-12)
        assert f["amp_variance"] == pytest.approx(np.var(x), abs=1e-12)
        assert f["amp_p25"] == pytest.approx(np.percentile(x, 25), abs=1e-12)
        assert f["amp_mad_mean"] == pytest.approx(np.mean(np.abs(x - x.mean())), abs=1e-12)

    def test_empty_cycle_rejected(self):
        with pytest.raises(Exception):
            time_features(make_cycle(np.array([])))


class TestSpectralFeatures:
    def test_pure_tone_alignment(self):
        f = spectral_features(sine_cycle(100.0, duration=1.0))
        binw = FS / 4096  # 4000 samples zero-padded to 4096
        assert f["dominant_freq_hz"] == pytest.approx(100.0, abs=binw)
        assert f["spectral_centroid_hz"] == pytest.approx(100.0, abs=binw * 2)
        assert f["mean_freq_hz"] == pytest.approx(100.0, abs=binw * 2)
        assert f["spectral_flatness"] <= 0.05

    def test_white_noise_statistics(self):
        flat, ent = [], []
        for seed in range(100):
            x = np.random.default_rng(seed).standard_normal(2048) * 0.1
            f = spectral_features(make_cycle(np.clip(x, -1, 1)))
            flat.append(f["spectral_flatness"])
            ent.append(f["spectral_entropy"])
        assert np.mean(flat) >= 0.5
        assert np.mean(ent) >= 0.9

    def test_silence_conventions(self):
        f = spectral_features(make_cycle(np.zeros(1024)))
        assert f["spectral_energy"] == 0.0
        assert f["spectral_slope"] == 0.0
        assert f["spectral_flatness"] == 1.0
        assert f["rms"] == 0.0

    def test_parseval_energy(self, rng):
        x = np.clip(rng.standard_normal(1500) * 0.3, -1, 1)
        f = spectral_features(make_cycle(x))
        windowed = x * np.hanning(x.size)
        assert f["spectral_energy"] == pytest.approx(np.sum(windowed ** 2), rel=1e-6)
        assert f["spectral_power"] == pytest.approx(np.sum(windowed ** 2) / x.size, rel=1e-6)

    def test_rolloff_below_nyquist_and_above_centroid_for_tone(self):
        f = spectral_features(sine_cycle(250.0))
        assert 200.0 <= f["rolloff_hz"] <= 300.0

    def test_too_short_rejected(self):
        with pytest.raises(FeatureError, match="too short"):
            spectral_features(make_cycle(np.zeros(32)))


class TestMfcc:
    def test_all_zero_cycle_closed_form(self):
        coeffs = mfcc(make_cycle(np.zeros(1024)))
        # constant log-floor vector: c0 = sqrt(1/26)*26*ln(1e-10), rest 0
        expected_c0 = np.sqrt(1 / 26) * 26 * np.log(1e-10)
        assert coeffs[0] == pytest.approx(expected_c0, rel=1e-12)
        assert np.allclose(coeffs[1:], 0.0, atol=1e-12)

    def test_doubling_shifts_only_c0(self, rng):
        x = np.clip(rng.standard_normal(2000) * 0.2, -0.5, 0.5)
        base = mfcc(make_cycle(x))
        doubled = mfcc(make_cycle(2 * x))
        # all filter energies scale by 4: c0 shifts by sqrt(26)*ln(4), others fixed
        assert doubled[0] - base[0] == pytest.approx(np.sqrt(26) * np.log(4), rel=1e-9)
        assert np.allclose(doubled[1:], base[1:], atol=1e-9)

    def test_distinct_tones_differ(self):
        low = mfcc(sine_cycle(80.0))
        high = mfcc(sine_cycle(300.0))
        assert not np.allclose(low, high)

    def test_coefficient_count(self):
        assert mfcc(sine_cycle(100.0), n_coeff=13).shape == (13,)


class TestPitchChroma:
    def test_a440_concentrates_mass(self):
        chroma = pitch_chroma(sine_cycle(440.0))
        a_index = FEATURE_NAMES.index("chroma_a") - FEATURE_NAMES.index("chroma_c")
        assert chroma[a_index] >= 0.9
        assert chroma.sum() == pytest.approx(1.0)

    def test_octave_equivalence(self):
        c440 = pitch_chroma(sine_cycle(440.0))
        c880 = pitch_chroma(sine_cycle(880.0))
        assert np.argmax(c440) == np.argmax(c880)

    def test_silence_uniform(self):
        chroma = pitch_chroma(make_cycle(np.zeros(1024)))
        assert np.allclose(chroma, 1 / 12)


class TestExtract:
    def _cycle(self, seed=0):
        spec = SynthSpec(heart_rate=90, true_class=MurmurIntensity.MODERATE,
                         snr_db=20.0, seed=seed)
        rec, _ = generate_recording(spec)
        _, cycles = segment_recording(rec)
        return cycles[1]

    def test_layout_contract(self):
        fv = extract(self._cycle())
        assert fv.values.shape == (N_FEATURES,)
        assert np.all(np.isfinite(fv.values))
        assert len(FEATURE_NAMES) == N_FEATURES

    def test_determinism(self):
        c = self._cycle()
        a = extract(c)
        b = extract(c)
        assert np.array_equal(a.values, b.values)

    def test_loud_cycle_has_greater_rms(self):
        kw = dict(heart_rate=80, snr_db=20.0, seed=5)
        rms_idx = FEATURE_NAMES.index("rms")
        loud_rec, truth = generate_recording(SynthSpec(true_class=MurmurIntensity.LOUD_THRILLING, **kw))
        mild_rec, _ = generate_recording(SynthSpec(true_class=MurmurIntensity.MILD, **kw))
        loud = extract(make_cycle(loud_rec.samples[truth.s1_onsets[0]:truth.s1_onsets[1]]))
        mild = extract(make_cycle(mild_rec.samples[truth.s1_onsets[0]:truth.s1_onsets[1]]))
        assert loud.values[rms_idx] > mild.values[rms_idx]

    def test_degenerate_cycles_stay_finite(self):
        for x in (np.zeros(64), np.full(64, 0.7), np.full(200, -0.2)):
            fv = extract(make_cycle(x))
            assert np.all(np.isfinite(fv.values))

    def test_scale_covariance(self, rng):
        """Scaling samples by s scales amplitude features and leaves the
        scale-free descriptors untouched."""
        x = np.clip(rng.standard_normal(1600) * 0.15, -0.45, 0.45)
        base = extract(make_cycle(x)).values
        scaled = extract(make_cycle(2.0 * x)).values
        names = list(FEATURE_NAMES)

        def v(arr, name):
            return arr[names.index(name)]

        for name in ("amp_mean", "amp_std", "rms", "amp_max", "amp_min"):
            assert v(scaled, name) == pytest.approx(2.0 * v(base, name), rel=1e-9)
        for name in ("zero_crossing_rate", "duration_s", "tempo_bpm",
                     "dominant_freq_hz", "spectral_centroid_hz", "spectral_flatness",
                     "crest_factor"):
            assert v(scaled, name) == pytest.approx(v(base, name), rel=1e-9, abs=1e-12)
        chroma_block = slice(names.index("chroma_c"), names.index("chroma_c") + 12)
        assert np.allclose(scaled[chroma_block], base[chroma_block], rtol=1e-9)

    def test_feature_rows_schema(self):
        fv = extract(self._cycle(), sc_label=MurmurIntensity.MILD,
                     mv_label=MurmurIntensity.MODERATE)
        row = feature_rows([fv])[0]
        assert row["recording_id"] == fv.recording_id
        assert row["sc_label"] == "mild"
        assert row["mv_label"] == "moderate"
        assert row["f00"] == fv.values[0]
        assert f"f{N_FEATURES - 1:02d}" in row


class TestSpectralContrast:
    def test_contrast_shape_and_finite(self):
        c = spectral_contrast(sine_cycle(150.0))
        assert c.shape == (7,)
        assert np.all(np.isfinite(c))

    def test_tone_has_higher_contrast_than_noise(self, rng):
        tone_c = spectral_contrast(sine_cycle(200.0))
        noise = np.clip(rng.standard_normal(4000) * 0.2, -1, 1)
        noise_c = spectral_contrast(make_cycle(noise))
        # the band containing the tone shows a much larger peak/valley spread
        assert tone_c.max() > noise_c.max()
