import numpy as np
import pytest

from murmurlab.corpus import AssessmentClass
from murmurlab.dsp import HeartCycle


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_cycle(samples, fs=4000.0, rec_id="rec", index=0, label=None):
    return HeartCycle(recording_id=rec_id, index=index, samples=np.asarray(samples, float),
                      sample_rate=fs, label=label)


def sine_cycle(freq, duration=1.0, fs=4000.0, amplitude=1.0):
    t = np.arange(int(round(duration * fs))) / fs
    return make_cycle(amplitude * np.sin(2 * np.pi * freq * t), fs=fs)


def blobs(rng, n_per_class=100, spread=0.6, dim=4):
    """Three well-separated Gaussian blobs for learner sanity checks."""
    centers = np.array([
        [0.0, 0.0, 0.0, 0.0],
        [3.0, 3.0, 0.0, -1.0],
        [-3.0, 3.0, 1.0, 2.0],
    ])[:, :dim]
    X = np.vstack([c + spread * rng.standard_normal((n_per_class, dim)) for c in centers])
    y = np.repeat(np.arange(3), n_per_class)
    perm = rng.permutation(len(y))
    return X[perm], y[perm]


INTENSITY = {
    "mild": AssessmentClass.MILD,
    "moderate": AssessmentClass.MODERATE,
    "loud": AssessmentClass.LOUD_THRILLING,
}
