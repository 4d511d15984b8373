"""Synthetic heart-sound recordings with ground truth, and a simulated
rater panel.

The generator builds each cycle from an S1 burst at the cycle start, a
smaller S2 burst at 38% of the cycle, and a band-limited noise murmur filling
the S1-to-S2 interval (holosystolic).  Murmur amplitude encodes the intensity
class, so classes are separable but overlapping once ambient noise is added.
Everything is reproducible from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import (
    AssessmentClass,
    INTENSITY_ORDER,
    MurmurIntensity,
    Recording,
)
from .dsp import bandpass
from .labels import LabelMatrix

#: Murmur peak amplitude relative to the unit S1 peak, per intensity class.
#: Chosen so the classes overlap at moderate SNR and label cleaning visibly
#: matters, while S1 stays the tallest event of every cycle.
DEFAULT_MURMUR_GAIN = {
    MurmurIntensity.MILD: 0.08,
    MurmurIntensity.MODERATE: 0.2,
    MurmurIntensity.LOUD_THRILLING: 0.45,
}

#: Rater-pass column ids matching the annotation protocol: two raters do two
#: passes, a third does one.
DEFAULT_RATER_COLUMNS = ("A1", "A2", "B1", "B2", "C1")

_OFF_DOMAIN = (AssessmentClass.HEALTHY, AssessmentClass.BAD_QUALITY, AssessmentClass.OTHER)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for one synthetic recording."""

    heart_rate: float  # bpm, within [60, 160]
    true_class: MurmurIntensity
    murmur_gain: dict = field(default_factory=lambda: dict(DEFAULT_MURMUR_GAIN))
    snr_db: Optional[float] = 15.0  # None = noise-free
    duration: float = 10.0
    seed: int = 0
    sample_rate: float = 4000.0
    s2_gain: float = 0.55  # S2 peak relative to S1 peak
    start_offset: float = 0.1  # seconds of lead-in before the first S1

    def __post_init__(self):
        if not (60.0 <= self.heart_rate <= 160.0):
            raise ValueError(f"heart_rate must be in [60, 160] bpm, got {self.heart_rate}")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class GroundTruth:
    s1_onsets: np.ndarray  # sample indices of cycle starts
    true_class: MurmurIntensity


def _burst(fs: float, freq: float, duration: float, phase: float) -> np.ndarray:
    """Decaying oscillation with a short attack ramp; peak amplitude 1."""
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    env = np.exp(-t / 0.02) * np.minimum(1.0, t / 0.005)
    x = np.sin(2 * np.pi * freq * t + phase) * env
    peak = np.max(np.abs(x))
    return x / peak if peak > 0 else x


def _add(signal: np.ndarray, start: int, chunk: np.ndarray) -> None:
    stop = min(start + chunk.size, signal.size)
    if stop > start >= 0:
        signal[start:stop] += chunk[:stop - start]


def generate_recording(spec: SynthSpec, rec_id: Optional[str] = None
                       ) -> tuple[Recording, GroundTruth]:
    """Synthesize one recording and its ground-truth S1 onsets.

    Cycle starts sit on a nominal heart-rate grid with +-2.5% boundary jitter
    (cycle lengths vary by up to +-5%), so the number of S1 onsets in a
    recording is a deterministic function of heart rate and duration.
    """
    rng = np.random.default_rng(spec.seed)
    fs = spec.sample_rate
    n = int(round(spec.duration * fs))
    period = 60.0 / spec.heart_rate

    n_onsets = int(math.floor((spec.duration - spec.start_offset) / period)) + 1
    jitter = rng.uniform(-0.025, 0.025, size=n_onsets) * period
    jitter[0] = 0.0
    onsets_s = spec.start_offset + np.arange(n_onsets) * period + jitter
    onsets = np.round(onsets_s * fs).astype(np.int64)

    s1_freq = rng.uniform(60.0, 150.0)
    s2_freq = rng.uniform(60.0, 150.0)
    gain = spec.murmur_gain[spec.true_class]

    x = np.zeros(n)
    s1_len = 0.08
    s2_len = 0.06
    for i, onset in enumerate(onsets):
        cycle_s = (onsets_s[i + 1] - onsets_s[i]) if i + 1 < n_onsets else period
        _add(x, onset, _burst(fs, s1_freq, s1_len, rng.uniform(0, 2 * np.pi)))
        s2_start = int(round((onsets_s[i] + 0.38 * cycle_s) * fs))
        _add(x, s2_start, spec.s2_gain * _burst(fs, s2_freq, s2_len, rng.uniform(0, 2 * np.pi)))
        # holosystolic murmur: band-limited noise from S1 end to S2 start
        m_start = onset + int(round(s1_len * fs))
        m_len = s2_start - m_start
        noise = rng.standard_normal(max(m_len, 0))
        if m_len > 60:  # needs headroom for zero-phase filtering
            murmur = bandpass(noise, fs, 50.0, 500.0, order=4)
            peak_m = np.max(np.abs(murmur))
            if peak_m > 0:
                murmur = murmur / peak_m * gain
            ramp = np.minimum(1.0, np.minimum(np.arange(m_len), m_len - 1 - np.arange(m_len))
                              / max(1, int(0.005 * fs)))
            _add(x, m_start, murmur * ramp)

    if spec.snr_db is not None and np.isfinite(spec.snr_db):
        clean_rms = np.sqrt(np.mean(x ** 2))
        noise_rms = clean_rms / (10.0 ** (spec.snr_db / 20.0))
        x = x + rng.standard_normal(n) * noise_rms

    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak

    rec = Recording(
        id=rec_id if rec_id is not None else f"syn{spec.seed:08d}",
        samples=x,
        sample_rate=fs,
        sc_label=None,
        source="synthetic",
    )
    return rec, GroundTruth(s1_onsets=onsets, true_class=spec.true_class)


# ---------------------------------------------------------------------------
# Simulated raters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RaterModel:
    """Stochastic assessment model for one synthetic expert panel.

    Each cell independently: with ``adjacent_flip_p`` the true intensity is
    confused with an adjacent class (the middle class picks a side uniformly,
    the edge classes move to their single neighbor); with ``off_domain_p``
    one of healthy/bad_quality/other is emitted; otherwise the true class is
    reported.
    """

    adjacent_flip_p: float = 0.2
    off_domain_p: float = 0.05
    per_rater_bias: Optional[dict] = None  # column id -> ordinal shift
    seed: int = 0

    def __post_init__(self):
        for p in (self.adjacent_flip_p, self.off_domain_p):
            if not (0.0 <= p <= 1.0):
                raise ValueError("probabilities must lie in [0, 1]")
        if self.adjacent_flip_p + self.off_domain_p > 1.0:
            raise ValueError("error-mode probabilities must sum to at most 1")


def _adjacent(ordinal: int, rng: np.random.Generator) -> int:
    """A neighboring ordinal position; the middle class picks a side uniformly."""
    if ordinal == 0:
        return 1
    if ordinal == 2:
        return 1
    return 0 if rng.random() < 0.5 else 2


def simulate_raters(true_classes: Sequence[MurmurIntensity], model: RaterModel,
                    recording_ids: Optional[Sequence[str]] = None,
                    rater_columns: Sequence[str] = DEFAULT_RATER_COLUMNS) -> LabelMatrix:
    """Draw a full label matrix from the rater model."""
    rng = np.random.default_rng(model.seed)
    if recording_ids is None:
        recording_ids = [f"rec{i:04d}" for i in range(len(true_classes))]
    ordinal = {c: i for i, c in enumerate(INTENSITY_ORDER)}
    cells = []
    for true in true_classes:
        row = []
        for col in rater_columns:
            base = ordinal[true]
            if model.per_rater_bias:
                base = int(np.clip(base + model.per_rater_bias.get(col, 0), 0, 2))
            u = rng.random()
            if u < model.adjacent_flip_p:
                row.append(AssessmentClass(INTENSITY_ORDER[_adjacent(base, rng)].value))
            elif u < model.adjacent_flip_p + model.off_domain_p:
                row.append(_OFF_DOMAIN[rng.integers(0, len(_OFF_DOMAIN))])
            else:
                row.append(AssessmentClass(INTENSITY_ORDER[base].value))
        cells.append(tuple(row))
    return LabelMatrix(recording_ids=tuple(recording_ids), raters=tuple(rater_columns),
                       cells=tuple(cells))


def noisy_intensity_labels(true_classes: Sequence[MurmurIntensity], flip_p: float,
                           seed: int) -> list[MurmurIntensity]:
    """Single-pass intensity labels with adjacent-class confusion.

    Models the label assigned at the collecting site: always one of the three
    intensities, but wrong with probability ``flip_p`` (one ordinal step).
    """
    rng = np.random.default_rng(seed)
    ordinal = {c: i for i, c in enumerate(INTENSITY_ORDER)}
    out = []
    for true in true_classes:
        idx = ordinal[true]
        if rng.random() < flip_p:
            idx = _adjacent(idx, rng)
        out.append(INTENSITY_ORDER[idx])
    return out


def synth_corpus(n_per_class: Sequence[int], seed: int, snr_db: Optional[float] = 15.0,
                 heart_rate_range: tuple[float, float] = (60.0, 160.0),
                 duration: float = 10.0) -> tuple[list[Recording], list[GroundTruth]]:
    """A corpus with exact per-class counts, heart rates drawn uniformly.

    Per-recording seeds are derived from the corpus seed, so individual
    recordings are reproducible independently of generation order.
    """
    rng = np.random.default_rng(seed)
    recordings, truths = [], []
    counts = dict(zip(INTENSITY_ORDER, n_per_class))
    i = 0
    for cls in INTENSITY_ORDER:
        for _ in range(counts[cls]):
            hr = rng.uniform(*heart_rate_range)
            sub_seed = int(rng.integers(0, 2 ** 31 - 1))
            spec = SynthSpec(heart_rate=hr, true_class=cls, snr_db=snr_db,
                             duration=duration, seed=sub_seed)
            rec, truth = generate_recording(spec, rec_id=f"syn{i:04d}")
            recordings.append(rec)
            truths.append(truth)
            i += 1
    return recordings, truths
