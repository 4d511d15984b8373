"""Per-cycle audio descriptors: 68 time- and frequency-domain features.

Layout contract (order is fixed; see FEATURE_NAMES):

* 18 time-domain statistics of the amplitude series,
* 18 whole-cycle spectral descriptors,
* 13 mel-frequency cepstral coefficients,
* 12 pitch-chroma energies,
* 7 octave-band spectral contrasts.

Degenerate inputs (constants, silence) follow fixed conventions so vectors
stay finite: zero-variance skewness/kurtosis are 0, the entropy of a
single-bin histogram is 0, and the chroma of silence is uniform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.fft import dct, rfft, rfftfreq

from .corpus import MurmurIntensity
from .dsp import HeartCycle


class FeatureError(Exception):
    pass


N_TIME = 18
N_SPECTRAL = 18
N_MFCC = 13
N_CHROMA = 12
N_CONTRAST = 7
N_FEATURES = N_TIME + N_SPECTRAL + N_MFCC + N_CHROMA + N_CONTRAST  # 68

_TIME_NAMES = (
    "amp_mean", "amp_median", "amp_variance", "amp_std", "amp_skewness",
    "amp_kurtosis", "amp_p25", "amp_p75", "amp_max", "amp_min",
    "amp_mad_mean", "amp_mad_median", "duration_s", "amp_entropy",
    "zero_crossing_rate", "tempo_bpm", "pitch_hz", "crest_factor",
)
_SPECTRAL_NAMES = (
    "dominant_freq_hz", "mean_freq_hz", "spectral_entropy", "bandwidth_hz",
    "spectral_centroid_hz", "rolloff_hz", "rms", "spectral_kurtosis",
    "spectral_skewness", "spectral_flatness", "spectral_slope",
    "spectral_energy", "spectral_power", "spectral_flux",
    "contrast_mean", "contrast_std", "chroma_mean", "chroma_std",
)
_PITCH_CLASSES = ("c", "cs", "d", "ds", "e", "f", "fs", "g", "gs", "a", "as", "b")

FEATURE_NAMES: tuple[str, ...] = (
    _TIME_NAMES
    + _SPECTRAL_NAMES
    + tuple(f"mfcc_{i:02d}" for i in range(N_MFCC))
    + tuple(f"chroma_{pc}" for pc in _PITCH_CLASSES)
    + tuple(f"contrast_band{i}" for i in range(N_CONTRAST))
)
assert len(FEATURE_NAMES) == N_FEATURES

#: CSV column names f00..f67 mapped to their descriptive names.
FEATURE_COLUMNS = {f"f{i:02d}": name for i, name in enumerate(FEATURE_NAMES)}

_LOG_FLOOR = 1e-10  # floor for mel filter energies before the log
_MEL_FMAX = 2000.0
_N_MEL_FILTERS = 26
_CHROMA_BAND = (50.0, 1000.0)
_CONTRAST_FMIN = 50.0  # lowest octave-band edge
_FRAME_S = 0.025
_HOP_S = 0.010


@dataclass(frozen=True)
class FeatureVector:
    """One cycle's descriptor plus its label channels."""

    recording_id: str
    cycle_index: int
    values: np.ndarray
    sc_label: Optional[MurmurIntensity] = None
    mv_label: Optional[MurmurIntensity] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (N_FEATURES,):
            raise FeatureError(f"expected {N_FEATURES} feature values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = [FEATURE_NAMES[i] for i in np.where(~np.isfinite(values))[0]]
            raise FeatureError(f"non-finite feature values: {bad}")
        object.__setattr__(self, "values", values)


# ---------------------------------------------------------------------------
# Time-domain block
# ---------------------------------------------------------------------------

def _zero_crossings(x: np.ndarray) -> int:
    signs = np.sign(x)
    signs = signs[signs != 0]  # exact zeros do not break a run
    if signs.size < 2:
        return 0
    return int(np.count_nonzero(np.diff(signs)))


def _histogram_entropy(x: np.ndarray, bins: int = 64) -> float:
    counts, _ = np.histogram(x, bins=bins)
    p = counts[counts > 0] / x.size
    return float(-np.sum(p * np.log(p)))


def _autocorr_pitch(x: np.ndarray, fs: float, f_lo: float = 50.0, f_hi: float = 500.0) -> float:
    """Fundamental frequency from the autocorrelation peak in [f_lo, f_hi]."""
    x = x - x.mean()
    n = x.size
    lo = max(1, int(round(fs / f_hi)))
    hi = min(int(round(fs / f_lo)), n - 1)
    if lo >= hi:
        return 0.0
    # pad past the largest lag of interest to keep the circular wrap out
    nfft = int(2 ** np.ceil(np.log2(n + hi + 1)))
    spec = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(spec * np.conj(spec), nfft)[:hi + 1]
    window = ac[lo:hi + 1]
    if window.size == 0 or np.max(window) <= 0:
        return 0.0
    return float(fs / (lo + int(np.argmax(window))))


def time_features(cycle: HeartCycle) -> dict[str, float]:
    """The 18 time-domain statistics, keyed and ordered by name."""
    x = cycle.samples
    if x.size == 0:
        raise FeatureError("empty cycle")
    mean = float(x.mean())
    centered = x - mean
    var = float(np.mean(centered ** 2))
    std = float(np.sqrt(var))
    if std > 0:
        skew = float(np.mean(centered ** 3) / std ** 3)
        kurt = float(np.mean(centered ** 4) / std ** 4 - 3.0)  # excess
    else:
        skew = kurt = 0.0
    duration = cycle.duration
    rms = float(np.sqrt(np.mean(x ** 2)))
    peak = float(np.max(np.abs(x)))
    crest = peak / rms if rms > 0 else 0.0
    zcr = _zero_crossings(x) / duration
    median = float(np.median(x))
    p25, p75 = np.percentile(x, (25, 75))
    return {
        "amp_mean": mean,
        "amp_median": median,
        "amp_variance": var,
        "amp_std": std,
        "amp_skewness": skew,
        "amp_kurtosis": kurt,
        "amp_p25": float(p25),
        "amp_p75": float(p75),
        "amp_max": float(x.max()),
        "amp_min": float(x.min()),
        "amp_mad_mean": float(np.mean(np.abs(x - mean))),
        "amp_mad_median": float(np.median(np.abs(x - median))),
        "duration_s": duration,
        "amp_entropy": _histogram_entropy(x),
        "zero_crossing_rate": zcr,
        "tempo_bpm": 60.0 / duration,
        "pitch_hz": _autocorr_pitch(x, cycle.sample_rate),
        "crest_factor": crest,
    }


# ---------------------------------------------------------------------------
# Spectral machinery
# ---------------------------------------------------------------------------

def _next_pow2(n: int) -> int:
    return int(2 ** np.ceil(np.log2(max(n, 2))))


def _whole_cycle_spectrum(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hann-windowed, zero-padded magnitude/power spectrum of the full cycle.

    Returns (freqs, magnitude, windowed_signal).
    """
    window = np.hanning(x.size)
    xw = x * window
    nfft = _next_pow2(x.size)
    mag = np.abs(rfft(xw, nfft))
    freqs = rfftfreq(nfft, 1.0 / fs)
    return freqs, mag, xw


def _spectral_moments(freqs: np.ndarray, power: np.ndarray) -> tuple[float, float, float, float]:
    """(power-weighted mean, std, skewness, excess kurtosis) of the spectrum."""
    total = power.sum()
    if total <= 0:
        return 0.0, 0.0, 0.0, 0.0
    p = power / total
    mu = float(np.sum(p * freqs))
    var = float(np.sum(p * (freqs - mu) ** 2))
    sd = np.sqrt(var)
    if sd == 0:
        return mu, 0.0, 0.0, 0.0
    skew = float(np.sum(p * (freqs - mu) ** 3) / sd ** 3)
    kurt = float(np.sum(p * (freqs - mu) ** 4) / sd ** 4 - 3.0)
    return mu, sd, skew, kurt


def _flatness(power: np.ndarray) -> float:
    """Geometric/arithmetic mean ratio of the power spectrum.

    The spectrum is normalized by its maximum first, which makes the measure
    exactly invariant to amplitude scaling; silence maps to 1 (flat).
    """
    peak = power.max() if power.size else 0.0
    if peak <= 0:
        return 1.0
    p = np.maximum(power / peak, 1e-12)
    return float(np.exp(np.mean(np.log(p))) / np.mean(p))


def _frames(x: np.ndarray, fs: float) -> np.ndarray:
    """25 ms Hann frames with 10 ms hop; one whole-signal frame if too short."""
    frame = int(round(_FRAME_S * fs))
    hop = int(round(_HOP_S * fs))
    if x.size < frame or frame < 4:
        return x[np.newaxis, :]
    n_frames = 1 + (x.size - frame) // hop
    idx = np.arange(frame)[np.newaxis, :] + hop * np.arange(n_frames)[:, np.newaxis]
    return x[idx]


def _frame_power_spectra(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    frames = _frames(x, fs)
    window = np.hanning(frames.shape[1])
    nfft = _next_pow2(frames.shape[1])
    mag = np.abs(rfft(frames * window, nfft, axis=1))
    freqs = rfftfreq(nfft, 1.0 / fs)
    return freqs, mag ** 2


def _spectral_flux(frame_power: np.ndarray) -> float:
    """Mean frame-to-frame L2 distance between L2-normalized magnitudes."""
    mag = np.sqrt(frame_power)
    norms = np.linalg.norm(mag, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    unit = mag / safe
    if unit.shape[0] < 2:
        return 0.0
    return float(np.mean(np.linalg.norm(np.diff(unit, axis=0), axis=1)))


def _octave_band_edges(fs: float) -> np.ndarray:
    """[0, 50, 100, 200, ...] capped at Nyquist: one sub-band + up to 6 octaves."""
    edges = [0.0, _CONTRAST_FMIN]
    while len(edges) < N_CONTRAST + 1 and edges[-1] * 2 < fs / 2:
        edges.append(edges[-1] * 2)
    while len(edges) < N_CONTRAST + 1:
        edges.append(fs / 2)
    edges[-1] = fs / 2
    return np.asarray(edges)


def _spectral_contrast(freqs: np.ndarray, frame_power: np.ndarray, fs: float) -> np.ndarray:
    """Per-band log(peak/valley) of frame power, averaged over frames."""
    edges = _octave_band_edges(fs)
    out = np.zeros(N_CONTRAST)
    for b in range(N_CONTRAST):
        lo, hi = edges[b], edges[b + 1]
        mask = (freqs >= lo) & (freqs < hi) if b < N_CONTRAST - 1 else (freqs >= lo) & (freqs <= hi)
        if not mask.any():
            continue
        band = frame_power[:, mask]
        k = max(1, int(round(0.02 * band.shape[1])))
        if k == 1:
            valley = band.min(axis=1)
            peak = band.max(axis=1)
        else:
            sorted_band = np.sort(band, axis=1)
            valley = sorted_band[:, :k].mean(axis=1)
            peak = sorted_band[:, -k:].mean(axis=1)
        eps = 1e-30
        out[b] = float(np.mean(np.log(peak + eps) - np.log(valley + eps)))
    return out


def _chroma_bins(freqs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(bin mask, pitch class per masked bin) for the chroma fold, cached."""
    key = (freqs.size, float(freqs[-1]) if freqs.size else 0.0)
    cached = _CHROMA_PC_CACHE.get(key)
    if cached is not None:
        return cached
    lo, hi = _CHROMA_BAND
    mask = (freqs >= lo) & (freqs <= hi)
    midi = 69.0 + 12.0 * np.log2(freqs[mask] / 440.0)
    pc = np.round(midi).astype(int) % 12
    _CHROMA_PC_CACHE[key] = (mask, pc)
    return mask, pc


def _chroma(freqs: np.ndarray, power: np.ndarray) -> np.ndarray:
    """Power folded into 12 pitch classes (A440 reference, C = index 0),
    L1-normalized; silence maps to the uniform distribution."""
    mask, pc = _chroma_bins(freqs)
    energies = np.bincount(pc, weights=power[mask], minlength=N_CHROMA)
    total = energies.sum()
    if total <= 0:
        return np.full(N_CHROMA, 1.0 / N_CHROMA)
    return energies / total


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


_MEL_BANK_CACHE: dict = {}
_CHROMA_PC_CACHE: dict = {}


def _mel_filterbank(freqs: np.ndarray, fs: float) -> np.ndarray:
    """26 triangular filters spanning 0 Hz to min(2 kHz, Nyquist) on the mel scale."""
    key = (fs, freqs.size)
    cached = _MEL_BANK_CACHE.get(key)
    if cached is not None:
        return cached
    fmax = min(_MEL_FMAX, fs / 2)
    points = _mel_inv(np.linspace(_mel(0.0), _mel(fmax), _N_MEL_FILTERS + 2))
    bank = np.zeros((_N_MEL_FILTERS, freqs.size))
    for i in range(_N_MEL_FILTERS):
        left, center, right = points[i], points[i + 1], points[i + 2]
        up = (freqs - left) / max(center - left, 1e-12)
        down = (right - freqs) / max(right - center, 1e-12)
        bank[i] = np.clip(np.minimum(up, down), 0.0, None)
    _MEL_BANK_CACHE[key] = bank
    return bank


def _mfcc_from_spectrum(freqs: np.ndarray, power: np.ndarray, fs: float,
                        n_coeff: int) -> np.ndarray:
    energies = _mel_filterbank(freqs, fs) @ power
    coeffs = dct(np.log(np.maximum(energies, _LOG_FLOOR)), type=2, norm="ortho")
    return coeffs[:n_coeff]


def mfcc(cycle: HeartCycle, n_coeff: int = 13) -> np.ndarray:
    """Mel-frequency cepstral coefficients of the whole cycle (one frame).

    Filter energies come from the Hann-windowed power spectrum; their logs
    (floored at 1e-10) go through an orthonormal DCT-II, and the first
    ``n_coeff`` coefficients are returned.
    """
    x = cycle.samples
    if x.size < 64:
        raise FeatureError(f"cycle too short for spectral analysis ({x.size} samples)")
    freqs, mag, _ = _whole_cycle_spectrum(x, cycle.sample_rate)
    return _mfcc_from_spectrum(freqs, mag ** 2, cycle.sample_rate, n_coeff)


def pitch_chroma(cycle: HeartCycle) -> np.ndarray:
    """The 12-bin pitch-class energy profile of the cycle."""
    x = cycle.samples
    if x.size < 64:
        raise FeatureError(f"cycle too short for spectral analysis ({x.size} samples)")
    freqs, mag, _ = _whole_cycle_spectrum(x, cycle.sample_rate)
    return _chroma(freqs, mag ** 2)


def spectral_contrast(cycle: HeartCycle) -> np.ndarray:
    """Mean peak-valley log-power contrast per octave band (7 bands)."""
    x = cycle.samples
    if x.size < 64:
        raise FeatureError(f"cycle too short for spectral analysis ({x.size} samples)")
    freqs, frame_power = _frame_power_spectra(x, cycle.sample_rate)
    return _spectral_contrast(freqs, frame_power, cycle.sample_rate)


def _spectral_block(cycle: HeartCycle, spectrum=None
                    ) -> tuple[dict[str, float], np.ndarray, np.ndarray, np.ndarray]:
    """All spectral descriptors in one pass.

    Returns (18 named values, chroma12, contrast7, power spectrum)."""
    x = cycle.samples
    fs = cycle.sample_rate
    if x.size < 64:
        raise FeatureError(f"cycle too short for spectral analysis ({x.size} samples)")
    freqs, mag, xw = _whole_cycle_spectrum(x, fs) if spectrum is None else spectrum
    power = mag ** 2
    total_power = power.sum()
    nfft = 2 * (freqs.size - 1)

    if total_power > 0:
        p = power / total_power
        dominant = float(freqs[int(np.argmax(mag))])
        mean_freq, bw_sd, sskew, skurt = _spectral_moments(freqs, power)
        centroid = float(np.sum(freqs * mag) / mag.sum())
        # bandwidth: power-weighted spread around the (amplitude-weighted) centroid
        bandwidth = float(np.sqrt(np.sum(p * (freqs - centroid) ** 2)))
        nz = p[p > 0]
        entropy = float(-np.sum(nz * np.log(nz)) / np.log(p.size))
        rolloff = float(freqs[int(np.searchsorted(np.cumsum(p), 0.85))])
        slope = float(np.polyfit(freqs, mag, 1)[0])
    else:
        dominant = mean_freq = bandwidth = centroid = rolloff = slope = 0.0
        sskew = skurt = entropy = 0.0

    # Parseval: sum|X|^2 / nfft over the full spectrum equals the windowed
    # time-domain energy; double the one-sided bins except DC and Nyquist.
    full = 2.0 * total_power - power[0] - (power[-1] if nfft % 2 == 0 else 0.0)
    energy = float(full / nfft)

    freqs_f, frame_power = _frame_power_spectra(x, fs)
    contrast = _spectral_contrast(freqs_f, frame_power, fs)
    chroma = _chroma(freqs, power)
    octave_bands = contrast[1:]  # the 6 octave bands above the low sub-band

    values = {
        "dominant_freq_hz": dominant,
        "mean_freq_hz": mean_freq,
        "spectral_entropy": entropy,
        "bandwidth_hz": bandwidth,
        "spectral_centroid_hz": centroid,
        "rolloff_hz": rolloff,
        "rms": float(np.sqrt(np.mean(x ** 2))),
        "spectral_kurtosis": skurt,
        "spectral_skewness": sskew,
        "spectral_flatness": _flatness(power),
        "spectral_slope": slope,
        "spectral_energy": energy,
        "spectral_power": energy / x.size,
        "spectral_flux": _spectral_flux(frame_power),
        "contrast_mean": float(octave_bands.mean()),
        "contrast_std": float(octave_bands.std()),
        "chroma_mean": float(chroma.mean()),
        "chroma_std": float(chroma.std()),
    }
    return values, chroma, contrast, power


def spectral_features(cycle: HeartCycle) -> dict[str, float]:
    """The 18 whole-cycle spectral descriptors, keyed and ordered by name."""
    values, _, _, _ = _spectral_block(cycle)
    return values


def extract(cycle: HeartCycle, sc_label: Optional[MurmurIntensity] = None,
            mv_label: Optional[MurmurIntensity] = None) -> FeatureVector:
    """Assemble the full 68-value descriptor for one cycle.

    Extraction is a pure function of (samples, sample_rate); labels are
    carried through unchanged.
    """
    if cycle.samples.size < 64:
        raise FeatureError(f"cycle too short for spectral analysis ({cycle.samples.size} samples)")
    spectrum = _whole_cycle_spectrum(cycle.samples, cycle.sample_rate)
    tvals = time_features(cycle)
    svals, chroma, contrast, power = _spectral_block(cycle, spectrum=spectrum)
    values = np.concatenate([
        np.array([tvals[k] for k in _TIME_NAMES]),
        np.array([svals[k] for k in _SPECTRAL_NAMES]),
        _mfcc_from_spectrum(spectrum[0], power, cycle.sample_rate, N_MFCC),
        chroma,
        contrast,
    ])
    return FeatureVector(
        recording_id=cycle.recording_id,
        cycle_index=cycle.index,
        values=values,
        sc_label=sc_label if sc_label is not None else cycle.label,
        mv_label=mv_label,
    )


# ---------------------------------------------------------------------------
# Feature tables
# ---------------------------------------------------------------------------

def feature_rows(vectors) -> list[dict]:
    """Feature vectors as CSV-ready records (schema: ids, labels, f00..f67)."""
    rows = []
    for fv in vectors:
        row = {
            "recording_id": fv.recording_id,
            "cycle_index": fv.cycle_index,
            "sc_label": fv.sc_label.value if fv.sc_label else None,
            "mv_label": fv.mv_label.value if fv.mv_label else None,
        }
        for i, v in enumerate(fv.values):
            row[f"f{i:02d}"] = float(v)
        rows.append(row)
    return rows


def feature_table_columns() -> list[str]:
    return ["recording_id", "cycle_index", "sc_label", "mv_label"] + [
        f"f{i:02d}" for i in range(N_FEATURES)
    ]


def rows_to_matrix(rows) -> tuple[np.ndarray, list[str], list, list]:
    """Feature records -> (X, recording_ids, sc_labels, mv_labels)."""
    X = np.array([[row[f"f{i:02d}"] for i in range(N_FEATURES)] for row in rows], dtype=np.float64)
    ids = [str(row["recording_id"]) for row in rows]
    sc = [row["sc_label"] for row in rows]
    mv = [row["mv_label"] for row in rows]
    return X, ids, sc, mv
