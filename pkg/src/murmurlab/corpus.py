"""Recording types, WAV ingestion, CSV tables, and the workspace layout.

Everything downstream (filtering, segmentation, features, training) runs at
one canonical sample rate so that spectral features are comparable across
recordings regardless of the capture device.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

#: All DSP and feature extraction happens at this rate (Hz).  It covers the
#: 50-500 Hz murmur band with a 4x Nyquist margin.
CANONICAL_RATE = 4000

#: Minimum rate accepted by :func:`resample`; keeps a Nyquist margin above
#: the 500 Hz upper band edge.
MIN_RATE = 2000


class CorpusError(Exception):
    """Raised for unreadable audio, schema mismatches, and registry misuse."""


class MurmurIntensity(str, Enum):
    """The three murmur intensity grades used for classification."""

    MILD = "mild"
    MODERATE = "moderate"
    LOUD_THRILLING = "loud_thrilling"


class AssessmentClass(str, Enum):
    """The six options a rater can pick for one recording."""

    HEALTHY = "healthy"
    MILD = "mild"
    MODERATE = "moderate"
    LOUD_THRILLING = "loud_thrilling"
    BAD_QUALITY = "bad_quality"
    OTHER = "other"


#: Fixed class order used for label encoding, confusion matrices and reports.
INTENSITY_ORDER = (
    MurmurIntensity.MILD,
    MurmurIntensity.MODERATE,
    MurmurIntensity.LOUD_THRILLING,
)

#: Assessment values that name a murmur intensity.
INTENSITY_ASSESSMENTS = (
    AssessmentClass.MILD,
    AssessmentClass.MODERATE,
    AssessmentClass.LOUD_THRILLING,
)


def intensity_to_assessment(label: MurmurIntensity) -> AssessmentClass:
    return AssessmentClass(label.value)


def assessment_to_intensity(label: AssessmentClass) -> MurmurIntensity:
    if label not in INTENSITY_ASSESSMENTS:
        raise ValueError(f"{label.value!r} is not a murmur intensity")
    return MurmurIntensity(label.value)


@dataclass(frozen=True)
class Recording:
    """One mono heart-sound recording, peak-normalized to [-1, 1].

    ``sc_label`` is the intensity assigned at the collecting site, if any.
    Instances are immutable and safe to share between threads.
    """

    id: str
    samples: np.ndarray
    sample_rate: float
    sc_label: Optional[MurmurIntensity] = None
    source: str = "field"  # "field" | "synthetic"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise CorpusError(f"recording {self.id!r}: samples must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise CorpusError(f"recording {self.id!r}: sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise CorpusError(f"recording {self.id!r}: samples contain non-finite values")
        if np.max(np.abs(samples)) > 1.0 + 1e-9:
            raise CorpusError(f"recording {self.id!r}: samples exceed [-1, 1]")
        if self.source not in ("field", "synthetic"):
            raise CorpusError(f"recording {self.id!r}: unknown source {self.source!r}")
        object.__setattr__(self, "samples", samples)
        samples.setflags(write=False)

    @property
    def duration(self) -> float:
        """Length in seconds (= number of samples / sample rate)."""
        return len(self.samples) / self.sample_rate


def _normalize_peak(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak > 0:
        return x / peak
    return x


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    """Scale integer PCM to [-1, 1); pass floats through."""
    if data.dtype == np.uint8:  # 8-bit WAV is unsigned, midpoint 128
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype.kind == "i":
        return data.astype(np.float64) / float(2 ** (8 * data.dtype.itemsize - 1))
    if data.dtype.kind == "f":
        return data.astype(np.float64)
    raise CorpusError(f"unsupported WAV sample format: {data.dtype}")


def load_wav(path) -> Recording:
    """Read a PCM or float WAV file into a peak-normalized mono Recording.

    Multi-channel audio is averaged to mono.  The recording id is the
    filename stem.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise CorpusError(f"cannot read {path}: file not found")
    except Exception as exc:
        raise CorpusError(f"cannot read {path}: {exc}")
    if data.size == 0:
        raise CorpusError(f"empty audio: {path}")
    x = _pcm_to_float(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return Recording(id=path.stem, samples=_normalize_peak(x), sample_rate=float(rate))


def save_wav(rec: Recording, path) -> None:
    """Write a recording as 16-bit PCM WAV."""
    pcm = np.round(np.clip(rec.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(str(path), int(rec.sample_rate), pcm)


def wav_bytes(rec: Recording) -> bytes:
    """The recording as an in-memory 16-bit PCM WAV (44-byte header + data)."""
    buf = io.BytesIO()
    pcm = np.round(np.clip(rec.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(buf, int(rec.sample_rate), pcm)
    return buf.getvalue()


def resample(rec: Recording, target_rate: float) -> Recording:
    """Polyphase-resample a recording to ``target_rate`` Hz.

    Returns the input unchanged when the rates already match.  Duration is
    preserved to within one sample period.
    """
    if target_rate < MIN_RATE:
        raise ValueError(f"target_rate must be >= {MIN_RATE} Hz, got {target_rate}")
    if target_rate == rec.sample_rate:
        return rec
    frac = Fraction(int(round(target_rate)), int(round(rec.sample_rate)))
    y = resample_poly(rec.samples, frac.numerator, frac.denominator)
    peak = np.max(np.abs(y))
    if peak > 1.0:  # polyphase ringing can overshoot slightly
        y = y / peak
    return replace(rec, samples=y, sample_rate=float(target_rate))


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"  # 17 significant digits round-trips float64
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def save_table(rows: Sequence[Mapping], path, fieldnames: Optional[Sequence[str]] = None) -> None:
    """Write records as CSV with a header row.

    All rows must share one schema; floats are serialized with 17 significant
    digits so that save/load round-trips exactly.
    """
    rows = list(rows)
    if fieldnames is None:
        if not rows:
            raise CorpusError("cannot infer CSV schema from an empty row set")
        fieldnames = list(rows[0].keys())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            if set(row.keys()) != set(fieldnames):
                raise CorpusError(
                    f"row schema mismatch: expected {sorted(fieldnames)}, got {sorted(row.keys())}"
                )
            writer.writerow([_format_cell(row[k]) for k in fieldnames])


def load_table(path, required: Optional[Sequence[str]] = None) -> list[dict]:
    """Load a CSV table written by :func:`save_table`.

    Cells are parsed back to int/float where possible; empty cells become
    ``None``.  When ``required`` is given, a missing column raises a
    CorpusError naming it.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}")
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError(f"{path}: missing header row")
        if required is not None:
            for col in required:
                if col not in header:
                    raise CorpusError(f"{path}: missing column {col!r}")
        return [dict(zip(header, map(_parse_cell, row))) for row in reader]


# ---------------------------------------------------------------------------
# Registry and workspace
# ---------------------------------------------------------------------------

class RecordingRegistry:
    """Recordings keyed by unique id.  Writes are serialized with a lock."""

    def __init__(self, recordings: Iterable[Recording] = ()):
        self._lock = threading.Lock()
        self._by_id: dict[str, Recording] = {}
        for rec in recordings:
            self.add(rec)

    def add(self, rec: Recording) -> None:
        with self._lock:
            if rec.id in self._by_id:
                raise CorpusError(f"duplicate recording id: {rec.id!r}")
            self._by_id[rec.id] = rec

    def get(self, rec_id: str) -> Recording:
        try:
            return self._by_id[rec_id]
        except KeyError:
            raise CorpusError(f"unknown recording id: {rec_id!r}")

    def __contains__(self, rec_id: str) -> bool:
        return rec_id in self._by_id

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[Recording]:
        return iter(list(self._by_id.values()))

    @property
    def ids(self) -> list[str]:
        return list(self._by_id.keys())


@dataclass(frozen=True)
class Workspace:
    """On-disk layout shared by the CLI stages and the annotation service."""

    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def recordings_dir(self) -> Path:
        return self.root / "recordings"

    @property
    def labels_dir(self) -> Path:
        return self.root / "labels"

    @property
    def features_dir(self) -> Path:
        return self.root / "features"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def ensure(self) -> "Workspace":
        for d in (self.recordings_dir, self.labels_dir, self.features_dir,
                  self.models_dir, self.reports_dir):
            d.mkdir(parents=True, exist_ok=True)
        return self

    def load_recordings(self, target_rate: Optional[float] = CANONICAL_RATE) -> RecordingRegistry:
        """Load every WAV under recordings/, resampled to the canonical rate."""
        registry = RecordingRegistry()
        for wav in sorted(self.recordings_dir.glob("*.wav")):
            rec = load_wav(wav)
            if target_rate is not None and rec.sample_rate != target_rate:
                rec = resample(rec, target_rate)
            registry.add(rec)
        return registry
