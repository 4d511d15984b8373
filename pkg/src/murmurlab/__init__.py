"""murmurlab: label-noise reduction and murmur-intensity classification for heart sounds."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CANONICAL_RATE,
    AssessmentClass,
    CorpusError,
    MurmurIntensity,
    Recording,
    RecordingRegistry,
    Workspace,
    load_wav,
    resample,
    save_wav,
)
