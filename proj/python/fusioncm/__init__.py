"""Fused voice/face spoofing countermeasure toolkit.

Thin wrapper over the compiled ``_fusioncm`` extension. Arrays are float64
numpy arrays; library failures raise :class:`Error`, whose ``kind`` attribute
holds the error category (for example ``"config-error"``).
"""

from ._fusioncm import (
    Error,
    cm_score,
    concat_fuse,
    cqt,
    det_curve,
    eer,
    fuse_back_end,
    lfcc,
    load_wav,
    min_tdcf,
    model_summary,
    run_pipeline,
    spectrogram,
    write_synthetic_dataset,
    write_wav,
)

__all__ = [
    "Error",
    "cm_score",
    "concat_fuse",
    "cqt",
    "det_curve",
    "eer",
    "fuse_back_end",
    "lfcc",
    "load_wav",
    "min_tdcf",
    "model_summary",
    "run_pipeline",
    "spectrogram",
    "write_synthetic_dataset",
    "write_wav",
]

__version__ = "0.1.0"
