"""Uniformly sampled waveforms.

The container used throughout the package: a 1-D sample array plus a sample
rate in gigasamples per second. Real arrays represent physical signals;
complex arrays are used for baseband envelopes before carrier modulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Waveform:
    """A uniformly sampled signal.

    Parameters
    ----------
    samples :
        1-D array of samples (float for physical signals, complex for
        envelopes). Stored as a read-only numpy array.
    sample_rate :
        Sample rate in GS/s; strictly positive.
    """

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {arr.shape}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        arr = arr.astype(complex if np.iscomplexobj(arr) else float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_ns(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def times_ns(self) -> np.ndarray:
        """Sample times in ns, starting at 0."""
        return np.arange(len(self.samples)) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        """Same rate, new samples."""
        return Waveform(samples, self.sample_rate)
