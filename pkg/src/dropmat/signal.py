"""Accelerometer trace containers and the magnitude transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dropmat.errors import InvalidInputError

DEFAULT_SAMPLE_RATE_HZ = 100.0


@dataclass(frozen=True, eq=False)
class AccelTrace:
    """Uniformly sampled tri-axial accelerometer data.

    Attributes:
        sample_rate_hz: Samples per second.
        samples: Array of shape ``(n, 3)`` holding ``(ax, ay, az)`` in m/s^2.
        start_time: Time of the first sample in seconds.
    """

    sample_rate_hz: float
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise InvalidInputError(f"samples must have shape (n, 3), got {samples.shape}")
        if samples.shape[0] == 0:
            raise InvalidInputError("trace has no samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("trace contains non-finite acceleration values")
        if not (np.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise InvalidInputError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.isfinite(self.start_time):
            raise InvalidInputError("start_time must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "start_time", float(self.start_time))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class MagnitudeSeries:
    """Per-sample Euclidean norm of a trace, in m/s^2."""

    sample_rate_hz: float
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("magnitude series contains non-finite values")
        if np.any(values < 0):
            raise InvalidInputError("magnitude values must be non-negative")
        if not (np.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise InvalidInputError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.values.shape[0]


def magnitude(trace: AccelTrace) -> MagnitudeSeries:
    """Return ``sqrt(ax^2 + ay^2 + az^2)`` for every sample of ``trace``."""
    s = trace.samples
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("trace contains non-finite acceleration values")
    # hypot avoids overflow/underflow of the squares
    values = np.hypot(np.hypot(s[:, 0], s[:, 1]), s[:, 2])
    return MagnitudeSeries(trace.sample_rate_hz, values)
