"""Cut the impact phase out of a phone-drop accelerometer trace.

The trace magnitude is scanned with a sliding mean-square ("power") window to
find the free-fall dip, then forward for the first impact spike (touchdown)
and for the first point after which the signal stays near local gravity
(rest). The samples between touchdown and rest, inclusive, form the cut.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from dropmat.errors import (
    InvalidConfigError,
    NeverSettlesError,
    NoTouchdownError,
    NoWeightlessRegionError,
    SegmentTooShortError,
)
from dropmat.signal import AccelTrace, MagnitudeSeries, magnitude

STANDARD_GRAVITY = 9.80665

# Used only when no window falls below the configured weightless ratio.
FALLBACK_POWER_RATIO = 0.5


@dataclass(frozen=True)
class SegmentationConfig:
    window_size_s: float = 0.10
    step_s: float = 0.02
    touchdown_factor_Fc: float = 2.0
    rest_jitter_Fw: float = 0.5
    rest_duration_s: float = 0.2
    local_gravity_Gd: float = STANDARD_GRAVITY
    weightless_power_ratio: float = 0.25

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not (np.isfinite(value) and value > 0):
                raise InvalidConfigError(f"{name} must be strictly positive, got {value}")
        if self.touchdown_factor_Fc <= 1:
            raise InvalidConfigError("touchdown_factor_Fc must exceed 1")
        if self.weightless_power_ratio >= 1:
            raise InvalidConfigError("weightless_power_ratio must be below 1")
        if self.rest_jitter_Fw >= self.local_gravity_Gd:
            raise InvalidConfigError("rest_jitter_Fw must be smaller than local_gravity_Gd")

    def window_samples(self, sample_rate_hz: float) -> int:
        return max(1, int(round(self.window_size_s * sample_rate_hz)))

    def step_samples(self, sample_rate_hz: float) -> int:
        return max(1, int(round(self.step_s * sample_rate_hz)))

    def rest_samples(self, sample_rate_hz: float) -> int:
        return max(1, int(round(self.rest_duration_s * sample_rate_hz)))

    @property
    def touchdown_threshold(self) -> float:
        return self.local_gravity_Gd * self.touchdown_factor_Fc

    @property
    def stand_power(self) -> float:
        """Power of a phone held still: ``G_d ** 2``."""
        return self.local_gravity_Gd**2


@dataclass(frozen=True, eq=False)
class PowerSeries:
    window_start_indices: np.ndarray
    powers: np.ndarray
    window_samples: int

    def __len__(self) -> int:
        return self.powers.shape[0]


@dataclass(frozen=True, eq=False)
class DropSegment:
    """Boundaries of one drop and the magnitude samples on ``[t_c, t_w]``.

    ``t_c`` and ``t_w`` are sample indices into the source series.
    """

    weightless_start: int
    t_c: int
    t_w: int
    cut: MagnitudeSeries
    fall_duration_s: float
    source_length: int | None = None

    def __post_init__(self) -> None:
        if not (self.weightless_start < self.t_c < self.t_w):
            raise ValueError(
                "segment boundaries must satisfy weightless_start < t_c < t_w, got "
                f"{self.weightless_start}, {self.t_c}, {self.t_w}"
            )
        if self.source_length is not None and self.t_w > self.source_length:
            raise ValueError("t_w lies beyond the end of the source series")
        if len(self.cut) == 0:
            raise ValueError("cut must be non-empty")

    @property
    def sample_rate_hz(self) -> float:
        return self.cut.sample_rate_hz

    @property
    def values(self) -> np.ndarray:
        return self.cut.values

    def boundaries(self) -> dict:
        return {
            "weightless_start": int(self.weightless_start),
            "t_c": int(self.t_c),
            "t_w": int(self.t_w),
            "fall_duration_s": float(self.fall_duration_s),
            "sample_rate_hz": float(self.sample_rate_hz),
        }


def window_power(mag: MagnitudeSeries, cfg: SegmentationConfig) -> PowerSeries:
    """Mean of squared magnitudes over each full window; partial tail windows are dropped."""
    w = cfg.window_samples(mag.sample_rate_hz)
    step = cfg.step_samples(mag.sample_rate_hz)
    values = mag.values
    if values.shape[0] < w:
        raise SegmentTooShortError(
            f"series has {values.shape[0]} samples, shorter than one {w}-sample power window"
        )
    windows = np.lib.stride_tricks.sliding_window_view(values * values, w)[::step]
    powers = windows.sum(axis=1) / w
    starts = np.arange(0, values.shape[0] - w + 1, step)
    return PowerSeries(starts, powers, w)


def locate_weightless(power: PowerSeries, cfg: SegmentationConfig) -> tuple[int, int]:
    """Find the free-fall window.

    Returns ``(window_index, weightless_start)``. The earliest window below
    ``weightless_power_ratio * G_d**2`` wins, so later bounce dips are never
    picked. Without such a window the global-minimum window is accepted if
    it still sits below half the standing power.
    """
    if len(power) == 0:
        raise NoWeightlessRegionError("power series is empty")
    below = np.flatnonzero(power.powers < cfg.weightless_power_ratio * cfg.stand_power)
    if below.size:
        idx = int(below[0])
    else:
        idx = int(np.argmin(power.powers))
        if not power.powers[idx] < FALLBACK_POWER_RATIO * cfg.stand_power:
            raise NoWeightlessRegionError(
                f"lowest window power {power.powers[idx]:.3f} (m/s^2)^2 shows no free fall"
            )
    return idx, int(power.window_start_indices[idx])


def detect_touchdown(mag: MagnitudeSeries, search_from: int, cfg: SegmentationConfig) -> int:
    """First index ``>= search_from`` whose magnitude exceeds ``G_d * F_c``."""
    if search_from < 0:
        raise ValueError("search_from must be non-negative")
    hits = np.flatnonzero(mag.values[search_from:] > cfg.touchdown_threshold)
    if hits.size == 0:
        raise NoTouchdownError(
            f"no sample after index {search_from} exceeds {cfg.touchdown_threshold:.3f} m/s^2"
        )
    return int(search_from + hits[0])


def detect_rest(mag: MagnitudeSeries, t_c: int, cfg: SegmentationConfig) -> int:
    """First index ``k > t_c`` where samples ``k .. k + N`` all lie within ``F_w`` of ``G_d``.

    ``N`` is the rest duration in samples (20 at 100 Hz), so the moment itself
    and the following ``rest_duration_s`` must be stable. Windows that would
    run past the end of the series are not considered.
    """
    n_rest = cfg.rest_samples(mag.sample_rate_hz)
    values = mag.values
    n = values.shape[0]
    if t_c + 1 + n_rest > n - 1:
        raise NeverSettlesError(
            f"fewer than {n_rest} samples remain after touchdown index {t_c}"
        )
    stable = np.abs(values - cfg.local_gravity_Gd) < cfg.rest_jitter_Fw
    # run[j] = number of consecutive stable samples starting at j
    run = np.zeros(n + 1, dtype=np.int64)
    for j in range(n - 1, t_c, -1):
        run[j] = run[j + 1] + 1 if stable[j] else 0
    candidates = np.flatnonzero(run[t_c + 1 : n] >= n_rest + 1)
    if candidates.size == 0:
        raise NeverSettlesError(
            f"magnitude never stays within {cfg.rest_jitter_Fw} m/s^2 of "
            f"{cfg.local_gravity_Gd} m/s^2 for {cfg.rest_duration_s} s after touchdown"
        )
    return int(t_c + 1 + candidates[0])


def segment_magnitude(mag: MagnitudeSeries, cfg: SegmentationConfig | None = None) -> DropSegment:
    """Run the full cut on an already computed magnitude series."""
    cfg = cfg or SegmentationConfig()
    power = window_power(mag, cfg)
    _, weightless_start = locate_weightless(power, cfg)
    t_c = detect_touchdown(mag, weightless_start + power.window_samples, cfg)
    t_w = detect_rest(mag, t_c, cfg)
    cut_values = mag.values[t_c : t_w + 1]
    return DropSegment(
        weightless_start=weightless_start,
        t_c=t_c,
        t_w=t_w,
        cut=MagnitudeSeries(mag.sample_rate_hz, cut_values),
        fall_duration_s=(t_c - weightless_start) / mag.sample_rate_hz,
        source_length=len(mag),
    )


def cut(trace: AccelTrace, cfg: SegmentationConfig | None = None) -> DropSegment:
    """Segment one drop from a raw trace: magnitude, power scan, touchdown, rest."""
    return segment_magnitude(magnitude(trace), cfg)
