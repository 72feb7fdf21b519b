"""Time-domain descriptors of a cut drop segment.

Every segment, whatever its length, maps to the same 25 named scalars so
that drops can be fed to a fixed-width classifier. Peak-structure features
rely on :func:`detect_peaks`, which finds prominent interior maxima and the
minima between them, and measures each peak's width at two half heights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dropmat.errors import DegeneratePeakError, DegenerateSegmentError, SegmentTooShortError
from dropmat.segmentation import DropSegment

DEFAULT_MIN_PROMINENCE = 1.0

FEATURE_NAMES: tuple[str, ...] = (
    "MAX",
    "MIN",
    "PPV",
    "MEAN",
    "RV",
    "Var",
    "SD",
    "RMS",
    "SE",
    "SK",
    "SF",
    "PF",
    "PulF",
    "MarF",
    "ClF",
    "power_",
    "t_c_feature",
    "PeakM",
    "CountPV",
    "PWH",
    "PWHs_3",
    "PWHs",
    "PWH_abs",
    "PVn",
    "PVnp",
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True, eq=False)
class PeakSet:
    """Peaks and valleys of a cut, with per-peak widths in seconds.

    ``widths_half_prominence[i]`` is PWH of peak ``i``: width where the signal
    stays above the midpoint between the peak and its deeper neighbouring
    valley. ``widths_half_height[i]`` is PWH': width above half the peak's
    absolute value.
    """

    peak_indices: np.ndarray
    valley_indices: np.ndarray
    widths_half_prominence: np.ndarray
    widths_half_height: np.ndarray

    @property
    def count(self) -> int:
        return int(self.peak_indices.size + self.valley_indices.size)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape != (N_FEATURES,):
            raise ValueError(f"a feature vector holds {N_FEATURES} values, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(values))]
            raise DegenerateSegmentError(f"non-finite features: {', '.join(bad)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(FEATURE_NAMES, self.values)}


def _prominence(x: np.ndarray, i: int) -> float:
    # Same construction as the usual topographic prominence: extend each way
    # until a strictly higher sample or the edge, take the higher of the two minima.
    n = x.shape[0]
    left = i
    left_min = x[i]
    while left > 0 and x[left - 1] <= x[i]:
        left -= 1
        left_min = min(left_min, x[left])
    right = i
    right_min = x[i]
    while right < n - 1 and x[right + 1] <= x[i]:
        right += 1
        right_min = min(right_min, x[right])
    return float(x[i] - max(left_min, right_min))


def _crossing_width(x: np.ndarray, i: int, level: float) -> float:
    """Width in samples of the excursion around peak ``i`` above ``level``.

    Crossings are linearly interpolated; an excursion reaching an edge of the
    array is clipped there.
    """
    n = x.shape[0]
    j = i
    while j > 0 and x[j - 1] > level:
        j -= 1
    if j == 0:
        left = 0.0
    else:
        # x[j-1] <= level < x[j]
        left = (j - 1) + (level - x[j - 1]) / (x[j] - x[j - 1])
    k = i
    while k < n - 1 and x[k + 1] > level:
        k += 1
    if k == n - 1:
        right = float(n - 1)
    else:
        right = k + (x[k] - level) / (x[k] - x[k + 1])
    return right - left


def detect_peaks(
    segment: DropSegment | np.ndarray,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
    sample_rate_hz: float | None = None,
) -> PeakSet:
    """Find prominent peaks, the valleys between them, and their half-height widths.

    Args:
        segment: A :class:`DropSegment` or a bare 1-D array of magnitudes.
        min_prominence: Smallest prominence (m/s^2) a strict interior local
            maximum needs to count as a peak.
        sample_rate_hz: Required when ``segment`` is a bare array.
    """
    if isinstance(segment, DropSegment):
        x = segment.values
        fs = segment.sample_rate_hz
    else:
        x = np.asarray(segment, dtype=float).reshape(-1)
        if sample_rate_hz is None:
            raise ValueError("sample_rate_hz is required for a bare array")
        fs = float(sample_rate_hz)
    if x.shape[0] < 3:
        raise SegmentTooShortError(f"peak detection needs at least 3 samples, got {x.shape[0]}")
    if min_prominence < 0:
        raise ValueError("min_prominence must be non-negative")

    interior = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])) + 1
    peaks = np.array(
        [i for i in interior if _prominence(x, int(i)) >= min_prominence], dtype=np.int64
    )
    valleys = np.array(
        [a + int(np.argmin(x[a : b + 1])) for a, b in zip(peaks[:-1], peaks[1:])], dtype=np.int64
    )

    pwh = np.empty(peaks.size)
    pwh_abs = np.empty(peaks.size)
    for k, p in enumerate(peaks):
        lo = valleys[k - 1] if k > 0 else 0
        hi = valleys[k] if k < valleys.size else x.shape[0] - 1
        base = min(x[lo : p + 1].min(), x[p : hi + 1].min())
        pwh[k] = _crossing_width(x, int(p), base + (x[p] - base) / 2.0) / fs
        pwh_abs[k] = _crossing_width(x, int(p), x[p] / 2.0) / fs
    return PeakSet(peaks, valleys, pwh, pwh_abs)


VALUE_FEATURES = FEATURE_NAMES[:16]


def value_features(accm, on_zero: str = "raise") -> dict[str, float]:
    """Amplitude-distribution features (MAX through power_) of a cut.

    SK and SE are raw third and fourth central moments, ClF divides the
    maximum by the variance and RV is the mean of square roots; RMS is the
    conventional root of the mean square. A ratio with a zero denominator
    raises :class:`DegenerateSegmentError`, or is NaN with ``on_zero="nan"``.
    """
    accm = np.asarray(accm, dtype=float).reshape(-1)
    n = accm.shape[0]
    if n == 0 or not np.any(accm):
        raise DegenerateSegmentError("cut is empty or all zero")
    mx = float(accm.max())
    mn = float(accm.min())
    # a constant cut must give exactly zero variance, not rounding residue
    mean = mx if mx == mn else float(accm.sum() / n)
    rv = float(np.sqrt(accm).sum() / n)
    dev = accm - mean
    var = float((dev**2).sum() / n)
    power = float((accm**2).sum())
    rms = float(np.sqrt(power / n))

    def ratio(num: float, den: float, name: str) -> float:
        if den == 0:
            if on_zero == "nan":
                return float("nan")
            raise DegenerateSegmentError(f"{name} is undefined: zero denominator")
        return num / den

    return {
        "MAX": mx,
        "MIN": mn,
        "PPV": mx - mn,
        "MEAN": mean,
        "RV": rv,
        "Var": var,
        "SD": float(np.sqrt(var)),
        "RMS": rms,
        "SE": float((dev**4).sum() / n),
        "SK": float((dev**3).sum() / n),
        "SF": ratio(rms, mean, "SF"),
        "PF": ratio(mx, rms, "PF"),
        "PulF": ratio(mx, mean, "PulF"),
        "MarF": ratio(mx, rv, "MarF"),
        "ClF": ratio(mx, var, "ClF"),
        "power_": power,
    }


def extract_features(segment: DropSegment, peaks: PeakSet | None = None) -> FeatureVector:
    """Compute the 25 drop descriptors of ``segment``.

    Peak-width features refer to the highest detected peak; PWHs_3 sums the
    widths of the first three peaks in time order.
    """
    if peaks is None:
        peaks = detect_peaks(segment)
    accm = segment.values
    fs = segment.sample_rate_hz
    n = accm.shape[0]
    stats = value_features(accm)

    peak_m = int(np.argmax(accm)) / fs
    count_pv = float(peaks.count)
    if peaks.peak_indices.size == 0:
        raise DegeneratePeakError("no peak detected in the cut")
    top = int(np.argmax(accm[peaks.peak_indices]))
    pwh = float(peaks.widths_half_prominence[top])
    pwh_abs = float(peaks.widths_half_height[top])
    pwhs_3 = float(peaks.widths_half_prominence[:3].sum())
    pwhs = float(peaks.widths_half_prominence.sum())
    pvn = count_pv * n
    if pwh == 0:
        raise DegeneratePeakError("PVnp is undefined: reference peak width is zero")
    pvnp = pvn / pwh

    return FeatureVector(
        np.array(
            [
                *(stats[name] for name in VALUE_FEATURES),
                segment.fall_duration_s,
                peak_m,
                count_pv,
                pwh,
                pwhs_3,
                pwhs,
                pwh_abs,
                pvn,
                pvnp,
            ]
        )
    )
