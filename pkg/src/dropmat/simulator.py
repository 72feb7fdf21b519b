"""Synthetic phone-drop traces with known phase boundaries.

A drop is laid out on a fine time grid as four phases: hand-held hold at
gravity, free fall at near zero, a train of half-sine contact pulses riding
on gravity with ballistic flights between bounces, and rest at gravity. The
fine signal is box-car averaged into sensor samples (an integrating ADC), so
contacts shorter than one sample still register, then noise is added per
phase and the magnitude is spread over three axes.

Materials differ only through :class:`MaterialParams`; the presets are
fixtures ordered by hardness, not measured physical properties.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from dropmat.errors import FormatError, InvalidScenarioError
from dropmat.segmentation import STANDARD_GRAVITY
from dropmat.signal import DEFAULT_SAMPLE_RATE_HZ, AccelTrace

HEIGHTS_M = (0.4, 0.8, 1.2, 1.6)
POSES = ("screen", "back", "long-side", "short-side", "corner")

# pose -> (amplitude factor, spikes in the first contact)
POSE_EFFECTS = {
    "screen": (1.0, 1),
    "back": (0.95, 1),
    "long-side": (0.85, 2),
    "short-side": (0.8, 2),
    "corner": (0.7, 3),
}

OVERSAMPLE = 20
HOLD_JITTER_SIGMA = 0.25
HOLD_SWAY_AMPLITUDE = 0.35
FREEFALL_NOISE_SIGMA = 0.08
REST_JITTER_SIGMA = 0.06
# pause between successive spikes of an edge/corner first contact, seconds
SLAP_GAP_S = 0.02
SLAP_DECAY = 0.45
MIN_BOUNCE_SPEED = 0.1


@dataclass(frozen=True)
class MaterialParams:
    name: str
    label: int
    restitution: float
    impact_peak_scale: float
    contact_duration_s: float
    max_bounces: int
    noise_sigma: float

    def __post_init__(self) -> None:
        if not 0 <= self.restitution < 1:
            raise InvalidScenarioError(f"{self.name}: restitution must lie in [0, 1)")
        if self.impact_peak_scale <= 0 or self.contact_duration_s <= 0:
            raise InvalidScenarioError(f"{self.name}: peak scale and contact duration must be positive")
        if self.max_bounces < 0 or self.noise_sigma < 0:
            raise InvalidScenarioError(f"{self.name}: max_bounces and noise_sigma must be non-negative")
        if not 0 <= self.label <= 4:
            raise InvalidScenarioError(f"{self.name}: label must lie in 0..4")


DEFAULT_MATERIALS: tuple[MaterialParams, ...] = (
    MaterialParams("quilt", 0, 0.05, 8.0, 0.060, 1, 0.3),
    MaterialParams("carpet", 1, 0.15, 20.0, 0.035, 2, 0.3),
    MaterialParams("asphalt", 2, 0.35, 45.0, 0.012, 3, 0.4),
    MaterialParams("granite", 3, 0.50, 65.0, 0.006, 4, 0.4),
    MaterialParams("marble", 4, 0.55, 75.0, 0.005, 5, 0.4),
)


def load_materials(path: str | Path) -> tuple[MaterialParams, ...]:
    """Read material presets from JSON.

    The file holds either a list of preset objects or ``{"materials": [...]}``.
    Presets named like a default only need the fields they override.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    entries = raw.get("materials") if isinstance(raw, dict) else raw
    if not isinstance(entries, list) or not entries:
        raise FormatError(f"{path}: expected a non-empty list of materials")
    defaults = {m.name: m for m in DEFAULT_MATERIALS}
    out = []
    for entry in entries:
        if not isinstance(entry, dict) or "name" not in entry:
            raise FormatError(f"{path}: every material needs a name")
        unknown = set(entry) - set(MaterialParams.__dataclass_fields__)
        if unknown:
            raise FormatError(f"{path}: unknown material fields {sorted(unknown)}")
        base = defaults.get(entry["name"])
        try:
            out.append(replace(base, **entry) if base else MaterialParams(**entry))
        except TypeError as exc:
            raise FormatError(f"{path}: incomplete material {entry['name']!r} ({exc})") from exc
    labels = [m.label for m in out]
    if len(set(labels)) != len(labels):
        raise FormatError(f"{path}: material labels must be unique")
    return tuple(sorted(out, key=lambda m: m.label))


@dataclass(frozen=True)
class DropScenario:
    height_m: float
    pose: str
    material: MaterialParams
    seed: int = 0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    pre_hold_s: float = 1.0
    post_rest_s: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.height_m) and self.height_m > 0):
            raise InvalidScenarioError(f"drop height must be positive, got {self.height_m}")
        if self.pose not in POSE_EFFECTS:
            raise InvalidScenarioError(f"unknown pose {self.pose!r}; expected one of {POSES}")
        if self.sample_rate_hz <= 0:
            raise InvalidScenarioError("sample rate must be positive")
        if self.pre_hold_s < 0.5 or self.post_rest_s < 0.5:
            raise InvalidScenarioError("hold and rest padding must each be at least 0.5 s")


@dataclass(frozen=True)
class GroundTruth:
    weightless_start: int
    impact_index: int
    rest_index: int
    impact_speed: float
    bounce_count: int
    fall_duration_s: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SimulatedDrop:
    trace_id: str
    scenario: DropScenario
    trace: AccelTrace
    truth: GroundTruth


def _contacts(scenario: DropScenario, rng: np.random.Generator, t_impact: float, v0: float):
    """List of (start, duration, amplitude) pulses and the time of the final contact end."""
    mat = scenario.material
    amp_factor, n_spikes = POSE_EFFECTS[scenario.pose]
    # per-drop spread of the surface response
    restitution = float(np.clip(mat.restitution + rng.uniform(-0.02, 0.02), 0.0, 0.99)) if mat.restitution > 0 else 0.0
    peak_scale = mat.impact_peak_scale * rng.uniform(0.93, 1.07)
    duration = mat.contact_duration_s * rng.uniform(0.92, 1.08)

    pulses = []
    t = t_impact
    v = v0
    bounces = 0
    while True:
        amp = peak_scale * v * amp_factor
        spikes = n_spikes if bounces == 0 else 1
        for j in range(spikes):
            pulses.append((t + j * (duration + SLAP_GAP_S), duration, amp * SLAP_DECAY**j))
        t += spikes * duration + (spikes - 1) * SLAP_GAP_S
        v_next = restitution * v
        if bounces >= mat.max_bounces or v_next < MIN_BOUNCE_SPEED:
            break
        t += 2.0 * v_next / STANDARD_GRAVITY
        v = v_next
        bounces += 1
    return pulses, t, bounces


def simulate(scenario: DropScenario) -> tuple[AccelTrace, GroundTruth]:
    """Generate one drop trace and the sample indices of its true phase boundaries."""
    g = STANDARD_GRAVITY
    fs = scenario.sample_rate_hz
    rng = np.random.default_rng(scenario.seed)

    t_release = scenario.pre_hold_s + rng.uniform(0.0, 1.0 / fs)
    fall_s = math.sqrt(2.0 * scenario.height_m / g)
    t_impact = t_release + fall_s
    v0 = math.sqrt(2.0 * g * scenario.height_m)
    pulses, t_settle, bounces = _contacts(scenario, rng, t_impact, v0)
    n = int(math.ceil((t_settle + scenario.post_rest_s) * fs)) + 1

    # sample i integrates the interval ((i - 1)/fs, i/fs]
    sub = (np.arange(OVERSAMPLE) + 0.5) / OVERSAMPLE
    tf = (np.arange(n)[:, None] - 1.0 + sub[None, :]) / fs
    hold = tf < t_release
    rest = tf >= t_settle
    clean = np.where(hold | rest, g, 0.0)
    contact = np.zeros_like(tf, dtype=bool)
    # between the first touch and settling the phone sits on gravity while in contact
    for start, dur, amp in pulses:
        inside = (tf >= start) & (tf < start + dur)
        clean = np.where(inside, g + amp * np.sin(np.pi * (tf - start) / dur), clean)
        contact |= inside
    spikes = POSE_EFFECTS[scenario.pose][1]
    if spikes > 1:
        first_start, first_dur, _ = pulses[0]
        slap_end = first_start + spikes * first_dur + (spikes - 1) * SLAP_GAP_S
        in_slap = (tf >= first_start) & (tf < slap_end) & ~contact
        clean = np.where(in_slap, g, clean)
        contact |= in_slap
    sway = HOLD_SWAY_AMPLITUDE * np.sin(2 * np.pi * rng.uniform(0.8, 2.0) * tf + rng.uniform(0, 2 * np.pi))
    clean = clean + np.where(hold, sway, 0.0)
    values = clean.mean(axis=1)

    frac_hold = hold.mean(axis=1)
    frac_rest = rest.mean(axis=1)
    any_contact = contact.any(axis=1)
    airborne = ~any_contact & (frac_hold < 0.5) & (frac_rest < 0.5)
    sigma = np.where(
        any_contact,
        scenario.material.noise_sigma,
        np.where(frac_hold >= 0.5, HOLD_JITTER_SIGMA, REST_JITTER_SIGMA),
    )
    noise = rng.normal(0.0, 1.0, size=n) * sigma
    ff_noise = np.linalg.norm(rng.normal(0.0, FREEFALL_NOISE_SIGMA, size=(n, 3)), axis=1)
    values = np.where(airborne, values + ff_noise, values + noise)
    values = np.maximum(values, 0.0)

    samples = values[:, None] * _directions(scenario, rng, frac_hold >= 0.5, frac_rest >= 0.5)
    trace = AccelTrace(fs, samples)

    truth = GroundTruth(
        weightless_start=int(math.floor(t_release * fs)) + 1,
        impact_index=int(math.floor(t_impact * fs)) + 1,
        rest_index=int(math.ceil(t_settle * fs)) + 1,
        impact_speed=v0,
        bounce_count=bounces,
        fall_duration_s=fall_s,
    )
    return trace, truth


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _directions(scenario: DropScenario, rng: np.random.Generator, held: np.ndarray, resting: np.ndarray) -> np.ndarray:
    """Unit vectors carrying the magnitude onto the phone axes.

    Held: a fixed hand tilt with slight wobble. Airborne and bouncing: tumbling
    about a random axis. Resting: the face the pose leaves on the ground.
    """
    n = held.shape[0]
    hand = _unit(np.array([rng.normal(0, 0.3), rng.normal(0, 0.3), 1.0]))
    wobble = rng.normal(0.0, 0.02, size=(n, 3))
    axis = _unit(rng.normal(size=3))
    omega = rng.uniform(3.0, 12.0)
    k = np.cumsum(~held & ~resting) / scenario.sample_rate_hz * omega
    # Rodrigues rotation of the hand direction
    cos, sin = np.cos(k)[:, None], np.sin(k)[:, None]
    tumble = hand * cos + np.cross(axis, hand) * sin + axis * (axis @ hand) * (1 - cos)
    rest_dir = {
        "screen": np.array([0.0, 0.0, -1.0]),
        "back": np.array([0.0, 0.0, 1.0]),
    }.get(scenario.pose, np.array([0.0, 0.0, rng.choice([-1.0, 1.0])]))
    dirs = np.where(held[:, None], hand + wobble, tumble)
    dirs = np.where(resting[:, None], rest_dir + wobble * 0.5, dirs)
    return _unit(dirs)


def condition_seed(base_seed: int, height_idx: int, pose_idx: int, label: int, rep: int) -> int:
    """Per-trace seed that depends only on the condition, not on generation order."""
    seq = np.random.SeedSequence([int(base_seed), height_idx, pose_idx, label, rep])
    return int(seq.generate_state(1, np.uint64)[0])


def trace_id_for(height_m: float, pose: str, material: str, rep: int) -> str:
    return f"h{int(round(height_m * 100)):03d}_{pose}_{material}_r{rep:03d}"


def grid_scenarios(
    reps_per_condition: int,
    base_seed: int = 0,
    materials: tuple[MaterialParams, ...] = DEFAULT_MATERIALS,
    heights: tuple[float, ...] = HEIGHTS_M,
    poses: tuple[str, ...] = POSES,
) -> list[tuple[str, DropScenario]]:
    """Every height x pose x material x repetition scenario, sorted by trace id."""
    if int(reps_per_condition) != reps_per_condition or reps_per_condition < 1:
        raise InvalidScenarioError("reps_per_condition must be a positive integer")
    out = []
    for (hi, h), (pi, pose), mat, rep in itertools.product(
        enumerate(heights), enumerate(poses), materials, range(int(reps_per_condition))
    ):
        seed = condition_seed(base_seed, hi, pi, mat.label, rep)
        out.append((trace_id_for(h, pose, mat.name, rep), DropScenario(h, pose, mat, seed)))
    out.sort(key=lambda item: item[0])
    return out


def generate_grid(
    reps_per_condition: int,
    base_seed: int = 0,
    materials: tuple[MaterialParams, ...] = DEFAULT_MATERIALS,
) -> list[SimulatedDrop]:
    """Simulate the full 4 heights x 5 poses x 5 materials grid, ``reps_per_condition`` times each."""
    drops = []
    for trace_id, scenario in grid_scenarios(reps_per_condition, base_seed, materials):
        trace, truth = simulate(scenario)
        drops.append(SimulatedDrop(trace_id, scenario, trace, truth))
    return drops
