import json
import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from dropmat.errors import FormatError, InvalidScenarioError
from dropmat.segmentation import segment_magnitude
from dropmat.signal import magnitude
from dropmat.simulator import (
    DEFAULT_MATERIALS,
    HEIGHTS_M,
    POSES,
    DropScenario,
    generate_grid,
    grid_scenarios,
    load_materials,
    simulate,
)

G = 9.80665
BY_NAME = {m.name: m for m in DEFAULT_MATERIALS}


def runs(mask):
    """(start, length) of every run of True."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2] - edges[::2]))


def bursts(values, start):
    return runs(values[start:] > 1.5 * G)


def test_presets():
    assert [m.name for m in DEFAULT_MATERIALS] == ["quilt", "carpet", "asphalt", "granite", "marble"]
    assert [m.label for m in DEFAULT_MATERIALS] == [0, 1, 2, 3, 4]
    e = [m.restitution for m in DEFAULT_MATERIALS]
    assert e == sorted(e)
    assert BY_NAME["marble"].impact_peak_scale > BY_NAME["quilt"].impact_peak_scale


@pytest.mark.parametrize("height", HEIGHTS_M)
def test_free_fall_duration(height):
    trace, truth = simulate(DropScenario(height, "screen", BY_NAME["granite"], seed=2))
    v = magnitude(trace).values
    start, length = runs(v < 0.5 * G)[0]
    expected = math.sqrt(2 * height / G)
    assert length / trace.sample_rate_hz == pytest.approx(expected, rel=0.10)
    assert truth.fall_duration_s == pytest.approx(expected, rel=0.03)
    assert truth.impact_speed == pytest.approx(math.sqrt(2 * G * height), rel=1e-9)
    assert abs(start - truth.weightless_start) <= 1


def test_hold_and_rest_read_gravity(marble_drop):
    trace, truth = marble_drop
    v = magnitude(trace).values
    assert np.mean(v[: truth.weightless_start - 5]) == pytest.approx(G, abs=0.2)
    assert np.all(np.abs(v[truth.rest_index + 1 :] - G) < 0.5)


def test_inelastic_surface_gives_single_burst():
    mat = replace(BY_NAME["marble"], restitution=0.0)
    trace, truth = simulate(DropScenario(0.8, "screen", mat, seed=3))
    v = magnitude(trace).values
    assert truth.bounce_count == 0
    assert len(bursts(v, truth.weightless_start)) == 1


def test_hard_surface_bounces():
    trace, truth = simulate(DropScenario(1.2, "screen", BY_NAME["marble"], seed=3))
    v = magnitude(trace).values
    assert truth.bounce_count >= 2
    assert len(bursts(v, truth.weightless_start)) >= 2


@pytest.mark.parametrize("height", HEIGHTS_M)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hard_floor_spikes_higher(height, seed):
    def first_spike(name):
        trace, truth = simulate(DropScenario(height, "screen", BY_NAME[name], seed=seed))
        return magnitude(trace).values[truth.impact_index : truth.impact_index + 8].max()

    assert first_spike("marble") > first_spike("quilt")


def test_ground_truth_ordering():
    for _, sc in grid_scenarios(1)[::7]:
        trace, truth = simulate(sc)
        assert 0 < truth.weightless_start < truth.impact_index <= truth.rest_index < len(trace)


def test_segmentation_recovers_truth(marble_drop, quilt_drop):
    for trace, truth in (marble_drop, quilt_drop):
        seg = segment_magnitude(magnitude(trace))
        assert abs(seg.t_c - truth.impact_index) <= 3
        assert abs(seg.t_w - truth.rest_index) <= 3


def test_deterministic():
    sc = DropScenario(0.4, "corner", BY_NAME["carpet"], seed=42)
    a, ta = simulate(sc)
    b, tb = simulate(sc)
    assert np.array_equal(a.samples, b.samples)
    assert ta == tb
    c, _ = simulate(replace(sc, seed=43))
    assert not np.array_equal(a.samples, c.samples)


def test_grid_counts():
    drops = generate_grid(1, base_seed=0)
    assert len(drops) == 100
    assert Counter(d.scenario.material.name for d in drops) == {m.name: 20 for m in DEFAULT_MATERIALS}
    assert len({d.trace_id for d in drops}) == 100
    assert drops[0].trace_id == "h040_back_asphalt_r000"


def test_full_grid_size():
    scenarios = grid_scenarios(40)
    assert len(scenarios) == 4000
    assert len({sc.seed for _, sc in scenarios}) == 4000
    assert Counter(sc.pose for _, sc in scenarios) == {p: 800 for p in POSES}


def test_grid_seed_changes_traces():
    a = grid_scenarios(1, base_seed=0)
    b = grid_scenarios(1, base_seed=1)
    assert [i for i, _ in a] == [i for i, _ in b]
    assert all(x.seed != y.seed for (_, x), (_, y) in zip(a, b))


@pytest.mark.parametrize(
    "kwargs",
    [{"height_m": 0.0}, {"height_m": -1.0}, {"height_m": float("nan")}, {"pose": "edge"}, {"pre_hold_s": 0.1}],
)
def test_invalid_scenario(kwargs):
    args = {"height_m": 0.8, "pose": "screen", "material": BY_NAME["quilt"], **kwargs}
    with pytest.raises(InvalidScenarioError):
        DropScenario(**args)


def test_invalid_reps():
    with pytest.raises(InvalidScenarioError):
        grid_scenarios(0)


class TestLoadMaterials:
    def test_override_by_name(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"materials": [{"name": "quilt", "restitution": 0.1}]}))
        (quilt,) = load_materials(path)
        assert quilt.restitution == 0.1
        assert quilt.impact_peak_scale == BY_NAME["quilt"].impact_peak_scale

    def test_new_material_needs_all_fields(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps([{"name": "wood", "label": 0}]))
        with pytest.raises(FormatError, match="wood"):
            load_materials(path)

    def test_unknown_field(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps([{"name": "quilt", "softness": 3}]))
        with pytest.raises(FormatError, match="softness"):
            load_materials(path)

    def test_duplicate_labels(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps([{"name": "quilt"}, {"name": "carpet", "label": 0}]))
        with pytest.raises(FormatError, match="unique"):
            load_materials(path)

    def test_bad_json(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{")
        with pytest.raises(FormatError):
            load_materials(path)
