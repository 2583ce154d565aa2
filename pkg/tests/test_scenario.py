"""
Tests for scenario parsing and the bundled scenarios.
"""
import json
import math

import pytest

from fsskit.config import DEFAULT_CONFIG
from fsskit.errors import SpecError
from fsskit.scenario import (
    PIPELINES,
    bundled_scenarios,
    load_scenario,
    parse_scenario,
)


def _doc(**changes):
    doc = {
        "schema": 1,
        "name": "sample",
        "pipeline": "fss",
        "system": {"b": [1, -1]},
        "alphas": [0.0],
        "plan": {"points": [[2.0, 1.0]]},
    }
    doc.update(changes)
    return doc


class TestBundled:
    """Bundled scenario files."""

    def test_list(self):
        names = bundled_scenarios()
        for name in ("trivial-n2", "huge-a", "expdecay-n2", "expdecay-n4", "pencil-sigma"):
            assert name in names

    @pytest.mark.parametrize("name", ["trivial-n2", "huge-a", "expdecay-n2", "expdecay-n4", "pencil-sigma"])
    def test_every_bundled_scenario_loads(self, name):
        scenario = load_scenario(name)
        assert scenario.name == name
        assert scenario.pipeline in PIPELINES
        assert scenario.source is not None

    def test_trivial(self):
        scenario = load_scenario("trivial-n2")
        assert scenario.pipeline == "fss"
        assert scenario.alphas == [0.0, 1.0]
        assert scenario.plan.values() == [2 + 1j, -3 + 0.5j, 0.5 - 4j]
        assert scenario.plan.samples == 21
        assert scenario.plan.export
        assert scenario.system.n == 2

    def test_pencil_scenario_reduces(self):
        scenario = load_scenario("pencil-sigma")
        assert scenario.spec is None
        assert scenario.pencil is not None
        assert scenario.system.n == 2
        assert scenario.alphas == [5.0]

    def test_ray_count(self):
        scenario = load_scenario("expdecay-n2")
        plan = scenario.plan
        assert len(plan.rays) == 8
        assert plan.rays[0] == pytest.approx(math.pi / 8)
        assert len(plan.values()) == 8 * 3
        assert plan.threshold

    def test_load_from_path(self, tmp_path):
        path = tmp_path / "sample.json"
        path.write_text(json.dumps(_doc()))
        scenario = load_scenario(path)
        assert scenario.name == "sample"
        assert scenario.source == path

    def test_missing(self):
        with pytest.raises(SpecError):
            load_scenario("no-such-scenario")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SpecError):
            load_scenario(path)


class TestPlan:
    """Sampling plans."""

    def test_points_come_before_rays(self):
        plan = parse_scenario(_doc(plan={"points": [[1.0, 0.0]], "rays": [0.0], "radii": [2.0, 3.0]})).plan
        values = plan.values()
        assert values[0] == 1 + 0j
        assert values[1] == pytest.approx(2 + 0j)
        assert values[2] == pytest.approx(3 + 0j)

    def test_directions(self):
        plan = parse_scenario(_doc(plan={"rays": [math.pi / 2], "radii": [1.0]})).plan
        assert plan.directions()[0] == pytest.approx(1j)

    def test_to_dict(self):
        plan = parse_scenario(_doc()).plan
        data = plan.to_dict()
        assert data["points"] == [[2.0, 1.0]]
        assert data["samples"] == 101
        assert data["quantity"] == "theta"

    def test_sectors_pipeline_allows_empty_plan(self):
        scenario = parse_scenario(_doc(pipeline="sectors", plan={}))
        assert scenario.plan.values() == []

    def test_threshold_allows_empty_plan(self):
        scenario = parse_scenario(_doc(plan={"threshold": True}))
        assert scenario.plan.threshold


class TestValidation:
    """Schema violations raise SpecError."""

    @pytest.mark.parametrize("changes", [
        {"schema": 2},
        {"name": ""},
        {"pipeline": "bogus"},
        {"extra": 1},
        {"alphas": [-1.0]},
        {"alphas": []},
        {"plan": {}},
        {"plan": {"points": [[1, 0]], "unknown": True}},
        {"plan": {"points": [[1, 0]], "quantity": "energy"}},
        {"plan": {"points": [[1, 0]], "radii": [-1.0]}},
        {"plan": {"points": [[1, 0]], "samples": 1}},
        {"plan": {"ray_count": 0}},
        {"pipeline": "largesector"},
        {"pipeline": "sturm"},
        {"tolerances": {"picard.nope": 1}},
        {"tolerances": {"picard.max_iter": "many"}},
    ])
    def test_rejected(self, changes):
        with pytest.raises(SpecError):
            parse_scenario(_doc(**changes))

    def test_both_system_and_pencil(self):
        doc = _doc(pencil={"sigma": 0, "p0": 0})
        with pytest.raises(SpecError):
            parse_scenario(doc)

    def test_neither_system_nor_pencil(self):
        doc = _doc()
        del doc["system"]
        with pytest.raises(SpecError):
            parse_scenario(doc)

    def test_pencil_needs_compatible_pipeline(self):
        doc = _doc(pencil={"sigma": 0, "p0": 0})
        del doc["system"]
        with pytest.raises(SpecError):
            parse_scenario(doc)
        doc["pipeline"] = "sturm"
        assert parse_scenario(doc).pencil is not None

    def test_not_an_object(self):
        with pytest.raises(SpecError):
            parse_scenario([1, 2])


class TestConfig:
    """Scenario tolerances merge over the base configuration."""

    def test_scenario_tolerances(self):
        config = load_scenario("huge-a").config(base=DEFAULT_CONFIG)
        assert config["picard"]["search_ceiling"] == 20.0
        assert config["picard"]["search_samples"] == 4
        assert config["picard"]["eps_fix"] == DEFAULT_CONFIG["picard"]["eps_fix"]

    def test_overrides_win(self):
        config = load_scenario("huge-a").config(base=DEFAULT_CONFIG, overrides={"picard.search_ceiling": "30"})
        assert config["picard"]["search_ceiling"] == 30.0

    def test_base_untouched(self):
        load_scenario("huge-a").config(base=DEFAULT_CONFIG)
        assert DEFAULT_CONFIG["picard"]["search_ceiling"] == 400.0
