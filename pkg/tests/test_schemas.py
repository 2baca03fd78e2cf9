import json
import math
from pathlib import Path

import numpy as np
import pytest

from mkfit.errors import ConfigError
from mkfit.measure import Empirical, Uniform
from mkfit.schemas import PolygonSpec, RunConfigFile, SeedFile, load_run_config, parse_document
from mkfit.seeds import ExplicitSeed, HilbertSeed, SinusoidSeed

PRESETS = Path(__file__).resolve().parent.parent / "presets"

MINIMAL = {
    "delta": 0.05,
    "iterations": 10,
    "domain": {"vertices": [[0, 0], [1, 0], [1, 1], [0, 1]]},
    "seed": {"kind": "hilbert", "order": 2},
}


def document(**changes) -> str:
    data = json.loads(json.dumps(MINIMAL))
    data.update(changes)
    return json.dumps(data)


# ========== presets ==========

@pytest.mark.parametrize("name", [
    "appendixA_triangle", "appendixA_hexagonal_star", "appendixA_chevron", "nonconvex_random",
])
def test_presets_validate(name):
    config = load_run_config(PRESETS / f"{name}.json").to_evolve_config(PRESETS)
    assert config.iterations >= 300
    assert isinstance(config.measure, Uniform)
    assert config.domain.area > 0


def test_triangle_preset_values():
    config = load_run_config(PRESETS / "appendixA_triangle.json").to_evolve_config(PRESETS)
    assert config.p == 2.0
    assert config.delta == 0.003
    assert config.kappa == 0.85
    assert (config.smoothing.y, config.smoothing.field, config.smoothing.grad) == (1, 3, 3)
    assert config.seed == SinusoidSeed(0.005, 200.0, 0.05, 500)
    assert len(config.domain.vertices) == 3


def test_nonconvex_preset_values():
    config = load_run_config(PRESETS / "nonconvex_random.json").to_evolve_config(PRESETS)
    assert isinstance(config.seed, ExplicitSeed)
    assert config.seed.random_count == 200
    assert (config.c_schedule.scale, config.c_schedule.denominator, config.c_schedule.exponent) == (1.0, 2000.0, 2.0)
    assert config.lambda_schedule.mode == "rational"
    assert config.lambda_schedule.coefficient == 0.01
    assert not config.domain.is_convex


def test_overrides_apply():
    config = parse_document(RunConfigFile, document()).to_evolve_config(iterations=3, frame_stride=7)
    assert config.iterations == 3
    assert config.frame_stride == 7
    assert config.seed == HilbertSeed(2)


def test_defaults():
    config = parse_document(RunConfigFile, document()).to_evolve_config()
    assert config.p == 2.0
    assert config.kappa == 0.0
    assert config.c_schedule.exponent is None
    assert config.lambda_schedule.mode == "linear"
    assert config.line_search is None


def test_validated_document_survives_a_dump():
    first = parse_document(RunConfigFile, document(kappa=0.5))
    second = parse_document(RunConfigFile, first.model_dump_json())
    assert second == first


# ========== rejections ==========

@pytest.mark.parametrize(
    "changes,key",
    [
        (dict(iterations=0), "iterations"),
        (dict(delta=-1.0), "delta"),
        (dict(kappa=2.0), "kappa"),
        (dict(p=0.5), "p"),
        (dict(colour="red"), "colour"),
        (dict(seed={"kind": "hilbert", "order": 13}), "seed.hilbert.order"),
    ],
)
def test_bad_values_name_their_key(changes, key):
    with pytest.raises(ConfigError) as info:
        parse_document(RunConfigFile, document(**changes))
    assert info.value.key == key
    assert key in str(info.value)


def test_missing_required_key():
    data = dict(MINIMAL)
    del data["delta"]
    with pytest.raises(ConfigError) as info:
        parse_document(RunConfigFile, json.dumps(data))
    assert info.value.key == "delta"


def test_invalid_json():
    with pytest.raises(ConfigError):
        parse_document(RunConfigFile, "{not json")


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")


def test_polygon_needs_exactly_one_form():
    with pytest.raises(ValueError):
        PolygonSpec()
    with pytest.raises(ValueError):
        PolygonSpec(vertices=[[0, 0], [1, 0], [0, 1]], star={"count": 3, "radii": [1.0]})


def test_explicit_seed_needs_one_source():
    with pytest.raises(ConfigError):
        parse_document(RunConfigFile, document(seed={"kind": "explicit"}))


# ========== domains, measures, seeds ==========

def test_polar_domain():
    polygon = PolygonSpec(polar=[[1.0, 0.0], [1.0, math.pi / 2], [1.0, math.pi], [1.0, 3 * math.pi / 2]]).to_polygon()
    assert polygon.area == pytest.approx(2.0)


def test_star_domain_alternates_radii():
    polygon = PolygonSpec(star={"count": 12, "radii": [1.0, 0.3]}).to_polygon()
    radii = np.hypot(*polygon.vertices.T)
    assert sorted(np.round(radii, 12)) == [0.3] * 6 + [1.0] * 6


def test_inline_empirical_measure():
    text = document(measure={"kind": "empirical", "atoms": [[0, 0], [1, 1]], "weights": [1, 3]})
    config = parse_document(RunConfigFile, text).to_evolve_config()
    assert isinstance(config.measure, Empirical)
    assert np.allclose(config.measure.weights, [0.25, 0.75])


def test_csv_measure_and_seed_resolve_against_the_config(tmp_path):
    (tmp_path / "atoms.csv").write_text("x,y\n0.1,0.1\n0.9,0.9\n")
    (tmp_path / "seed.csv").write_text("x,y\n0,0\n0.5,0.5\n1,1\n")
    text = document(measure={"kind": "empirical", "csv": "atoms.csv"}, seed={"kind": "explicit", "csv": "seed.csv"})
    config = parse_document(RunConfigFile, text).to_evolve_config(tmp_path)
    assert len(config.measure.atoms) == 2
    assert isinstance(config.seed, ExplicitSeed)
    assert np.allclose(config.seed.points, [[0, 0], [0.5, 0.5], [1, 1]])


def test_seed_file_defaults_to_unit_square():
    seed_file = parse_document(SeedFile, json.dumps({"seed": {"kind": "spanning_walk", "epsilon": 0.2}}))
    assert seed_file.domain.to_polygon().area == pytest.approx(1.0)
