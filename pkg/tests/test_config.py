import copy

import numpy as np
import pytest
import yaml

from multipole_resolvent import CartesianPolicy, ConfigError, RadialModePolicy
from multipole_resolvent.config import (build_geometry, build_potential, config_digest, eps_policy, lambda_grid,
                                        load_config, parse_eps_policy, validate_config)

BASE = {
    "name": "t",
    "potential": {"dimension": 2, "hardy_constant": 1.0,
                  "poles": [{"position": [0, 0], "profile": "inverse_square", "coefficient": 1.0,
                             "cutoff": 0.5, "taper": 0.25}]},
    "sweep": {"lambda_min": 25, "lambda_max": 100, "lambda_count": 3,
              "epsilon": {"policy": "relative", "value": 1e-6},
              "geometry": {"kind": "radial_modes", "chi": {"r_in": 0.5, "r_out": 0.8}}},
}


def test_round_trip_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(BASE))
    assert load_config(p) == BASE


@pytest.mark.parametrize("path,value", [(("potential", "dimension"), 4),
                                        (("sweep", "geometry", "kind"), "spectral"),
                                        (("sweep", "geometry", "ppw"), 5),
                                        (("bogus",), 1)])
def test_schema_rejects(path, value):
    cfg = copy.deepcopy(BASE)
    node = cfg
    for k in path[:-1]:
        node = node[k]
    node[path[-1]] = value
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_digest_ignores_runtime_settings():
    a = copy.deepcopy(BASE)
    b = dict(copy.deepcopy(BASE), threads=4, output={"dir": "elsewhere"})
    assert config_digest(a) == config_digest(b)
    c = copy.deepcopy(BASE)
    c["sweep"]["lambda_max"] = 200
    assert config_digest(a) != config_digest(c)


def test_lambda_grid_geometric():
    lams = lambda_grid({"lambda_min": 100, "lambda_max": 1600, "lambda_count": 5})
    assert lams == [100.0, 200.0, 400.0, 800.0, 1600.0]
    assert lambda_grid({"lambdas": [50, 60]}) == [50.0, 60.0]


def test_builders():
    spec = build_potential(BASE)
    assert spec.dimension == 2 and len(spec.poles) == 1 and spec.is_unipolar_radial()
    assert isinstance(build_geometry(BASE), RadialModePolicy)
    cfg = copy.deepcopy(BASE)
    cfg["sweep"]["geometry"] = {"kind": "cartesian", "ppw": 12, "chi": {"r_in": 0.5, "r_out": 0.8}}
    geom = build_geometry(cfg)
    assert isinstance(geom, CartesianPolicy) and geom.ppw == 12
    assert eps_policy(BASE["sweep"]) == ("relative", 1e-6)


def test_parse_eps_policy():
    assert parse_eps_policy("relative:1e-4") == ("relative", 1e-4)
    assert parse_eps_policy("absolute:0.5") == ("absolute", 0.5)
    with pytest.raises(ConfigError):
        parse_eps_policy("sideways:1")


def test_barrier_background():
    cfg = {"potential": {"dimension": 2, "background": {"profile": "barrier_well"}}}
    spec = build_potential(cfg)
    from multipole_resolvent import evaluate_potential
    assert np.allclose(evaluate_potential(spec, np.array([[1.5, 0.0], [2.2, 0.0]])), [-50, 50])
