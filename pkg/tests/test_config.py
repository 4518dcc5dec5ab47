import json

import numpy as np
import pytest

from matbvm.config import config_to_dict, dump_config, parse_config, parse_config_dict, parse_config_text
from matbvm.discriminant import DaTruth
from matbvm.errors import ConfigParse
from matbvm.functionals import Entry, Quadratic
from matbvm.model import ConstrainedGaussianPrior, WishartPrior

MINIMAL = {"functional": "entry", "i": 1, "j": 2, "target": "cov", "prior": "wishart", "b": 3, "p": 3, "n": 3000, "truth": "identity"}

DA = {
    "functional": "qda",
    "prior": "gaussian",
    "x": {"n": 100},
    "y": {"n": 100},
    "truth": {"mu_x": [0, 0], "mu_y": [1, 0], "sigma_x": "identity", "sigma_y": {"diag": [2, 1]}, "z": [0.5, 0]},
}


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj, indent=2))
    return path


def field_of(obj):
    with pytest.raises(ConfigParse) as info:
        parse_config_dict(obj, json.dumps(obj, indent=2))
    return info.value


class TestParse:
    def test_minimal(self, tmp_path):
        cfg = parse_config(write(tmp_path, MINIMAL))
        assert cfg.functional == Entry(1, 2, "covariance")
        assert cfg.prior == WishartPrior(3)
        assert np.array_equal(cfg.truth.sigma_star, np.eye(3))
        assert cfg.alpha == 0.1 and cfg.n == 3000 and cfg.n_draws == 10_000
        assert cfg.mcmc is None

    def test_nested_forms(self):
        cfg = parse_config_dict(
            {
                "functional": {"kind": "quadratic", "v": [1, 1], "target": "prec"},
                "prior": {"kind": "gaussian", "lambda_cap": 5},
                "n": 100,
                "truth": {"diag": [2, 3]},
                "mcmc": {"thinning": 3, "steps": 1000},
            }
        )
        assert cfg.functional == Quadratic([1.0, 1.0], "precision")
        assert cfg.prior == ConstrainedGaussianPrior(5.0)
        assert cfg.mcmc.resolve() == (1000, 200)
        assert cfg.mcmc.thinning == 3

    def test_csv_truth(self, tmp_path):
        np.savetxt(tmp_path / "s.csv", [[2.0, 0.5], [0.5, 1.0]], delimiter=",")
        cfg = parse_config(write(tmp_path, {**MINIMAL, "p": 2, "truth": {"csv": "s.csv"}}))
        assert cfg.truth.sigma_star[0, 1] == 0.5

    def test_da(self):
        cfg = parse_config_dict(DA)
        assert cfg.is_da and cfg.n == 100
        assert isinstance(cfg.truth, DaTruth)
        assert np.array_equal(cfg.truth.sigma_y, np.diag([2.0, 1.0]))


class TestErrors:
    def test_non_pd_truth(self):
        assert field_of({**MINIMAL, "p": 2, "truth": [[1, 2], [2, 1]]}).field == "truth"

    def test_unequal_class_sizes(self):
        assert field_of({**DA, "y": {"n": 120}}).field == "y.n"

    def test_alpha(self):
        err = field_of({**MINIMAL, "alpha": 1.5})
        assert err.field == "alpha"
        assert err.line is not None

    def test_unknown_key(self):
        assert field_of({**MINIMAL, "colour": "blue"}).field == "colour"
        assert field_of({**MINIMAL, "mcmc": {"speed": 1}}).field == "mcmc.speed"

    def test_json_syntax_line(self):
        with pytest.raises(ConfigParse) as info:
            parse_config_text('{\n  "n": 3,\n  oops\n}')
        assert info.value.line == 3

    def test_wrong_dimension(self):
        assert field_of({**MINIMAL, "truth": [[1.0]]}).field == "truth"

    def test_bad_functional_param(self):
        assert field_of({**MINIMAL, "functional": "logdet"}).field == "i"

    def test_record(self):
        record = field_of({**MINIMAL, "alpha": 0}).record()
        assert set(record) == {"error", "field", "line", "message"}
        assert record["error"] == "ConfigParse"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigParse):
            parse_config(tmp_path / "nope.json")


class TestRoundTrip:
    @pytest.mark.parametrize(
        "obj",
        [
            MINIMAL,
            DA,
            {**{k: v for k, v in MINIMAL.items() if k != "b"}, "prior": {"kind": "gaussian", "lambda_cap": 3.5},
             "mcmc": {"burn_in": 10, "steps": 500}},
            {"functional": {"kind": "bilinear", "u": [1, 0], "v": [0.5, 2]}, "prior": "wishart", "n": 50,
             "truth": [[1, 0.2], [0.2, 1]], "seed": 9, "stream_id": 4, "alpha": 0.2, "plugin_variance": True},
        ],
    )
    def test_round_trip(self, obj):
        first = parse_config_dict(obj)
        text = dump_config(first)
        second = parse_config_text(text)
        assert config_to_dict(second) == config_to_dict(first)
        assert dump_config(second) == text
