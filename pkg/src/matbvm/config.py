"""JSON experiment configs.

Schema (version 1).  All keys other than those listed are rejected.

    schema_version   1 (optional)
    functional       "entry" | "quadratic" | "bilinear" | "logdet" | "entropy"
                     | "eigenvalue" | "lda" | "qda", or an object {kind, ...}
    i, j, m, u, v, target
                     functional parameters when ``functional`` is a string
    prior            "wishart" | "gaussian", or {kind, b} / {kind, lambda_cap}
    b, lambda_cap    prior parameters when ``prior`` is a string (defaults 3, 10)
    p                dimension; required for truth "identity", checked otherwise
    n                sample size (per class for lda/qda)
    x, y             lda/qda only: {"n": int} per class; sizes must agree
    truth            "identity" | [[...]] | {"diag": [...]} | {"csv": path}
                     lda/qda: {mu_x, mu_y, sigma_x, sigma_y, z}, each sigma in
                     any of the matrix forms above
    n_draws          default 10000
    replications     default 1
    alpha            default 0.1
    seed, stream_id  default 0 (the CLI ``--seed`` flag overrides ``seed``)
    mcmc             {steps, burn_in, thinning, step_scale, adapt}; burn-in
                     defaults to 20% of steps, thinning to 1
    plugin_variance  default false
    t_grid           MGF grid, default [-2, -1, -0.5, 0, 0.5, 1, 2]

Relative CSV paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .discriminant import LDA, QDA, DaTruth
from .errors import ConfigParse, DimensionMismatch, NotPositiveDefinite
from .functionals import TruthSpec, functional_from_dict, functional_to_dict
from .harness import DEFAULT_T_GRID, ExperimentConfig
from .linalg import cholesky, matrix_from_csv, symmetrize
from .model import ConstrainedGaussianPrior, WishartPrior
from .rng import RngStream
from .samplers import McmcConfig

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "functional", "i", "j", "m", "u", "v", "target", "prior", "b", "lambda_cap",
    "p", "n", "x", "y", "truth", "n_draws", "replications", "alpha", "seed", "stream_id", "mcmc",
    "plugin_variance", "t_grid",
}
_FUNCTIONAL_PARAMS = ("i", "j", "m", "u", "v", "target")
_MCMC_KEYS = {"steps", "burn_in", "thinning", "step_scale", "adapt"}
_DA_TRUTH_KEYS = {"mu_x", "mu_y", "sigma_x", "sigma_y", "z"}
_REQUIRED = object()


def _line_of(text: str | None, key: str) -> int | None:
    """First line mentioning ``"key"``, for diagnostics."""
    if not text:
        return None
    pattern = re.compile(r'"' + re.escape(key) + r'"')
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return number
    return None


class _Parser:
    def __init__(self, text: str | None, base_dir: Path):
        self.text = text
        self.base_dir = base_dir

    def fail(self, field: str, message: str) -> ConfigParse:
        return ConfigParse(message, field=field, line=_line_of(self.text, field.split(".")[-1]))

    def integer(self, obj: dict, key: str, default=_REQUIRED, minimum: int | None = None, field: str | None = None):
        field = field or key
        if key not in obj and default is _REQUIRED:
            raise self.fail(field, f"missing required field {field!r}")
        value = obj.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(field, f"{field} must be an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.fail(field, f"{field} must be >= {minimum}, got {value}")
        return value

    def number(self, obj: dict, key: str, default=None, field: str | None = None) -> float:
        field = field or key
        value = obj.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(field, f"{field} must be a number, got {value!r}")
        return float(value)

    def matrix(self, spec, field: str, p: int | None) -> np.ndarray:
        if spec == "identity":
            if p is None:
                raise self.fail("p", "truth 'identity' needs p")
            m = np.eye(p)
        elif isinstance(spec, dict):
            if set(spec) == {"diag"}:
                m = np.diag(np.asarray(spec["diag"], dtype=float))
            elif set(spec) == {"csv"}:
                path = Path(spec["csv"])
                if not path.is_absolute():
                    path = self.base_dir / path
                try:
                    m = matrix_from_csv(path)
                except OSError as exc:
                    raise self.fail(field, f"cannot read {path}: {exc}") from exc
            else:
                raise self.fail(field, f"matrix object must be {{diag}} or {{csv}}, got keys {sorted(spec)}")
        elif isinstance(spec, list):
            try:
                m = np.asarray(spec, dtype=float)
            except (TypeError, ValueError) as exc:
                raise self.fail(field, f"malformed matrix: {exc}") from exc
        else:
            raise self.fail(field, f"unsupported matrix specification {spec!r}")
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise self.fail(field, f"{field} must be square, got shape {m.shape}")
        if p is not None and m.shape[0] != p:
            raise self.fail(field, f"{field} is {m.shape[0]} x {m.shape[0]} but p = {p}")
        if not np.allclose(m, m.T, rtol=1e-12, atol=1e-12):
            raise self.fail(field, f"{field} is not symmetric")
        try:
            cholesky(m)
        except (NotPositiveDefinite, ValueError) as exc:
            raise self.fail(field, f"{field} is not positive definite") from exc
        return symmetrize(m)

    def prior(self, obj: dict):
        spec = obj.get("prior")
        if spec is None:
            raise self.fail("prior", "missing required field 'prior'")
        if isinstance(spec, str):
            kind, params, prefix = spec.lower(), obj, ""
        elif isinstance(spec, dict):
            params = dict(spec)
            kind = str(params.pop("kind", "")).lower()
            prefix = "prior."
            extra = set(params) - {"b", "lambda_cap"}
            if extra:
                raise self.fail("prior." + sorted(extra)[0], f"unknown prior keys {sorted(extra)}")
        else:
            raise self.fail("prior", f"prior must be a string or object, got {spec!r}")
        try:
            if kind == "wishart":
                if "lambda_cap" in params:
                    raise self.fail(prefix + "lambda_cap", "lambda_cap does not apply to the Wishart prior")
                return WishartPrior(self.integer(params, "b", 3, minimum=1, field=prefix + "b"))
            if kind == "gaussian":
                if "b" in params:
                    raise self.fail(prefix + "b", "b does not apply to the Gaussian prior")
                return ConstrainedGaussianPrior(self.number(params, "lambda_cap", 10.0, field=prefix + "lambda_cap"))
        except ValueError as exc:
            if isinstance(exc, ConfigParse):
                raise
            raise self.fail(prefix + ("b" if kind == "wishart" else "lambda_cap"), str(exc)) from exc
        raise self.fail("prior", f"unknown prior {kind!r}")

    def functional(self, obj: dict):
        spec = obj.get("functional")
        if spec is None:
            raise self.fail("functional", "missing required field 'functional'")
        if isinstance(spec, str) and spec.lower() in (LDA, QDA):
            stray = [k for k in _FUNCTIONAL_PARAMS if k in obj]
            if stray:
                raise self.fail(stray[0], f"{stray[0]} does not apply to {spec}")
            return spec.lower()
        if isinstance(spec, str):
            body = {"kind": spec, **{k: obj[k] for k in _FUNCTIONAL_PARAMS if k in obj}}
            prefix = ""
        elif isinstance(spec, dict):
            stray = [k for k in _FUNCTIONAL_PARAMS if k in obj]
            if stray:
                raise self.fail(stray[0], f"{stray[0]} must sit inside the functional object")
            body = spec
            prefix = "functional."
        else:
            raise self.fail("functional", f"functional must be a string or object, got {spec!r}")
        try:
            return functional_from_dict(body)
        except (ValueError, TypeError) as exc:
            bad = re.search(r"\['(\w+)'", str(exc))
            field = prefix + bad.group(1) if bad else "functional"
            raise self.fail(field, str(exc)) from exc

    def mcmc(self, obj: dict) -> McmcConfig | None:
        spec = obj.get("mcmc")
        if spec is None:
            return None
        if not isinstance(spec, dict):
            raise self.fail("mcmc", "mcmc must be an object")
        extra = set(spec) - _MCMC_KEYS
        if extra:
            raise self.fail("mcmc." + sorted(extra)[0], f"unknown mcmc keys {sorted(extra)}")
        adapt = spec.get("adapt", True)
        if not isinstance(adapt, bool):
            raise self.fail("mcmc.adapt", "mcmc.adapt must be true or false")
        cfg = McmcConfig(
            steps=self.integer(spec, "steps", minimum=1, field="mcmc.steps") if "steps" in spec else None,
            burn_in=self.integer(spec, "burn_in", minimum=0, field="mcmc.burn_in") if "burn_in" in spec else None,
            thinning=self.integer(spec, "thinning", 1, minimum=1, field="mcmc.thinning"),
            step_scale=self.number(spec, "step_scale", 1.0, field="mcmc.step_scale"),
            adapt=adapt,
        )
        if cfg.steps is not None and cfg.burn_in is not None and cfg.burn_in >= cfg.steps:
            raise self.fail("mcmc.burn_in", "mcmc.burn_in must be smaller than mcmc.steps")
        return cfg

    def parse(self, obj) -> ExperimentConfig:
        if not isinstance(obj, dict):
            raise ConfigParse("config must be a JSON object", field="", line=1)
        extra = set(obj) - _TOP_KEYS
        if extra:
            key = sorted(extra)[0]
            raise self.fail(key, f"unknown config keys {sorted(extra)}")
        version = obj.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise self.fail("schema_version", f"unsupported schema_version {version!r}")

        functional = self.functional(obj)
        prior = self.prior(obj)
        is_da = isinstance(functional, str)
        p = self.integer(obj, "p", minimum=1) if "p" in obj else None

        if is_da:
            n = self._da_sizes(obj)
            truth = self._da_truth(obj.get("truth"), p)
        else:
            for key in ("x", "y"):
                if key in obj:
                    raise self.fail(key, f"{key} only applies to lda/qda configs")
            n = self.integer(obj, "n", minimum=1)
            if "truth" not in obj:
                raise self.fail("truth", "missing required field 'truth'")
            truth = TruthSpec.from_sigma(self.matrix(obj["truth"], "truth", p))

        alpha = self.number(obj, "alpha", 0.1)
        if not 0.0 < alpha < 1.0:
            raise self.fail("alpha", f"alpha must lie in (0, 1), got {alpha}")
        n_draws = self.integer(obj, "n_draws", 10_000, minimum=100)
        replications = self.integer(obj, "replications", 1, minimum=1)
        seed = self._stream(obj)
        plugin_variance = obj.get("plugin_variance", False)
        if not isinstance(plugin_variance, bool):
            raise self.fail("plugin_variance", "plugin_variance must be true or false")
        t_grid = obj.get("t_grid", list(DEFAULT_T_GRID))
        if not isinstance(t_grid, list) or not all(
            isinstance(t, (int, float)) and not isinstance(t, bool) and abs(t) <= 2 for t in t_grid
        ):
            raise self.fail("t_grid", "t_grid must be a list of numbers with |t| <= 2")

        try:
            return ExperimentConfig(
                truth=truth,
                functional=functional,
                prior=prior,
                n=n,
                n_draws=n_draws,
                replications=replications,
                alpha=alpha,
                seed=seed,
                mcmc=self.mcmc(obj),
                plugin_variance=plugin_variance,
                t_grid=tuple(float(t) for t in t_grid),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigParse):
                raise
            raise self.fail("functional", str(exc)) from exc

    def _stream(self, obj: dict) -> RngStream:
        seed = self.integer(obj, "seed", 0, minimum=0)
        stream_id = self.integer(obj, "stream_id", 0, minimum=0)
        try:
            return RngStream(seed, stream_id)
        except ValueError as exc:
            raise self.fail("seed" if seed >= 2**64 else "stream_id", str(exc)) from exc

    def _da_sizes(self, obj: dict) -> int:
        sizes = {}
        for key in ("x", "y"):
            if key in obj:
                spec = obj[key]
                if not isinstance(spec, dict) or set(spec) != {"n"}:
                    raise self.fail(key, f"{key} must be an object {{\"n\": int}}")
                sizes[key] = self.integer(spec, "n", minimum=1, field=f"{key}.n")
        if "n" in obj:
            n = self.integer(obj, "n", minimum=1)
            for key, size in sizes.items():
                if size != n:
                    raise self.fail(f"{key}.n", f"{key}.n = {size} differs from n = {n}")
            return n
        if set(sizes) != {"x", "y"}:
            raise self.fail("n", "lda/qda configs need n, or both x.n and y.n")
        if sizes["x"] != sizes["y"]:
            raise self.fail("y.n", f"class sizes must be equal: x.n = {sizes['x']}, y.n = {sizes['y']}")
        return sizes["x"]

    def _da_truth(self, spec, p: int | None) -> DaTruth:
        if not isinstance(spec, dict):
            raise self.fail("truth", "lda/qda truth must be an object {mu_x, mu_y, sigma_x, sigma_y, z}")
        keys = set(spec)
        if keys != _DA_TRUTH_KEYS:
            missing = sorted(_DA_TRUTH_KEYS - keys)
            bad = sorted(keys - _DA_TRUTH_KEYS)
            field = "truth." + (missing[0] if missing else bad[0])
            raise self.fail(field, f"truth keys must be {sorted(_DA_TRUTH_KEYS)}")
        vectors = {}
        for key in ("mu_x", "mu_y", "z"):
            try:
                vec = np.asarray(spec[key], dtype=float)
            except (TypeError, ValueError) as exc:
                raise self.fail("truth." + key, f"truth.{key} is not numeric") from exc
            if vec.ndim != 1:
                raise self.fail("truth." + key, f"truth.{key} must be a vector")
            vectors[key] = vec
        dim = p if p is not None else vectors["mu_x"].size
        for key, vec in vectors.items():
            if vec.size != dim:
                raise self.fail("truth." + key, f"truth.{key} has length {vec.size}, expected {dim}")
        sigma_x = self.matrix(spec["sigma_x"], "truth.sigma_x", dim)
        sigma_y = self.matrix(spec["sigma_y"], "truth.sigma_y", dim)
        try:
            return DaTruth(vectors["mu_x"], vectors["mu_y"], sigma_x, sigma_y, vectors["z"])
        except DimensionMismatch as exc:
            raise self.fail("truth", str(exc)) from exc


def parse_config_dict(obj, text: str | None = None, base_dir=".") -> ExperimentConfig:
    return _Parser(text, Path(base_dir)).parse(obj)


def parse_config_text(text: str, base_dir=".") -> ExperimentConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"invalid JSON: {exc.msg}", field=None, line=exc.lineno) from exc
    return parse_config_dict(obj, text, base_dir)


def parse_config(path) -> ExperimentConfig:
    """Read and validate an experiment config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}", field=None, line=None) from exc
    return parse_config_text(text, path.parent)


def load_json(path) -> dict:
    """Raw JSON object from ``path`` with ConfigParse diagnostics."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(obj, dict):
        raise ConfigParse("config must be a JSON object", field="", line=1)
    return obj


def _prior_to_dict(prior) -> dict:
    if isinstance(prior, WishartPrior):
        return {"kind": "wishart", "b": int(prior.b)}
    return {"kind": "gaussian", "lambda_cap": float(prior.lambda_cap)}


def config_to_dict(config: ExperimentConfig) -> dict:
    """Canonical JSON-ready form; ``parse_config_dict`` inverts it exactly."""
    out = {"schema_version": SCHEMA_VERSION}
    if config.is_da:
        t = config.truth
        out["functional"] = config.functional.lower()
        out["truth"] = {
            "mu_x": t.mu_x.tolist(),
            "mu_y": t.mu_y.tolist(),
            "sigma_x": t.sigma_x.tolist(),
            "sigma_y": t.sigma_y.tolist(),
            "z": t.z.tolist(),
        }
    else:
        out["functional"] = functional_to_dict(config.functional)
        out["truth"] = config.truth.sigma_star.tolist()
    out.update(
        prior=_prior_to_dict(config.prior),
        p=int(config.truth.p),
        n=int(config.n),
        n_draws=int(config.n_draws),
        replications=int(config.replications),
        alpha=float(config.alpha),
        seed=int(config.seed.seed),
        stream_id=int(config.seed.stream_id),
        plugin_variance=bool(config.plugin_variance),
        t_grid=[float(t) for t in config.t_grid],
    )
    if config.mcmc is not None:
        m = config.mcmc
        mcmc = {"thinning": m.thinning, "step_scale": m.step_scale, "adapt": m.adapt}
        if m.steps is not None:
            mcmc["steps"] = m.steps
        if m.burn_in is not None:
            mcmc["burn_in"] = m.burn_in
        out["mcmc"] = mcmc
    return out


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True)
