"""Command-line front end.

    matbvm posterior --config cfg.json --seed 7 --out runs/a
    matbvm coverage  --config cfg.json --threads 4
    matbvm freq | da | kato | expand-check | regimes ...

Every command writes ``report.json`` (sorted keys, no timestamps) and/or its
CSV files, plus ``manifest.json`` with the command, config hash, seed,
library versions and wall time.  Failures write ``error.json`` and exit 2 for
config problems, 1 otherwise.

CSV column orders:

    standardized.csv  index,value
    qq.csv            theoretical,empirical
    hist.csv          left,right,count,density
    coverage.csv      replication,lo,hi,covered
    expansion.csv     p,n,pair,target,t,lhs,rhs,scaled_error
    kato.csv          eps,error              (series mode)
                      p,replication,value    (bias mode)
    regimes.csv       functional,target,column,required,satisfied
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import config_to_dict, load_json, parse_config
from .discriminant import LDA, separation_bound_check
from .errors import BvMError, ConfigParse
from .functionals import KINDS
from .harness import (
    coverage_study,
    expansion_sweep,
    frequentist_check,
    histogram_bins,
    qq_pairs,
    regime_rows,
    regime_table,
    run_posterior_bvm,
)
from .model import ConstrainedGaussianPrior, WishartPrior
from .perturbation import kato_error_scaling, second_order_bias_probe
from .rng import RngStream

COMMANDS = ("posterior", "coverage", "freq", "da", "kato", "expand-check", "regimes")
FORMATS = ("json", "csv", "both")


class Outputs:
    def __init__(self, out_dir: Path, fmt: str):
        self.dir = out_dir
        self.fmt = fmt

    @property
    def json(self) -> bool:
        return self.fmt in ("json", "both")

    @property
    def csv(self) -> bool:
        return self.fmt in ("csv", "both")

    def report(self, payload: dict) -> None:
        if self.json:
            write_json(self.dir / "report.json", payload)

    def table(self, name: str, header: list[str], rows) -> None:
        if self.csv:
            write_csv(self.dir / name, header, rows)

    def standardized(self, values) -> None:
        self.table("standardized.csv", ["index", "value"], ((i, v) for i, v in enumerate(values)))
        self.table("qq.csv", ["theoretical", "empirical"], qq_pairs(values))
        self.table("hist.csv", ["left", "right", "count", "density"], histogram_bins(values))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


# -- commands ---------------------------------------------------------------


def _experiment(args):
    if args.config is None:
        raise ConfigParse("--config is required for this command", field="config")
    config = parse_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=RngStream(args.seed, config.seed.stream_id))
    return replace(config, threads=args.threads)


def cmd_posterior(args, out: Outputs) -> dict:
    config = _experiment(args)
    if args.command == "da" and not config.is_da:
        raise ConfigParse("the da command needs functional lda or qda", field="functional")
    if config.is_da and config.functional == LDA and not config.truth.shared_covariance():
        raise ConfigParse("lda needs sigma_x equal to sigma_y", field="truth.sigma_y")
    report = run_posterior_bvm(config)
    payload = {"config": config_to_dict(config), "report": report.to_dict()}
    if config.is_da and config.truth.shared_covariance():
        payload["separation"] = separation_bound_check(config.truth)._asdict()
    out.report(payload)
    out.standardized(report.standardized)
    return payload


def cmd_coverage(args, out: Outputs) -> dict:
    config = _experiment(args)
    result = coverage_study(config)
    payload = {
        "config": config_to_dict(config),
        "coverage": result.coverage,
        "replications": result.replications,
        "nominal": 1.0 - config.alpha,
    }
    out.report(payload)
    out.table(
        "coverage.csv",
        ["replication", "lo", "hi", "covered"],
        ((r, lo, hi, c) for r, ((lo, hi), c) in enumerate(zip(result.intervals, result.covered))),
    )
    return payload


def cmd_freq(args, out: Outputs) -> dict:
    config = _experiment(args)
    result = frequentist_check(config)
    z = result.standardized
    payload = {
        "config": config_to_dict(config),
        "ks": result.ks,
        "replications": result.replications,
        "empirical_mean": float(z.mean()),
        "empirical_sd": float(z.std(ddof=1)) if z.size > 1 else 0.0,
    }
    out.report(payload)
    out.standardized(z)
    return payload


_KATO_SERIES = {"mode": "series", "values": [3.0, 2.0, 1.0], "m": 1, "K": 3, "eps": [0.1, 0.05]}
_KATO_BIAS = {"mode": "bias", "top": 2.0, "p_values": [20, 60], "n": 1000, "reps": 200}


def _optional_config(args, defaults: dict) -> dict:
    obj = dict(defaults)
    if args.config is not None:
        raw = load_json(args.config)
        extra = set(raw) - set(defaults) - {"schema_version"}
        if extra:
            raise ConfigParse(f"unknown config keys {sorted(extra)}", field=sorted(extra)[0])
        obj.update({k: v for k, v in raw.items() if k != "schema_version"})
    return obj


def cmd_kato(args, out: Outputs) -> dict:
    mode = "series"
    if args.config is not None:
        mode = load_json(args.config).get("mode", "series")
    if mode not in ("series", "bias"):
        raise ConfigParse(f"unknown kato mode {mode!r}", field="mode")
    seed = args.seed or 0
    if mode == "series":
        cfg = _optional_config(args, _KATO_SERIES)
        eps = tuple(float(e) for e in cfg["eps"])
        if len(eps) != 2:
            raise ConfigParse("eps must list two scales", field="eps")
        check = kato_error_scaling(cfg["values"], int(cfg["m"]), int(cfg["K"]), eps, RngStream(seed))
        payload = {"config": cfg, "seed": seed, **check._asdict()}
        out.table("kato.csv", ["eps", "error"], zip(check.eps, check.errors))
    else:
        cfg = _optional_config(args, _KATO_BIAS)
        probes = {}
        rows = []
        for k, p in enumerate(cfg["p_values"]):
            sigma = np.eye(p)
            sigma[0, 0] = float(cfg["top"])
            probe = second_order_bias_probe(sigma, int(cfg["n"]), p, int(cfg["reps"]), RngStream(seed, k))
            probes[str(p)] = {"mean": probe.mean_sqrt_n_second_order, "lower_bound": probe.lower_bound}
            rows.extend((p, r, v) for r, v in enumerate(probe.values))
        payload = {"config": cfg, "seed": seed, "probes": probes}
        out.table("kato.csv", ["p", "replication", "value"], rows)
    out.report(payload)
    return payload


_SWEEP = {"p_values": [2, 5], "n_values": [50, 500], "t_values": [-2.0, 1.0, 3.0], "pairs": 100}


def cmd_expand_check(args, out: Outputs) -> dict:
    cfg = _optional_config(args, _SWEEP)
    seed = args.seed or 0
    result = expansion_sweep(cfg["p_values"], cfg["n_values"], cfg["t_values"], int(cfg["pairs"]), RngStream(seed))
    payload = {"config": cfg, "seed": seed, "cases": result.cases, "max_scaled_error": result.max_scaled_error}
    out.report(payload)
    out.table("expansion.csv", ["p", "n", "pair", "target", "t", "lhs", "rhs", "scaled_error"], result.rows)
    return payload


_REGIME_DEFAULTS = {"p": 10, "n": 1000}
_ROW_EXAMPLES = {
    "entry": lambda target: KINDS["entry"](1, 2, target),
    "quadratic": lambda target: KINDS["quadratic"]([1.0], target),
    "bilinear": lambda target: KINDS["bilinear"]([1.0], [1.0], target),
    "logdet": lambda target: KINDS["logdet"](),
    "entropy": lambda target: KINDS["entropy"](),
    "eigenvalue": lambda target: KINDS["eigenvalue"](1, target),
}


def cmd_regimes(args, out: Outputs) -> dict:
    cfg = _optional_config(args, _REGIME_DEFAULTS)
    p, n = int(cfg["p"]), int(cfg["n"])
    columns = {"plug_in": None, "conjugate": WishartPrior(), "non_conjugate": ConstrainedGaussianPrior()}
    rows = []
    for kind, target in regime_rows():
        functional = kind if target is None else _ROW_EXAMPLES[kind](target)
        for name, prior in columns.items():
            regime = regime_table(functional, prior, p, n)
            rows.append((kind, target or "", name, regime.required, regime.satisfied))
    payload = {
        "p": p,
        "n": n,
        "rows": [dict(zip(["functional", "target", "column", "required", "satisfied"], r)) for r in rows],
    }
    out.report(payload)
    out.table("regimes.csv", ["functional", "target", "column", "required", "satisfied"], rows)
    return payload


HANDLERS = {
    "posterior": cmd_posterior,
    "da": cmd_posterior,
    "coverage": cmd_coverage,
    "freq": cmd_freq,
    "kato": cmd_kato,
    "expand-check": cmd_expand_check,
    "regimes": cmd_regimes,
}


# -- entry point ------------------------------------------------------------


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matbvm", description="Covariance-functional BvM experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--seed", type=_u64, default=None)
    parser.add_argument("--out", type=Path, default=Path("."))
    parser.add_argument("--format", choices=FORMATS, default="both")
    parser.add_argument("--threads", type=_positive, default=1)
    return parser


def _config_hash(path: Path | None) -> str | None:
    if path is None or not path.is_file():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    return {"matbvm": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def run(args: argparse.Namespace) -> int:
    """Dispatch one command; returns the process exit status."""
    start = time.perf_counter()
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {args.out}: {exc}", file=sys.stderr)
        return 1
    out = Outputs(args.out, args.format)
    try:
        HANDLERS[args.command](args, out)
        status = 0
    except ConfigParse as exc:
        record = exc.record()
        status = 2
    except (BvMError, ValueError, TypeError, IndexError) as exc:
        record = {"error": type(exc).__name__, "field": getattr(exc, "field", None), "line": None, "message": str(exc)}
        status = 1
    if status:
        write_json(args.out / "error.json", record)
        where = f" (field {record['field']!r})" if record.get("field") else ""
        print(f"error: {record['error']}{where}: {record['message']}", file=sys.stderr)
    write_json(
        args.out / "manifest.json",
        {
            "command": args.command,
            "config_hash": _config_hash(args.config),
            "seed": args.seed,
            "versions": _versions(),
            "wall_time": time.perf_counter() - start,
            "status": status,
        },
    )
    return status


def main(argv=None) -> int:
    return run(build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
