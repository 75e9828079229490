"""Command-line front end.

One experiment per invocation::

    rfa <command> [--config FILE] [options]

Options may also come from an INI file with one section per command
(``[risk-gap]``, ``[clt]``, ...) and an optional ``[DEFAULT]`` section;
command-line flags win.  The resolved configuration is written to
``<out>/config.json`` next to the experiment outputs.

Exit codes: 0 when every verdict passes, 1 when one fails, 2 on a
configuration or runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import experiments as ex
from ._backend import BACKEND
from ._io import atomic_write_json, csv_text
from ._parallel import resolve_threads
from .errors import ConfigError
from .forest import check_reference_size
from .model import RegressionModel, sample_dataset, write_dataset
from .trees import BreimanConfig, QuantileConfig, UniformConfig

__all__ = ["main", "parse_and_validate", "run", "RunConfig"]

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _int_list(text: str) -> list[int]:
    return [int(float(v)) for v in str(text).split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


# name -> (parser, default, help)
OPTIONS: dict[str, tuple[Callable, Any, str]] = {
    "seed": (_int, 2024, "master seed"),
    "out": (str, "results", "output directory"),
    "threads": (_int, None, "thread count (default: RFA_THREADS or 1)"),
    # model
    "model": (str, "sines", "mean function: constant, linear, sines, step"),
    "d": (_int, 1, "input dimension"),
    "sigma": (float, 0.5, "noise standard deviation"),
    "x_dist": (str, "uniform", "design distribution: uniform or mixture"),
    "density_ratio": (float, 4.0, "max/min density of the mixture design"),
    "value": (float, None, "constant mean value"),
    "coef": (_float_list, None, "linear coefficients, comma separated"),
    "clip": (float, None, "linear clipping level"),
    "scale": (float, None, "amplitude of the product of sines"),
    "height": (float, None, "step height"),
    "threshold": (float, None, "step location on the first coordinate"),
    # builder
    "builder": (str, "uniform", "uniform, quantile or breiman"),
    "k": (_int, 4, "uniform tree level"),
    "a_n": (_int, None, "subsample size"),
    "q": (float, 0.8, "quantile tree balance parameter in [1/2, 1)"),
    "qn": (float, None, "fixed quantile level (default: random)"),
    "nodesize": (_int, 5, "CART leaf size"),
    "mtry": (_int, None, "CART candidate dimensions"),
    "resample": (str, "none", "CART resampling: none, subsample, bootstrap"),
    # experiment sizes
    "n": (_int, 200, "training sample size"),
    "n_list": (_int_list, [200, 2000], "sample sizes"),
    "trees": (_int, 1000, "trees per forest"),
    "m_list": (_int_list, [1, 10, 100], "forest sizes"),
    "m_ref": (_int, 10_000, "reference forest size"),
    "m_var": (_int, 2000, "trees for the variance estimate"),
    "datasets": (_int, 30, "independent datasets"),
    "test_points": (_int, 200, "test points per dataset"),
    "tree_budget": (_int, 1000, "trees per forest size and dataset in the risk gap"),
    "replicates": (_int, 1000, "replicate forests"),
    "x_points": (_int, 10, "number of query points"),
    "grid": (_int, 256, "grid points per axis"),
    "shared": (_bool, False, "reuse reference trees"),
    "builders": (str, "uniform,quantile", "builders of the consistency sweep"),
    "x": (_float_list, [0.0], "first point"),
    "z": (_float_list, [0.5], "second point"),
    "sweep": (str, "none", "connect sweep: none, closed-form, coupling"),
    "d_list": (_int_list, [1], "dimensions"),
    "k_list": (_int_list, [1, 2, 3, 4, 5, 6, 7, 8], "levels"),
    "pairs": (_int, 20, "random points per (d, k)"),
    "settings": (_int, 150, "random coupling settings"),
    "eps": (_float_list, [0.25, 0.5, 1.0], "epsilons"),
    "resolution": (_int, 10, "finest dyadic separation exponent"),
    "a_fraction": (float, 0.1, "a_n / n in the diameter sweep"),
    "gamma": (float, 0.5, "diameter threshold"),
}

MODEL_OPTS = ["model", "d", "sigma", "x_dist", "density_ratio", "value", "coef", "clip", "scale", "height", "threshold"]
BUILDER_OPTS = ["builder", "k", "a_n", "q", "qn", "nodesize", "mtry", "resample"]
COMMON = ["seed", "out", "threads"]

COMMANDS: dict[str, list[str]] = {
    "gen": COMMON + MODEL_OPTS + ["n"],
    "connect": COMMON + MODEL_OPTS + BUILDER_OPTS + ["n", "x", "z", "trees", "sweep", "d_list", "k_list", "pairs", "settings"],
    "grid-step": COMMON + MODEL_OPTS + BUILDER_OPTS + ["n", "eps", "resolution", "trees"],
    "risk-gap": COMMON + MODEL_OPTS + BUILDER_OPTS + ["n", "m_list", "m_ref", "datasets", "test_points", "tree_budget", "m_var"],
    "clt": COMMON + MODEL_OPTS + BUILDER_OPTS + ["n", "x_points", "trees", "replicates", "m_ref", "m_var"],
    "sup-conv": COMMON + MODEL_OPTS + BUILDER_OPTS + ["n", "grid", "m_list", "m_ref", "replicates", "shared"],
    "consistency": COMMON + MODEL_OPTS + ["builders", "q", "n_list", "trees", "datasets", "test_points"],
    "diagnostics": COMMON + MODEL_OPTS + ["n", "a_n", "q", "qn", "trees", "x_points", "n_list", "a_fraction", "gamma"],
    "side-length": COMMON + ["d_list", "k_list", "trees"],
}

# per-command defaults that differ from the global ones
COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "connect": {"trees": 100_000, "k": 3, "d": 1},
    "grid-step": {"trees": 10_000, "k": 2},
    "risk-gap": {"builder": "quantile", "d": 2, "a_n": 50},
    "clt": {"m_ref": 1_000_000, "m_var": 100_000, "n": 500},
    "sup-conv": {"m_list": [10, 100, 1000, 10000], "m_ref": 200_000, "replicates": 5, "n": 500},
    "consistency": {"d": 2, "x_dist": "mixture", "trees": 500, "datasets": 10},
    "diagnostics": {"d": 2, "n": 1000, "a_n": 100, "trees": 10_000, "x_points": 100, "n_list": [200, 1000, 5000]},
    "side-length": {"d_list": [1, 2], "trees": 200_000},
}


class RunConfig(dict):
    """Resolved options of one invocation; ``command`` plus option values."""

    @property
    def command(self) -> str:
        return self["command"]


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfa", description="Random forest regression laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, names in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="INI file with a section per command")
        for name in names:
            _, default, help_text = OPTIONS[name]
            shown = COMMAND_DEFAULTS.get(cmd, {}).get(name, default)
            # parse as strings so flags and config values go through one converter
            p.add_argument(_flag(name), dest=name, default=None, help=f"{help_text} (default: {shown})")
    return parser


def _convert(name: str, raw: Any) -> Any:
    conv = OPTIONS[name][0]
    try:
        return conv(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid value for {name}: {raw!r} ({err})") from None


def parse_and_validate(argv: list[str]) -> RunConfig:
    """Merge defaults, the config file and flags, then validate."""
    args = _build_parser().parse_args(argv)
    cmd = args.command
    names = COMMANDS[cmd]
    values: dict[str, Any] = {n: OPTIONS[n][1] for n in names}
    values.update({k: v for k, v in COMMAND_DEFAULTS.get(cmd, {}).items() if k in names})
    if args.config:
        parser = configparser.ConfigParser()
        if not parser.read(args.config):
            raise ConfigError(f"cannot read config file {args.config}")
        section = parser[cmd] if parser.has_section(cmd) else parser.defaults()
        for key, raw in section.items():
            name = key.replace("-", "_")
            if name not in names:
                raise ConfigError(f"unknown key {key!r} for command {cmd!r} in {args.config}")
            values[name] = _convert(name, raw)
    for name in names:
        raw = getattr(args, name)
        if raw is not None:
            values[name] = _convert(name, raw)
    cfg = RunConfig(command=cmd, **values)
    _validate(cfg)
    return cfg


def _model(cfg: RunConfig) -> RegressionModel:
    params = {}
    for key, name in (("value", "value"), ("a", "coef"), ("clip", "clip"), ("scale", "scale"),
                      ("height", "height"), ("threshold", "threshold")):
        if cfg.get(name) is not None:
            params[key] = cfg[name]
    return RegressionModel(cfg["d"], cfg["model"], params, cfg["sigma"], cfg["x_dist"], cfg["density_ratio"])


def _builder(cfg: RunConfig):
    kind = cfg.get("builder", "uniform")
    if kind == "uniform":
        return UniformConfig(cfg["k"])
    if kind == "quantile":
        if cfg.get("a_n") is None:
            raise ConfigError("quantile builder needs --a-n")
        return QuantileConfig(cfg["a_n"], cfg["q"], cfg.get("qn"))
    if kind == "breiman":
        return BreimanConfig(cfg["nodesize"], cfg.get("mtry"), cfg["resample"], cfg.get("a_n"))
    raise ConfigError(f"unknown builder {kind!r}")


def _validate(cfg: RunConfig) -> None:
    cmd = cfg.command
    if cfg.get("threads") is not None:
        resolve_threads(cfg["threads"])
    if cmd != "side-length":
        _model(cfg)
    if "builder" in cfg:
        _builder(cfg)
    for name in ("n", "trees", "datasets", "test_points", "replicates", "x_points", "grid", "m_var", "settings", "pairs"):
        if name in cfg and cfg[name] is not None and cfg[name] < 1:
            raise ConfigError(f"{name} must be positive")
    if cmd == "risk-gap":
        if any(m < 1 for m in cfg["m_list"]):
            raise ConfigError("m_list must hold positive integers")
        check_reference_size(cfg["m_ref"], cfg["m_list"])
    if cmd == "clt":
        check_reference_size(cfg["m_ref"], [cfg["trees"]])
        if cfg["replicates"] < 200:
            raise ConfigError("replicates must be at least 200")
    if cmd == "sup-conv" and max(cfg["m_list"]) > cfg["m_ref"]:
        raise ConfigError("m_list must not exceed m_ref")
    if cmd == "connect":
        if len(cfg["x"]) != len(cfg["z"]):
            raise ConfigError("x and z must have the same length")
        if cfg["sweep"] not in ("none", "closed-form", "coupling"):
            raise ConfigError(f"unknown sweep {cfg['sweep']!r}")
    if cmd == "consistency":
        for b in cfg["builders"].split(","):
            if b.strip() not in ("uniform", "quantile"):
                raise ConfigError(f"unknown consistency builder {b!r}")
    if cmd in ("grid-step",) and any(e <= 0 for e in cfg["eps"]):
        raise ConfigError("eps must be positive")


# ------------------------------------------------------------------ runners


def _query_grid(d: int, count: int) -> np.ndarray:
    t = (np.arange(count) + 0.5) / count
    return np.repeat(t[:, None], d, axis=1)


def _data_for(cfg: RunConfig, model: RegressionModel, builder):
    if isinstance(builder, UniformConfig):
        return None
    from . import rng

    return sample_dataset(model, cfg["n"], rng.derive_seed(cfg["seed"], "cli/data"))


def _run_gen(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    model = _model(cfg)
    data = sample_dataset(model, cfg["n"], cfg["seed"])
    write_dataset(data, Path(cfg["out"]) / "dataset.csv", model)
    return []


def _run_connect(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    if cfg["sweep"] == "closed-form":
        return [ex.closed_form_agreement(cfg["d_list"], cfg["k_list"], cfg["trees"], cfg["seed"], pairs=cfg["pairs"])]
    if cfg["sweep"] == "coupling":
        return [ex.coupling_sweep(cfg["settings"], cfg["trees"], cfg["seed"], d_choices=tuple(cfg["d_list"]),
                                  k_range=(min(cfg["k_list"]), max(cfg["k_list"])))]
    builder = _builder(cfg)
    x, z = np.asarray(cfg["x"]), np.asarray(cfg["z"])
    report = ex.ExperimentReport("connect", {k: v for k, v in cfg.items() if k != "threads"})
    if isinstance(builder, UniformConfig):
        row = ex.connection_rows(builder.k, x, z, cfg["trees"], cfg["seed"])
        from .connection import oracle_se

        se = oracle_se(row["closed_form"], cfg["trees"])
        report.add("coupling", row["closed_form"] <= row["mc"] + 3.0 * se, "closed <= mc + 3 SE at the closed form")
    else:
        from .connection import connection_mc
        from .experiments.connection_checks import _vec

        model = _model(cfg)
        est = connection_mc(_data_for(cfg, model, builder), builder, x, z, cfg["trees"], cfg["seed"])
        row = {"k": "", "d": x.shape[0], "x": _vec(x), "z": _vec(z),
               "closed_form": None, "mc": est.point_estimate, "se": est.standard_error}
    report.rows.append(row)
    return [report]


def _run_grid_step(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    model = _model(cfg)
    builder = _builder(cfg)
    data = _data_for(cfg, model, builder)
    return [ex.grid_step_report(data, builder, cfg["eps"], cfg["resolution"], cfg["trees"], cfg["seed"], d=cfg["d"])]


def _run_risk_gap(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    return [
        ex.risk_gap_experiment(
            _model(cfg), _builder(cfg), cfg["n"], cfg["m_list"], cfg["m_ref"], cfg["datasets"], cfg["test_points"],
            cfg["seed"], tree_budget=cfg["tree_budget"], M_var=cfg["m_var"], threads=threads,
        )
    ]


def _run_clt(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    model = _model(cfg)
    return [
        ex.clt_experiment(
            model, _builder(cfg), cfg["n"], _query_grid(model.d, cfg["x_points"]), cfg["trees"], cfg["replicates"],
            cfg["m_ref"], cfg["seed"], M_var=cfg["m_var"], threads=threads,
        )
    ]


def _run_sup(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    shared = cfg["shared"]
    return [
        ex.sup_convergence_experiment(
            _model(cfg), _builder(cfg), cfg["n"], cfg["grid"], cfg["m_list"], cfg["m_ref"], cfg["seed"],
            replicates=1 if shared else cfg["replicates"], shared=shared, threads=threads,
        )
    ]


def _run_consistency(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    model = _model(cfg)
    return [
        ex.consistency_sweep(model, b.strip(), cfg["n_list"], cfg["trees"], cfg["datasets"], cfg["test_points"],
                             cfg["seed"], q=cfg["q"], threads=threads)
        for b in cfg["builders"].split(",")
    ]


def _run_diagnostics(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    model = _model(cfg)
    if cfg.get("a_n") is None:
        raise ConfigError("diagnostics need --a-n")
    stone = ex.stone_diagnostics(model, QuantileConfig(cfg["a_n"], cfg["q"], cfg.get("qn")), cfg["n"], cfg["trees"],
                                 cfg["x_points"], cfg["seed"], threads=threads)
    diam = ex.diameter_sweep(model, cfg["n_list"], min(cfg["trees"], 2000), cfg["x_points"], cfg["seed"], q=cfg["q"],
                             a_fraction=cfg["a_fraction"], gamma=cfg["gamma"], threads=threads)
    return [stone, diam]


def _run_side(cfg: RunConfig, threads: int) -> list[ex.ExperimentReport]:
    return [ex.side_length_sweep(cfg["d_list"], cfg["k_list"], cfg["trees"], cfg["seed"])]


RUNNERS = {
    "gen": _run_gen,
    "connect": _run_connect,
    "grid-step": _run_grid_step,
    "risk-gap": _run_risk_gap,
    "clt": _run_clt,
    "sup-conv": _run_sup,
    "consistency": _run_consistency,
    "diagnostics": _run_diagnostics,
    "side-length": _run_side,
}


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute a validated configuration and write its outputs."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    threads = resolve_threads(cfg.get("threads"))
    out = Path(cfg["out"])
    echo = dict(cfg)
    echo["threads_resolved"] = threads
    echo["backend"] = BACKEND
    t0 = time.perf_counter()
    reports = RUNNERS[cfg.command](cfg, threads)
    atomic_write_json(out / "config.json", echo)
    ok = True
    for rep in reports:
        rep.write(out)
        if cfg.command == "connect":
            cols = list(ex.connection_checks.CONNECT_COLUMNS)
            stdout.write(csv_text(cols, ([row.get(c) for c in cols] for row in rep.rows)))
        n_pass = sum(v.passed for v in rep.verdicts)
        status = "PASS" if rep.passed else "FAIL"
        stderr.write(f"{rep.tag}: {status} ({n_pass}/{len(rep.verdicts)} verdicts) in {rep.wall_clock:.1f} s\n")
        ok &= rep.passed
    if not reports:
        stderr.write(f"{cfg.command}: done in {time.perf_counter() - t0:.1f} s\n")
    return EXIT_PASS if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_and_validate(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_ERROR if exc.code else EXIT_PASS
    except ConfigError as err:
        sys.stderr.write(f"configuration error: {err}\n")
        return EXIT_ERROR
    try:
        return run(cfg)
    except ConfigError as err:
        sys.stderr.write(f"configuration error: {err}\n")
        return EXIT_ERROR
    except Exception as err:  # noqa: BLE001 - any failure maps to exit code 2
        sys.stderr.write(f"runtime error: {type(err).__name__}: {err}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
