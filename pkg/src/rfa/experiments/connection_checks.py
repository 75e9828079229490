"""Monte Carlo connection estimates against the exact uniform-tree values."""

from __future__ import annotations

import math
import time

import numpy as np

from .. import rng
from ..connection import (
    connection_mc,
    coupling_inequality_check,
    grid_step_estimate,
    oracle_se,
    uniform_connection_origin_multid,
)
from ..errors import ConfigError
from ..model import TrainingSet
from ..trees import BuilderConfig, UniformConfig
from .report import ExperimentReport

__all__ = ["closed_form_agreement", "coupling_sweep", "grid_step_report", "connection_rows"]

CONNECT_COLUMNS = ("k", "d", "x", "z", "closed_form", "mc", "se")


def _vec(v: np.ndarray) -> str:
    return " ".join(f"{float(c):.17g}" for c in v)


def connection_rows(k: int, x, z, M: int, seed: int) -> dict:
    """One row: exact origin connection at ``|x - z|`` and the MC estimate for ``(x, z)``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    est = connection_mc(None, UniformConfig(k), x, z, M, seed)
    closed = uniform_connection_origin_multid(k, np.abs(x - z))
    return {
        "k": k,
        "d": x.shape[0],
        "x": _vec(x),
        "z": _vec(z),
        "closed_form": closed,
        "mc": est.point_estimate,
        "se": est.standard_error,
    }


def closed_form_agreement(
    d_list,
    k_list,
    M: int,
    seed: int,
    x_grid=None,
    pairs: int = 20,
    min_fraction: float = 0.99,
    tag: str = "connection_closed_form",
) -> ExperimentReport:
    """Origin-to-``x`` connection of uniform trees: MC within 3 SE of the exact value.

    The verdict uses the standard error at the exact value (``se_oracle``);
    the count under the plug-in ``se`` is reported as a note.  For ``d = 1`` the points ``x`` are ``x_grid`` (default ``0.05, ..., 0.95``);
    for ``d > 1`` they are ``pairs`` uniform draws per ``(d, k)``.
    """
    t0 = time.perf_counter()
    if x_grid is None:
        x_grid = np.round(np.arange(1, 20) * 0.05, 2)
    report = ExperimentReport(
        tag,
        {"d_list": list(d_list), "k_list": list(k_list), "M": M, "seed": seed, "x_grid": list(x_grid),
         "pairs": pairs, "min_fraction": min_fraction},
    )
    hits = total = plug_hits = 0
    case = 0
    for d in d_list:
        for k in k_list:
            if d == 1:
                points = [np.array([x]) for x in x_grid]
            else:
                gen = rng.generator(seed, f"closed-form/points/d={d}/k={k}")
                points = [gen.random(d) for _ in range(pairs)]
            for x in points:
                row = connection_rows(int(k), np.zeros(d), x, M, rng.derive_seed(seed, "closed-form/mc", case))
                case += 1
                diff = abs(row["mc"] - row["closed_form"])
                row["se_oracle"] = oracle_se(row["closed_form"], M)
                ok = diff <= 3.0 * row["se_oracle"]
                row["within_3se"] = ok
                report.rows.append(row)
                hits += ok
                plug_hits += diff <= 3.0 * row["se"]
                total += 1
    frac = hits / total if total else math.nan
    report.add("agreement", frac >= min_fraction, f"{hits}/{total} = {frac:.4f} within 3 SE (need {min_fraction})")
    report.notes.append(f"with the plug-in standard error {plug_hits}/{total} cases are within 3 SE")
    report.wall_clock = time.perf_counter() - t0
    return report


def coupling_sweep(
    settings: int,
    M: int,
    seed: int,
    d_choices=(1, 2, 3),
    k_range=(1, 8),
    tag: str = "coupling",
) -> ExperimentReport:
    """Random ``(x, z, k, d)``: exact origin connection at ``|x - z|`` <= MC connection of ``(x, z)`` + 3 SE."""
    t0 = time.perf_counter()
    gen = rng.generator(seed, "coupling/settings")
    report = ExperimentReport(
        tag, {"settings": settings, "M": M, "seed": seed, "d_choices": list(d_choices), "k_range": list(k_range)}
    )
    violations = 0
    for s in range(settings):
        d = int(d_choices[int(gen.integers(len(d_choices)))])
        k = int(gen.integers(k_range[0], k_range[1] + 1))
        x, z = gen.random(d), gen.random(d)
        rep = coupling_inequality_check(UniformConfig(k), x, z, M, rng.derive_seed(seed, "coupling/mc", s))
        violations += not rep.passed
        report.rows.append(
            {
                "k": k,
                "d": d,
                "x": _vec(x),
                "z": _vec(z),
                "closed_form": rep.closed_form,
                "mc": rep.mc.point_estimate,
                "se": rep.mc.standard_error,
                "se_oracle": rep.boundary_se,
                "passed": rep.passed,
            }
        )
    report.add("no_violations", violations == 0, f"{violations} violations in {settings} settings")
    report.wall_clock = time.perf_counter() - t0
    return report


def grid_step_report(
    data: TrainingSet | None,
    cfg: BuilderConfig,
    epsilons,
    probe_resolution: int,
    M: int,
    seed: int,
    d: int | None = None,
    tag: str = "grid_step",
) -> ExperimentReport:
    """Estimated grid step for each ``epsilon``, with exact and analytic values for uniform trees."""
    t0 = time.perf_counter()
    if not len(epsilons):
        raise ConfigError("need at least one epsilon")
    report = ExperimentReport(
        tag,
        {"builder": cfg.to_dict(), "epsilons": list(epsilons), "probe_resolution": probe_resolution, "M": M,
         "seed": seed, "d": d if d is not None else (data.d if data is not None else None)},
    )
    deltas = []
    for eps in sorted(epsilons):
        g = grid_step_estimate(data, cfg, eps, probe_resolution, M, seed, d=d)
        row = {"epsilon": eps, "delta_hat": g.delta_hat, "resolution": 2.0**-probe_resolution}
        if g.analytic_bound is not None:
            stated, proved = g.analytic_bound
            row.update({"bound_stated": stated, "bound_proved": proved, "exact": g.exact})
            floor = min(stated, proved) - 2.0**-probe_resolution
            report.add(f"above_bound_eps{eps:g}", g.delta_hat >= floor, f"{g.delta_hat:.4g} >= {floor:.4g}")
            if g.exact is not None and g.exact >= 2.0**-probe_resolution:
                report.add(
                    f"above_half_exact_eps{eps:g}",
                    g.delta_hat >= g.exact / 2.0,
                    f"dyadic estimate {g.delta_hat:.4g} >= exact/2 = {g.exact / 2:.4g}",
                )
        report.rows.append(row)
        deltas.append(g.delta_hat)
    report.add("monotone", all(a <= b for a, b in zip(deltas, deltas[1:])), "delta_hat non-decreasing in epsilon")
    report.wall_clock = time.perf_counter() - t0
    return report
