"""Named reproduction experiments and their artifact files.

Every experiment writes ``resolved_config.json``, ``solve_log.csv`` and
``summary.json`` into its output directory, plus experiment-specific CSV
files.  All CSV output is deterministic; wall time and timestamps live
in ``summary.json`` only.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from typing import Callable

import numpy as np

from .benchmarks.analytic import (
    nonconvex_qp_problem,
    pendulum_problem,
    scalar_flow_matrix,
    scalar_problem,
)
from .benchmarks.elliptic import EllipticConfig, active_flags, elliptic_problem, export_grid_csv
from .box import criticality_residual
from .config import ConfigError, check_types, merge
from .core import PrimalDual
from .flow import (
    eigenvalues_2x2,
    flow_jacobian,
    integrate_flow,
    integrate_newton_flow,
    linearized_spectrum_scalar,
)
from .homotopy import DriverParams, IterationRecord, fixed_lambda_solve, solve

OK, NONCONVERGED = "ok", "nonconverged"

# published counters (#act, #mat, #disc) at N = 64, keyed by p
COUNTER_REFERENCE = {0: (637, 20, 0), 1: (1121, 32, 0), 2: (2897, 55, 5),
                    3: (3505, 46, 1), 4: (3405, 59, 4), 5: (2933, 73, 11)}


def driver_defaults(**overrides):
    d = {f.name: f.default for f in fields(DriverParams)}
    d.update(overrides)
    return d


@dataclass
class Experiment:
    name: str
    description: str
    defaults: dict
    runner: Callable

    def resolve(self, override=None) -> dict:
        base = {"experiment": self.name, "seed": 0, **self.defaults}
        override = dict(override or {})
        given = override.pop("experiment", self.name)
        if given != self.name:
            raise ConfigError(f"config is for experiment '{given}', not '{self.name}'")
        cfg = merge(base, override)
        check_types(base, cfg)
        if "driver" in cfg:
            try:
                DriverParams(**cfg["driver"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid driver parameters: {exc}") from exc
        return cfg


class _Artifacts:
    """Collects solve logs and writes the common output files."""

    def __init__(self, out_dir):
        self.out = out_dir
        self.logs = []

    def path(self, name):
        return os.path.join(self.out, name)

    def add_log(self, tag, log):
        self.logs.append((tag, log))

    def write_logs(self):
        names = [f.name for f in fields(IterationRecord)]
        with open(self.path("solve_log.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run"] + names)
            for tag, log in self.logs:
                for r in log.records:
                    w.writerow([tag] + [_fmt(getattr(r, n)) for n in names])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _counters(logs):
    return {k: int(sum(getattr(log, k) for _, log in logs)) for k in ("n_mat", "n_res", "n_disc")}


def _driver(cfg):
    return DriverParams(**cfg["driver"])


# ---------------------------------------------------------------- pendulum


def _start(cfg):
    s = cfg["problem"]["start"]
    if len(s) != 3:
        raise ConfigError("problem.start must have three entries (x1, x2, y)")
    return PrimalDual([s[0], s[1]], [s[2]])


def run_pendulum_flow(cfg, art):
    spec = pendulum_problem()
    r = cfg["run"]
    z0 = _start(cfg)
    zmin = spec.metadata["minimum"]
    results = []
    for rho in r["rhos"]:
        traj = integrate_flow(z0, r["h"], r["t_final"], spec, rho, gamma1=r["gamma1"],
                              gamma2=r["gamma2"], record_every=r["record_every"])
        traj.to_csv(art.path(f"trajectory_rho{rho:g}.csv"))
        err = float(np.linalg.norm((traj.final - zmin).vector()))
        results.append({"rho": rho, "final_error": err,
                        "max_norm_c": float(traj.channels["norm_c"].max())})
    return OK, {"runs": results}


def run_pendulum_streamlines(cfg, art):
    spec = pendulum_problem()
    r = cfg["run"]
    rho, n, ext = r["rho"], r["grid"], r["extent"]
    rows = []
    starts = np.linspace(-ext, ext, n)
    tid = 0
    for y in r["multipliers"]:
        for x1 in starts:
            for x2 in starts:
                z0 = PrimalDual([x1, x2], [y])
                traj = integrate_flow(z0, r["h"], r["t_final"], spec, rho,
                                      record_every=r["record_every"])
                for k in range(len(traj)):
                    rows.append([tid, "flow", y, traj.times[k], *traj.x[k], traj.y[k, 0]])
                tid += 1
                newton = integrate_newton_flow(z0, r["h"], r["t_final"], spec, rho)
                for k in range(0, len(newton), r["record_every"]):
                    s = newton[k]
                    rows.append([tid, "newton", y, k * r["h"], *s.x, s.y[0]])
                tid += 1
    _write_rows(art.path("streamlines.csv"),
                ["trajectory", "kind", "y_fixed", "t", "x1", "x2", "y"], rows)
    eig = {}
    for label in ("minimum", "maximum"):
        m = np.linalg.eigvals(flow_jacobian(spec.metadata[label], spec, rho))
        eig[label] = {"max_real_part": float(m.real.max())}
    return OK, {"n_trajectories": tid, "linearization": eig}


def run_pendulum_euler(cfg, art):
    spec = pendulum_problem()
    r = cfg["run"]
    z0 = _start(cfg)
    zstar = spec.metadata["minimum"].vector()
    e0 = float(np.linalg.norm(z0.vector() - zstar))
    rows, rates = [], []
    for dt in r["dts"]:
        z, errs = z0, [1.0]
        rows.append([dt, 0, 1.0])
        for k in range(1, r["max_steps"] + 1):
            z = fixed_lambda_solve(spec, z, 1.0 / dt, r["rho"], 1, tol=r["tol"])[-1]
            e = float(np.linalg.norm(z.vector() - zstar)) / e0
            errs.append(e)
            rows.append([dt, k, e])
            if e < r["stop_error"]:
                break
        # last contraction ratio not yet polluted by rounding
        valid = [errs[k + 1] / errs[k] for k in range(1, len(errs) - 1)
                 if errs[k + 1] > r["ratio_floor"]]
        ratio = valid[-1] if valid else float("nan")
        rates.append({"dt": dt, "steps": len(errs) - 1, "final_ratio": ratio,
                      "ratio_times_dt": ratio * dt})
    _write_rows(art.path("rates.csv"), ["dt", "step", "relative_error"], rows)
    return OK, {"rates": rates}


def _solve_logged(spec, z0, cfg, art, tag):
    res = solve(spec, z0, _driver(cfg))
    art.add_log(tag, res.log)
    stat, feas = criticality_residual(res.z, spec)
    return res, {"status": res.status, "n_mat": res.log.n_mat, "n_res": res.log.n_res,
                 "n_disc": res.log.n_disc, "stationarity": stat, "feasibility": feas}


def run_pendulum_homotopy(cfg, art):
    spec = pendulum_problem()
    res, info = _solve_logged(spec, _start(cfg), cfg, art, "pendulum")
    t, inc = res.log.flow_series()
    _write_rows(art.path("flow_series.csv"), ["t", "step_norm"], zip(t, inc))
    info["x"] = res.z.x.tolist()
    info["y"] = res.z.y.tolist()
    info["error"] = float(np.linalg.norm((res.z - spec.metadata["minimum"]).vector()))
    return (OK if res.status == "solved" else NONCONVERGED), info


# ------------------------------------------------------------------ scalar


def run_scalar_stiffness(cfg, art):
    spec = scalar_problem()
    r = cfg["run"]
    z0 = PrimalDual([r["x0"]], [r["y0"]])
    rows, traj_rows, out = [], [], []
    for rho in r["rhos"]:
        mu = eigenvalues_2x2(flow_jacobian(spec.metadata["solution"], spec, rho))
        ref = linearized_spectrum_scalar(rho)
        dev = max(abs(mu[0] - ref[0]), abs(mu[1] - ref[1]))
        assert np.allclose(scalar_flow_matrix(rho), flow_jacobian(z0, spec, rho))
        traj = integrate_flow(z0, r["h"], r["t_final"], spec, rho,
                              record_every=r["record_every"])
        norms = np.hypot(traj.x[:, 0], traj.y[:, 0])
        for k in range(len(traj)):
            traj_rows.append([rho, traj.times[k], traj.x[k, 0], traj.y[k, 0]])
        rows.append([rho, mu[0].real, mu[0].imag, mu[1].real, mu[1].imag, dev,
                     norms[0], norms[-1]])
        out.append({"rho": rho, "eigen_deviation": float(dev),
                    "stable": bool(norms[-1] < norms[0])})
    _write_rows(art.path("spectrum.csv"),
                ["rho", "mu1_re", "mu1_im", "mu2_re", "mu2_im", "deviation",
                 "norm_start", "norm_end"], rows)
    _write_rows(art.path("trajectories.csv"), ["rho", "t", "x", "y"], traj_rows)
    return OK, {"runs": out}


def run_nonconvex_qp(cfg, art):
    spec = nonconvex_qp_problem()
    r = cfg["run"]
    crit = spec.metadata["critical"]
    stat, feas = criticality_residual(crit, spec)
    rows, out = [], []
    for i, s in enumerate(r["starts"]):
        traj = integrate_flow(PrimalDual(s[:2], s[2:]), r["h"], r["t_final"], spec,
                              r["rho"], record_every=r["record_every"])
        for k in range(len(traj)):
            rows.append([i, traj.times[k], *traj.x[k], traj.y[k, 0]])
        out.append({"start": s, "final_x2": float(traj.x[-1, 1]),
                    "final_objective": float(spec.phi(traj.x[-1]))})
    _write_rows(art.path("trajectories.csv"), ["run", "t", "x1", "x2", "y"], rows)
    return OK, {"critical_point_residuals": [stat, feas], "runs": out}


# ---------------------------------------------------------------- elliptic


def _elliptic_spec(N, gamma, p):
    return elliptic_problem(EllipticConfig(N=N, gamma=gamma, p=p))


def run_elliptic(cfg, art):
    pc = cfg["problem"]
    try:
        spec = _elliptic_spec(pc["N"], pc["gamma"], pc["p"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res, info = _solve_logged(spec, PrimalDual.zeros(spec), cfg, art, spec.name)
    export_grid_csv(res.z, spec, art.path("grid.csv"))
    t, inc = res.log.flow_series()
    _write_rows(art.path("flow_series.csv"), ["t", "step_norm"], zip(t, inc))
    lo, up = active_flags(res.z, spec)
    info.update(n_active=int(lo.sum() + up.sum()), n_lower=int(lo.sum()),
                n_upper=int(up.sum()), discretization=spec.metadata["config"].describe())
    return (OK if res.status == "solved" else NONCONVERGED), info


def run_table1(cfg, art):
    pc, r = cfg["problem"], cfg["run"]
    jobs = [(p, N, g) for g in pc["gammas"] for p in pc["p_values"] for N in pc["N_values"]]
    params = _driver(cfg)

    def one(job):
        p, N, g = job
        spec = _elliptic_spec(N, g, p)
        res = solve(spec, PrimalDual.zeros(spec), params)
        lo, up = active_flags(res.z, spec)
        return job, spec.name, res, int(lo.sum() + up.sum()), int(lo.sum())

    try:
        with ThreadPoolExecutor(max_workers=max(1, r["workers"])) as pool:
            results = list(pool.map(one, jobs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows, out, status = [], [], OK
    for (p, N, g), name, res, n_act, n_lo in results:
        art.add_log(f"{name}_g{g:g}", res.log)
        ref = COUNTER_REFERENCE.get(int(p)) if N == 64 and float(p).is_integer() else None
        rows.append([-p, p, N, g, res.status, n_act, n_lo, res.log.n_mat, res.log.n_res,
                     res.log.n_disc, *(ref if ref else ("", "", ""))])
        out.append({"p": p, "N": N, "gamma": g, "status": res.status, "act": n_act,
                    "lower_active": n_lo, "mat": res.log.n_mat, "disc": res.log.n_disc})
        if res.status != "solved":
            status = NONCONVERGED
    _write_rows(art.path("table1.csv"),
                ["log10_a", "log10_b", "N", "gamma", "status", "act", "lower_active", "mat",
                 "res", "disc", "ref_act", "ref_mat", "ref_disc"], rows)
    return status, {"runs": out}


# ----------------------------------------------------------------- catalog

_PENDULUM_START = [0.01, 1.0, -0.5]

EXPERIMENTS = {e.name: e for e in [
    Experiment(
        "pendulum-flow", "Projected flow trajectories of the pendulum for several rho",
        {"problem": {"start": _PENDULUM_START},
         "run": {"rhos": [0.0, 1.0, 10.0], "h": 1e-3, "t_final": 40.0, "record_every": 100,
                 "gamma1": 0.5, "gamma2": 0.5}},
        run_pendulum_flow),
    Experiment(
        "pendulum-streamlines", "Flow and Newton-flow streamlines around the pendulum extrema",
        {"run": {"rho": 1.0, "multipliers": [-0.5, 0.5], "grid": 7, "extent": 1.5,
                 "h": 1e-2, "t_final": 5.0, "record_every": 10}},
        run_pendulum_streamlines),
    Experiment(
        "pendulum-euler", "Error per step of fixed-step backward Euler for a range of dt",
        {"problem": {"start": _PENDULUM_START},
         "run": {"rho": 1.0, "dts": [1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8],
                 "max_steps": 15, "stop_error": 1e-15, "ratio_floor": 1e-12,
                 "tol": 1e-13}},
        run_pendulum_euler),
    Experiment(
        "pendulum-homotopy", "Sequential homotopy solve of the pendulum from near the maximum",
        {"problem": {"start": _PENDULUM_START}, "driver": driver_defaults(rho=1.0)},
        run_pendulum_homotopy),
    Experiment(
        "scalar-stiffness", "Spectrum and stability of the scalar example's flow",
        {"run": {"rhos": [0.0, 0.5, 1.0, 2.0, 3.0, 10.0], "x0": 1.0, "y0": 0.0, "h": 1e-3,
                 "t_final": 20.0, "record_every": 100}},
        run_scalar_stiffness),
    Experiment(
        "nonconvex-qp", "Flow of the unbounded nonconvex QP near its critical point",
        {"run": {"rho": 1.0, "starts": [[0.0, 1e-3, 0.0], [0.5, 0.0, 0.0]], "h": 1e-3,
                 "t_final": 5.0, "record_every": 50}},
        run_nonconvex_qp),
    Experiment(
        "elliptic", "Quasilinear elliptic optimal control solve on one mesh",
        {"problem": {"N": 32, "p": 0.0, "gamma": 1e-2}, "driver": driver_defaults()},
        run_elliptic),
    Experiment(
        "table1", "Counter table over p, N and gamma for the elliptic benchmark",
        {"problem": {"p_values": [0.0, 1.0, 2.0], "N_values": [16, 32, 64],
                     "gammas": [1e-1, 1e-2, 1e-3, 1e-6]},
         "driver": driver_defaults(), "run": {"workers": 4}},
        run_table1),
]}


def list_experiments():
    return [(e.name, e.description, e.defaults) for e in EXPERIMENTS.values()]


def get_experiment(name) -> Experiment:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise ConfigError(
            f"unknown experiment '{name}'; available: {', '.join(EXPERIMENTS)}") from None


def run_experiment(name, override=None, out_dir=None):
    """Resolve the configuration, run, write artifacts; return ``(status, summary)``.

    Raises :class:`~seqhom.config.ConfigError` for invalid configurations.
    """
    exp = get_experiment(name)
    cfg = exp.resolve(override)
    out_dir = out_dir or os.path.join("runs", name)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    art = _Artifacts(out_dir)
    np.random.seed(cfg["seed"])
    t0 = time.perf_counter()
    try:
        status, info = exp.runner(cfg, art)
    finally:
        art.write_logs()
    wall = time.perf_counter() - t0
    summary = {"experiment": name, "status": status, **_counters(art.logs),
               "wall_time_s": wall,
               "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
               "results": info}
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
        fh.write("\n")
    return status, summary


def _json_default(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(type(v).__name__)


__all__ = ["EXPERIMENTS", "Experiment", "list_experiments", "get_experiment",
           "run_experiment", "COUNTER_REFERENCE", "OK", "NONCONVERGED"]
