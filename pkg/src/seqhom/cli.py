"""``seqhom`` command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import ConfigError, load_file, parse_assignment

EXIT_OK, EXIT_FAILED, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 1, 2, 3


def _deep_update(target, patch):
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(target.get(k), dict):
            _deep_update(target[k], v)
        else:
            target[k] = v
    return target


def cmd_run(args):
    from .experiments import NONCONVERGED, run_experiment

    override = load_file(args.config) if args.config else {}
    for item in args.set or []:
        _deep_update(override, parse_assignment(item))
    status, summary = run_experiment(args.experiment, override, args.out)
    print(json.dumps({k: summary[k] for k in ("experiment", "status", "n_mat", "n_res",
                                              "n_disc", "wall_time_s")}))
    return EXIT_NONCONVERGED if status == NONCONVERGED else EXIT_OK


def cmd_list(args):
    from .experiments import list_experiments

    for name, desc, defaults in list_experiments():
        print(f"{name:22s} {desc}")
        if args.defaults:
            print("    " + json.dumps(defaults, sort_keys=True))
    return EXIT_OK


def _checks():
    """Named self-tests as ``(name, value, tolerance)``."""
    from .auglag import dLdt_identity, flow_direction
    from .benchmarks.analytic import (
        nonconvex_qp_problem,
        pendulum_problem,
        random_qp_problem,
        scalar_problem,
    )
    from .benchmarks.elliptic import EllipticConfig, elliptic_problem
    from .box import criticality_residual, moreau_decompose, project_box
    from .core import PrimalDual, adjoint_defect, check_derivatives

    rng = np.random.default_rng(0)
    ell = elliptic_problem(EllipticConfig(N=4, gamma=1e-2))
    specs = [pendulum_problem(), scalar_problem(), nonconvex_qp_problem(),
             random_qp_problem(6, 3, seed=1), ell]
    out = []
    for spec in specs:
        x0 = rng.uniform(0.1, 0.9, spec.n_x)
        if spec is ell:
            x0 = np.clip(x0, spec.lower, spec.upper)
        rep = check_derivatives(spec, x0)
        out.append((f"derivatives[{spec.name}]", rep.max_deviation, 1e-5))
        out.append((f"adjoint[{spec.name}]", adjoint_defect(spec, x0, n_pairs=20), 1e-10))
    qp = nonconvex_qp_problem()
    worst_orth, worst_exp = 0.0, 0.0
    for _ in range(200):
        x = project_box(rng.standard_normal(2), qp)
        d = rng.standard_normal(2)
        t, n = moreau_decompose(d, x, qp)
        worst_orth = max(worst_orth, abs(float(t @ n)))
        a, b = rng.standard_normal(2) * 3, rng.standard_normal(2) * 3
        pa, pb = project_box(a, qp), project_box(b, qp)
        worst_exp = max(worst_exp, np.linalg.norm(pa - pb) - np.linalg.norm(a - b))
    out.append(("moreau_orthogonality", worst_orth, 1e-10))
    out.append(("projection_nonexpansive", max(worst_exp, 0.0), 1e-12))
    pend = pendulum_problem()
    z = PrimalDual([0.3, 0.5], [0.2])
    lhs, rhs = dLdt_identity(z, pend, 1.0)
    out.append(("dLdt_identity", abs(lhs - rhs) / max(1.0, abs(rhs)), 1e-4))
    for label in ("minimum", "maximum"):
        crit = pend.metadata[label]
        stat, feas = criticality_residual(crit, pend)
        fd = flow_direction(crit, pend, 1.0)
        out.append((f"criticality[{label}]", max(stat, feas), 1e-12))
        out.append((f"equilibrium[{label}]", float(np.linalg.norm(fd.vector())), 1e-12))
    return out


def cmd_check(args):
    failed = 0
    for name, value, tol in _checks():
        ok = bool(value <= tol)
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e} (tol {tol:.0e})")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="seqhom", description="Sequential homotopy experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a named experiment")
    r.add_argument("experiment")
    r.add_argument("--config", help="JSON configuration file")
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a dotted configuration key (repeatable)")
    r.add_argument("--out", help="output directory (default runs/<experiment>)")
    r.set_defaults(func=cmd_run)
    ls = sub.add_parser("list", help="list experiments")
    ls.add_argument("-d", "--defaults", action="store_true", help="print default configurations")
    ls.set_defaults(func=cmd_list)
    c = sub.add_parser("check", help="run derivative and invariant self-tests")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        logging.getLogger("seqhom").exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
