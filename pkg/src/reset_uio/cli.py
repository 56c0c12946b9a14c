"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 infeasible or failed
validation, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    Infeasible,
    NoConvergence,
    NonFinite,
    NotStabilizing,
    RankCondition,
    RankDeficient,
    ResetUIOError,
    SingularMatrix,
)
from .experiments import (
    ExperimentConfig,
    compare_reset_laws,
    run_destabilization_demo,
    run_grid_search,
    run_monte_carlo,
)
from . import reference
from .hybrid_sim import LAWS, MODES, compute_metrics, run_simulation, write_trajectory_csv
from .lmi_cert import ResetCertificate, synthesize_certificate, validate_certificate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("reset_uio")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "mode", None):
        cfg.sim["mode"] = args.mode
    if getattr(args, "law", None):
        cfg.sim["law"] = args.law
    if getattr(args, "seed", None) is not None:
        cfg.montecarlo["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        cfg.montecarlo["runs"] = args.runs
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _load_cert(args, cfg: ExperimentConfig) -> ResetCertificate:
    """Certificate from ``--cert``, else synthesized at the CLI lambda values."""
    if args.cert == "builtin":
        return reference.example_certificate(epsilon=float(cfg.sim["epsilon"]))
    if args.cert:
        try:
            return ResetCertificate.load(args.cert)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigInvalid(f"cannot read certificate {args.cert}: {exc}") from exc
    _, cuio = cfg.build_cuio()
    return synthesize_certificate(cuio.m, cuio.n_mat, args.lambda_f, args.lambda_j, args.tau_j,
                                  epsilon=float(cfg.sim["epsilon"]))


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def cmd_design(args) -> int:
    cfg = _load_config(args)
    _, cuio = cfg.build_cuio()
    doc = cuio.to_dict()
    if args.out:
        out = cfg.out()
        (out / "cuio.json").write_text(json.dumps(doc, indent=2, default=_jsonable))
    _emit(doc)
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _load_config(args)
    _, cuio = cfg.build_cuio()
    if args.cert:
        cert = _load_cert(args, cfg)
        report = validate_certificate(cuio.m, cuio.n_mat, cert, tol=args.tol)
        _emit({**asdict(report), "f_indefinite": cert.f_indefinite()})
        return EXIT_OK if report.feasible and cert.f_indefinite() else EXIT_INFEASIBLE
    cert = _load_cert(args, cfg)
    path = cfg.out() / "certificate.json"
    cert.save(path)
    _emit({"certificate": str(path), "iterations": cert.synthesis.iterations,
           "residual": cert.synthesis.residual, "tau_w": cert.tau_w})
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    plant, cuio = cfg.build_cuio()
    cert = _load_cert(args, cfg)
    cert.attach(cuio.m)
    traj = run_simulation(plant, cuio, cert, cfg.sim_config())
    path = cfg.out() / "trajectory.csv"
    write_trajectory_csv(traj, path)
    m = compute_metrics(traj)
    _emit({"trajectory": str(path), "l2": m.l2, "settling": m.settling,
           "first_reset": m.first_reset, "jumps": len(traj.jumps), "diverged": traj.diverged})
    return EXIT_NUMERICAL if traj.diverged else EXIT_OK


def cmd_grid(args) -> int:
    cfg = _load_config(args)
    rows = run_grid_search(cfg, jobs=args.jobs)
    _emit({"points": len(rows), "feasible": sum(r.feasible for r in rows),
           "table": str(cfg.out() / "grid.csv")})
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    cert = _load_cert(args, cfg)
    summary = run_monte_carlo(cfg, cert, law=int(cfg.sim["law"]), jobs=args.jobs)
    _emit(asdict(summary))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    cert = _load_cert(args, cfg)
    rows = compare_reset_laws(cfg, cert)
    _emit([asdict(r) for r in rows])
    return EXIT_OK


def cmd_destab(args) -> int:
    out = Path(args.out) if args.out else Path("out")
    verdict, _, _ = run_destabilization_demo(out)
    _emit({**asdict(verdict), "wrong_destabilizes": verdict.wrong_destabilizes,
           "scheduled_decays": verdict.scheduled_decays})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reset-uio", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cert=True):
        p.add_argument("--config", help="experiment config JSON (defaults to the built-in example)")
        p.add_argument("--out", help="output directory")
        if cert:
            p.add_argument("--cert", help="certificate JSON, or 'builtin' for the reference certificate; "
                                "synthesized from --lambda-* when absent")
            p.add_argument("--lambda-f", type=float, default=1.1)
            p.add_argument("--lambda-j", type=float, default=0.8)
            p.add_argument("--tau-j", type=float, default=1.0)

    p = sub.add_parser("design", help="emit the C-UIO matrices as JSON")
    common(p, cert=False)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("certify", help="synthesize a certificate, or validate one given by --cert")
    common(p)
    p.add_argument("--tol", type=float, default=1e-6, help="validation tolerance")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="one run, written to trajectory.csv")
    common(p)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--law", type=int, choices=LAWS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="certificate grid search")
    common(p, cert=False)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("montecarlo", help="random initial states, C-UIO vs one reset law")
    common(p)
    p.add_argument("--law", type=int, choices=LAWS)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("compare", help="all reset laws against the C-UIO baseline")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("destab-demo", help="wrong reset timing versus the latched scheduler")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_destab)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigInvalid, DimensionMismatch, RankDeficient, RankCondition, NotStabilizing) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SingularMatrix, NoConvergence, NonFinite) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ResetUIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
