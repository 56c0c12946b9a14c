"""Experiment drivers: certificate grid search, Monte-Carlo study, reset-law
comparison and the destabilization demo. Each writes flat CSV/JSON files.

Config files are JSON documents whose top-level keys mirror
:class:`ExperimentConfig`::

    {
      "plant": {"a": [[...]], "b": [[...]], "c": [[...]], "d": [[...]]},
      "k": [[...]], "y_free": [[...]],
      "grid": {"lambda_f": [...], "lambda_j": [...], "tau_j": [...]},
      "sim": {"x0": [...], "xhat0": [...], "t_end": 20, "step": 0.001, ...},
      "montecarlo": {"runs": 500, "seed": 20190101, "x_inf_bound": 20},
      "output_dir": "out"
    }

Monte-Carlo draws use numpy's PCG64 bit generator seeded with the 64-bit
``seed``; all initial conditions are drawn up front in run order so results do
not depend on how runs are scheduled.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import reference
from .errors import ConfigInvalid, Infeasible
from .hybrid_sim import (
    HybridTrajectory,
    Metrics,
    SimConfig,
    compute_metrics,
    read_trajectory_csv,
    run_simulation,
    sector_value,
    write_trajectory_csv,
)
from .lmi_cert import ResetCertificate, synthesize_certificate, validate_certificate
from .uio_design import CuioParams, PlantModel, assemble_cuio

log = logging.getLogger(__name__)

BUCKETS = ((0, 20), (20, 40), (40, 60), (60, 80), (80, 100))
DEFAULT_SEED = 20190101


def default_grid() -> dict:
    idx = range(10)
    return {
        "lambda_f": [round(0.1 + i * 1.0, 10) for i in idx],
        "lambda_j": [round(0.1 + i * 0.1, 10) for i in idx],
        "tau_j": [round(0.1 + i * 1.0, 10) for i in idx],
    }


def default_sim() -> dict:
    return {
        "x0": [-5.0, 0.0, 10.0],
        "xhat0": [0.0, 0.0, 0.0],
        "t_end": 20.0,
        "step": 1e-3,
        "event_tol": 1e-9,
        "epsilon": 0.01,
        "min_dwell": None,
        "mode": "ruio_vertex",
        "law": 1,
        "vertex_bounds": reference.COMPARE_BOUNDS,
        "input_u": {"kind": "zero"},
        "input_v": {"kind": "step"},
    }


@dataclass
class ExperimentConfig:
    plant: dict = field(default_factory=lambda: {
        "a": reference.A, "b": reference.B, "c": reference.C, "d": reference.D})
    k: list = field(default_factory=lambda: reference.K)
    y_free: Optional[list] = field(default_factory=lambda: reference.Y)
    grid: dict = field(default_factory=default_grid)
    sim: dict = field(default_factory=default_sim)
    montecarlo: dict = field(default_factory=lambda: {
        "runs": 500, "seed": DEFAULT_SEED, "x_inf_bound": 20.0})
    output_dir: str = "out"

    def __post_init__(self):
        unknown = set(self.sim) - set(default_sim())
        if unknown:
            raise ConfigInvalid(f"unknown sim keys: {sorted(unknown)}")
        sim = default_sim()
        sim.update(self.sim)
        self.sim = sim
        mc = {"runs": 500, "seed": DEFAULT_SEED, "x_inf_bound": 20.0}
        mc.update(self.montecarlo)
        self.montecarlo = mc
        if int(mc["runs"]) < 0:
            raise ConfigInvalid("montecarlo.runs must be >= 0")
        if not float(mc["x_inf_bound"]) > 0:
            raise ConfigInvalid("montecarlo.x_inf_bound must be positive")
        if not 0 <= int(mc["seed"]) < 2**64:
            raise ConfigInvalid("montecarlo.seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        allowed = {"plant", "k", "y_free", "grid", "sim", "montecarlo", "output_dir"}
        extra = set(doc) - allowed
        if extra:
            raise ConfigInvalid(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def build_plant(self) -> PlantModel:
        try:
            return PlantModel(**{k: self.plant[k] for k in ("a", "b", "c", "d")})
        except KeyError as exc:
            raise ConfigInvalid(f"plant is missing matrix {exc}") from exc

    def build_cuio(self) -> tuple[PlantModel, CuioParams]:
        plant = self.build_plant()
        return plant, assemble_cuio(plant, self.k, self.y_free)

    def sim_config(self, **overrides) -> SimConfig:
        fields = dict(self.sim)
        fields.update(overrides)
        return SimConfig(**fields)

    def grid_points(self) -> list[tuple[float, float, float]]:
        try:
            lf, lj, tj = (list(self.grid[key]) for key in ("lambda_f", "lambda_j", "tau_j"))
        except KeyError as exc:
            raise ConfigInvalid(f"grid is missing {exc}") from exc
        lj = [v for v in lj if 0 < v <= 1]
        if not lf or not lj or not tj:
            raise ConfigInvalid("grid lists must be non-empty (lambda_j restricted to (0, 1])")
        return [(float(a), float(b), float(c)) for a in lf for b in lj for c in tj]

    def out(self, override=None) -> Path:
        path = Path(override if override is not None else self.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


# --------------------------------------------------------------------------
# Grid search
# --------------------------------------------------------------------------


@dataclass
class GridRow:
    index: int
    lambda_f: float
    lambda_j: float
    tau_j: float
    feasible: bool
    certificate: Optional[str] = None
    iterations: int = 0
    residual: float = math.nan


def _grid_point(args):
    m, n_mat, point, epsilon = args
    try:
        cert = synthesize_certificate(m, n_mat, *point, epsilon=epsilon)
    except Infeasible as exc:
        return None, exc.residual
    return cert.to_dict(), cert.synthesis.residual, cert.synthesis.iterations


def run_grid_search(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> list[GridRow]:
    """Synthesize a certificate at every grid triple; writes ``grid.csv`` and the certificates."""
    points = cfg.grid_points()
    _, cuio = cfg.build_cuio()
    out = cfg.out(out_dir)
    cert_dir = out / "certificates"
    cert_dir.mkdir(exist_ok=True)
    epsilon = float(cfg.sim["epsilon"])
    tasks = [(cuio.m, cuio.n_mat, p, epsilon) for p in points]

    rows: list[GridRow] = []
    try:
        results = _map(_grid_point, tasks, jobs)
        for idx, (point, res) in enumerate(zip(points, results)):
            row = GridRow(idx, *point, feasible=res[0] is not None, residual=res[1])
            if row.feasible:
                cert = ResetCertificate.from_dict(res[0])
                path = cert_dir / f"cert_{idx:04d}.json"
                cert.save(path)
                row.certificate = str(path.relative_to(out))
                row.iterations = res[2]
            rows.append(row)
    finally:
        _write_grid_csv(out / "grid.csv", rows)
    return rows


def _write_grid_csv(path: Path, rows: list[GridRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "lambda_f", "lambda_j", "tau_j", "feasible", "iterations",
                    "residual", "certificate"])
        for r in rows:
            w.writerow([r.index, repr(r.lambda_f), repr(r.lambda_j), repr(r.tau_j),
                        int(r.feasible), r.iterations, repr(float(r.residual)),
                        r.certificate or ""])


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# --------------------------------------------------------------------------
# Monte-Carlo
# --------------------------------------------------------------------------


@dataclass
class MonteCarloSummary:
    runs: int
    law: int
    mean_l2_improvement: float = math.nan
    mean_settling_improvement: float = math.nan
    l2_buckets: list = field(default_factory=list)
    settling_buckets: list = field(default_factory=list)
    l2_below_zero: float = math.nan
    settling_below_zero: float = math.nan


def draw_initial_states(cfg: ExperimentConfig, runs: int, seed: int) -> np.ndarray:
    """Initial plant states, one row per run, drawn in run order from PCG64(seed).

    Components with a vertex bound get their initial *error* drawn inside
    that bound; all others are uniform on ``[-b, b]``.
    """
    sim = cfg.sim_config()
    n = sim.x0.size
    b = float(cfg.montecarlo["x_inf_bound"])
    bounds = sim.vertex_bounds or [None] * n
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.uniform(-b, b, size=(runs, n))
    unit = rng.uniform(0.0, 1.0, size=(runs, n))
    for i, bound in enumerate(bounds):
        if bound is not None:
            lo, hi = float(bound[0]), float(bound[1])
            err = lo + (hi - lo) * unit[:, i]
            draws[:, i] = sim.xhat0[i] - err
    return draws


def _improvement(base: float, new: float) -> float:
    if base == 0:
        return 0.0
    return 100.0 * (base - new) / base


def _mc_run(args):
    plant, cuio, cert, sim, law, x0 = args
    base = compute_metrics(run_simulation(plant, cuio, cert, sim.replace(x0=x0, mode="cuio")))
    reset = compute_metrics(run_simulation(plant, cuio, cert, sim.replace(x0=x0, law=law)))
    return base, reset


def bucket_fractions(values) -> tuple[list[float], float]:
    """Percent of ``values`` per 20% bucket, plus the percent below zero."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return [0.0] * len(BUCKETS), 0.0
    fracs = []
    for lo, hi in BUCKETS:
        if hi == 100:
            sel = (values >= lo)
        else:
            sel = (values >= lo) & (values < hi)
        fracs.append(100.0 * float(np.mean(sel)))
    return fracs, 100.0 * float(np.mean(values < 0))


def run_monte_carlo(
    cfg: ExperimentConfig,
    cert: ResetCertificate,
    law: int = 1,
    out_dir=None,
    seed: Optional[int] = None,
    runs: Optional[int] = None,
    jobs: int = 1,
) -> MonteCarloSummary:
    """Compare C-UIO and R-UIO (vertex mode, ``law``) over random initial states."""
    runs = int(cfg.montecarlo["runs"] if runs is None else runs)
    seed = int(cfg.montecarlo["seed"] if seed is None else seed)
    plant, cuio = cfg.build_cuio()
    cert.attach(cuio.m)
    sim = cfg.sim_config(mode="ruio_vertex", law=law)
    x0s = draw_initial_states(cfg, runs, seed)
    results = _map(_mc_run, [(plant, cuio, cert, sim, law, x0) for x0 in x0s], jobs)

    out = cfg.out(out_dir)
    l2_imp, st_imp = [], []
    with open(out / "montecarlo.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run"] + [f"x{i + 1}_0" for i in range(x0s.shape[1] if runs else 0)]
                   + ["l2_cuio", "settling_cuio", "l2_ruio", "settling_ruio", "first_reset",
                      "l2_improvement", "settling_improvement"])
        for idx, (x0, (base, reset)) in enumerate(zip(x0s, results)):
            li = _improvement(base.l2, reset.l2)
            si = _improvement(base.settling, reset.settling)
            l2_imp.append(li)
            st_imp.append(si)
            w.writerow([idx] + [repr(float(v)) for v in x0]
                       + [repr(base.l2), repr(base.settling), repr(reset.l2), repr(reset.settling),
                          "" if reset.first_reset is None else repr(float(reset.first_reset)),
                          repr(li), repr(si)])

    summary = MonteCarloSummary(runs=runs, law=law)
    if runs:
        summary.mean_l2_improvement = float(np.mean(l2_imp))
        summary.mean_settling_improvement = float(np.mean(st_imp))
        summary.l2_buckets, summary.l2_below_zero = bucket_fractions(l2_imp)
        summary.settling_buckets, summary.settling_below_zero = bucket_fractions(st_imp)

    with open(out / "montecarlo_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "law", "runs", "mean_improvement", "below_0"]
                   + [f"{lo}-{hi}" for lo, hi in BUCKETS])
        if runs:
            for name, mean, below, buckets in (
                ("l2", summary.mean_l2_improvement, summary.l2_below_zero, summary.l2_buckets),
                ("settling", summary.mean_settling_improvement, summary.settling_below_zero,
                 summary.settling_buckets),
            ):
                w.writerow([name, law, runs, repr(mean), repr(below)] + [repr(b) for b in buckets])
    return summary


# --------------------------------------------------------------------------
# Reset-law comparison
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    law_label: str
    first_reset: Optional[float]
    l2: float
    settling: float


def compare_reset_laws(cfg: ExperimentConfig, cert: ResetCertificate, out_dir=None) -> list[ComparisonRow]:
    """One vertex-mode run per reset law plus the C-UIO baseline, same initial state."""
    plant, cuio = cfg.build_cuio()
    cert.attach(cuio.m)
    out = cfg.out(out_dir)
    rows = []
    runs = [(f"law{law}", dict(mode="ruio_vertex", law=law)) for law in (1, 2, 3, 4)]
    runs.append(("cuio", dict(mode="cuio")))
    for label, overrides in runs:
        traj = run_simulation(plant, cuio, cert, cfg.sim_config(**overrides))
        write_trajectory_csv(traj, out / f"compare_{label}.csv")
        m = compute_metrics(traj)
        first = None if m.first_reset is None else float(m.first_reset)
        rows.append(ComparisonRow(label, first, m.l2, m.settling))
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["law", "first_reset", "l2", "settling"])
        for r in rows:
            w.writerow([r.law_label, "" if r.first_reset is None else repr(r.first_reset),
                        repr(r.l2), repr(r.settling)])
    return rows


def metrics_from_csv(path) -> Metrics:
    """Recompute metrics from a trajectory dump (independent of the in-memory run)."""
    cols = read_trajectory_csv(path)
    e_cols = sorted((k for k in cols if k.startswith("e") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    t = cols["t"]
    sq = sum(cols[k] ** 2 for k in e_cols)
    l2 = math.sqrt(float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t))))
    norms = np.sqrt(sq)
    above = np.flatnonzero(norms > 0.02 * norms[0])
    if above.size == 0:
        settling = float(t[0])
    elif above[-1] == t.size - 1:
        settling = float(t[-1])
    else:
        settling = float(t[above[-1] + 1])
    jumps = np.flatnonzero(cols["jump"] == 1)
    return Metrics(l2=l2, settling=settling, first_reset=float(t[jumps[0]]) if jumps.size else None)


def calibration_sweep(cfg: ExperimentConfig, lo=-5.0, hi=5.0, step=0.25, index=1) -> list[tuple[float, float]]:
    """C-UIO l2 of the error as the unknown initial state component is swept."""
    plant, cuio = cfg.build_cuio()
    dummy = reference.example_certificate() if plant.n == 3 else None
    out = []
    for value in np.arange(lo, hi + 0.5 * step, step):
        x0 = np.array(cfg.sim["x0"], dtype=float)
        x0[index] = value
        sim = cfg.sim_config(x0=x0, mode="cuio", vertex_bounds=None)
        cert = dummy if dummy is not None else _identity_certificate(plant.n)
        out.append((float(value), compute_metrics(run_simulation(plant, cuio, cert, sim)).l2))
    return out


def _identity_certificate(n: int) -> ResetCertificate:
    f = -np.eye(n)
    f[0, 0] = 1.0
    return ResetCertificate(p=np.eye(n), f=f, q=np.eye(n), lambda_f=1.0, lambda_j=1.0, tau_j=1.0)


# --------------------------------------------------------------------------
# Destabilization demo
# --------------------------------------------------------------------------


@dataclass
class DemoVerdict:
    wrong_jumps: int
    wrong_v_growth_between_jumps: bool
    wrong_v_growth_at_jump: bool
    wrong_final_norm: float
    wrong_diverged: bool
    initial_norm: float
    scheduled_jumps: int
    scheduled_monotone: bool
    scheduled_final_norm: float

    @property
    def wrong_destabilizes(self) -> bool:
        grew = self.wrong_diverged or self.wrong_final_norm > 10 * self.initial_norm
        return self.wrong_v_growth_between_jumps and grew

    @property
    def scheduled_decays(self) -> bool:
        return self.scheduled_monotone and self.scheduled_final_norm < self.initial_norm


def wrong_jump_trigger(f_sector):
    """Fire when the second error component changes sign while inside the jump set."""

    def trigger(t, tracked, tracked_start):
        e = tracked[..., 0, :]
        e_start = tracked_start[..., 0, :]
        crossed = (np.sign(e[..., 1]) != np.sign(e_start[..., 1])) & (e_start[..., 1] != 0)
        return crossed & (sector_value(f_sector, e_start) <= 0)

    return trigger


def _post_jump_values(traj: HybridTrajectory, p: np.ndarray) -> tuple[list, list]:
    pre = [float(j.e_pre @ p @ j.e_pre) for j in traj.jumps]
    post = [float(j.e_post @ p @ j.e_post) for j in traj.jumps]
    return pre, post


def run_destabilization_demo(out_dir=None, e0=None, t_end: float = 20.0, epsilon: float = 0.01):
    """Planar example: naive zero-crossing resets versus the latched scheduler.

    Returns ``(verdict, wrong_trajectory, scheduled_trajectory)`` and writes
    ``destab_wrong.csv`` / ``destab_scheduled.csv`` when ``out_dir`` is given.
    """
    plant, cuio, cert = reference.demo_system()
    e0 = np.array(reference.DEMO_E0 if e0 is None else e0, dtype=float)
    base = SimConfig(x0=[0.0, 0.0], xhat0=e0, mode="ruio_ideal", input_v="zero",
                     t_end=t_end, epsilon=epsilon)
    wrong = run_simulation(plant, cuio, cert, base, trigger=wrong_jump_trigger(cert.f))
    sched = run_simulation(plant, cuio, cert, base)

    _, wrong_post = _post_jump_values(wrong, cert.p)
    wrong_pre, _ = _post_jump_values(wrong, cert.p)
    s_pre, s_post = _post_jump_values(sched, cert.p)
    monotone = all(b <= a + 1e-9 for a, b in zip(s_post, s_post[1:]))
    monotone = monotone and all(b <= a + 1e-9 for a, b in zip(s_pre, s_post))
    verdict = DemoVerdict(
        wrong_jumps=len(wrong.jumps),
        wrong_v_growth_between_jumps=any(b > a for a, b in zip(wrong_post, wrong_post[1:])),
        wrong_v_growth_at_jump=any(b > a for a, b in zip(wrong_pre, wrong_post)),
        wrong_final_norm=float(np.linalg.norm(wrong.e[-1])),
        wrong_diverged=wrong.diverged,
        initial_norm=float(np.linalg.norm(e0)),
        scheduled_jumps=len(sched.jumps),
        scheduled_monotone=monotone,
        scheduled_final_norm=float(np.linalg.norm(sched.e[-1])),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(wrong, out / "destab_wrong.csv")
        write_trajectory_csv(sched, out / "destab_scheduled.csv")
        (out / "destab_verdict.json").write_text(json.dumps(
            {**asdict(verdict), "wrong_destabilizes": verdict.wrong_destabilizes,
             "scheduled_decays": verdict.scheduled_decays}, indent=2))
    return verdict, wrong, sched


def validate_against(cfg: ExperimentConfig, cert: ResetCertificate, tol: float):
    _, cuio = cfg.build_cuio()
    return validate_certificate(cuio.m, cuio.n_mat, cert, tol=tol)
