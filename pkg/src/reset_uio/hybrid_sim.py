"""Hybrid simulation of plant + (reset) unknown input observer.

The joint state ``s = (x, Z, e_v1, ..., e_vk)`` flows under a linear
time-invariant vector field with known/unknown inputs, integrated by a
fixed-step RK4 whose step map is precomputed. Reset decisions are taken by a
scheduler that latches the Lyapunov value at the first sector entry after each
jump and only fires once every tracked trajectory has decreased it by the
factor ``1 - epsilon``.

Modes:

``cuio``
    plain observer, never jumps.
``ruio_ideal``
    the true error is tracked (full-state knowledge), jump set ``e^T F e <= 0``.
``ruio_vertex``
    error trajectories started from the vertices of an initial-error box are
    tracked; one of four reset laws decides the sector part of the trigger.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigInvalid, DimensionMismatch
from .lmi_cert import ResetCertificate, jump_matrix
from .uio_design import CuioParams, PlantModel

MODES = ("cuio", "ruio_ideal", "ruio_vertex")
LAWS = (1, 2, 3, 4)
DIVERGENCE_NORM = 1e15
# An error this small relative to the plant/observer state is rounding noise
# from e = Z - M x and is treated as zero (never arms the scheduler).
ZERO_ERROR_RTOL = 1e-12
CHUNK = 1024
MIN_CHUNK = 8


# --------------------------------------------------------------------------
# Input signals
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Signal:
    """A known or unknown input signal, vectorized over time.

    kind is one of ``zero``, ``constant``, ``step``, ``sine``, ``square``.
    ``amplitude`` is a scalar or one value per channel; ``t0`` delays the
    step, ``frequency`` is in Hz for ``sine`` and ``square``.
    """

    kind: str = "zero"
    amplitude: object = 1.0
    frequency: float = 1.0
    t0: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "step", "sine", "square"):
            raise ConfigInvalid(f"unknown signal kind {self.kind!r}")

    @classmethod
    def from_spec(cls, spec) -> "Signal":
        if spec is None:
            return cls()
        if isinstance(spec, Signal):
            return spec
        if isinstance(spec, str):
            return cls(kind=spec)
        return cls(**spec)

    def to_spec(self) -> dict:
        amp = self.amplitude
        if isinstance(amp, np.ndarray):
            amp = amp.tolist()
        return {"kind": self.kind, "amplitude": amp, "frequency": self.frequency,
                "t0": self.t0, "phase": self.phase}

    def sample(self, t, dim: int) -> np.ndarray:
        """Values at times ``t`` (array) as an array of shape ``(len(t), dim)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind == "zero" or dim == 0:
            return np.zeros((t.size, dim))
        amp = np.broadcast_to(np.asarray(self.amplitude, dtype=float), (dim,))
        if self.kind == "constant":
            shape = np.ones_like(t)
        elif self.kind == "step":
            shape = (t >= self.t0).astype(float)
        elif self.kind == "sine":
            shape = np.sin(2 * np.pi * self.frequency * t + self.phase)
        else:
            shape = np.where(np.sin(2 * np.pi * self.frequency * t + self.phase) >= 0, 1.0, -1.0)
        return shape[:, None] * amp[None, :]


# --------------------------------------------------------------------------
# Configuration and results
# --------------------------------------------------------------------------


@dataclass
class SimConfig:
    x0: Sequence[float]
    xhat0: Optional[Sequence[float]] = None
    t_end: float = 20.0
    step: float = 1e-3
    event_tol: float = 1e-9
    epsilon: float = 0.01
    min_dwell: Optional[float] = None
    mode: str = "ruio_vertex"
    law: int = 1
    vertex_bounds: Optional[Sequence[Optional[Sequence[float]]]] = None
    input_u: object = None
    input_v: object = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        self.xhat0 = (np.zeros_like(self.x0) if self.xhat0 is None
                      else np.asarray(self.xhat0, dtype=float).ravel())
        if self.min_dwell is None:
            self.min_dwell = self.step
        self.input_u = Signal.from_spec(self.input_u)
        self.input_v = Signal.from_spec(self.input_v if self.input_v is not None else "step")
        self.validate()

    def validate(self) -> None:
        if not self.step > 0:
            raise ConfigInvalid("step must be positive")
        if not 0 < self.event_tol <= self.step:
            raise ConfigInvalid("event_tol must lie in (0, step]")
        if not 0 < self.epsilon < 1:
            raise ConfigInvalid("epsilon must lie in (0, 1)")
        if not self.t_end > 0:
            raise ConfigInvalid("t_end must be positive")
        if self.min_dwell < 0:
            raise ConfigInvalid("min_dwell must be non-negative")
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}")
        if self.law not in LAWS:
            raise ConfigInvalid(f"law must be one of {LAWS}")
        if self.x0.shape != self.xhat0.shape:
            raise ConfigInvalid("x0 and xhat0 must have equal length")
        if self.vertex_bounds is not None:
            if len(self.vertex_bounds) != self.x0.size:
                raise ConfigInvalid("vertex_bounds needs one entry (or null) per state")
            for b in self.vertex_bounds:
                if b is not None and (len(b) != 2 or not b[0] <= b[1]):
                    raise ConfigInvalid(f"bad vertex interval {b!r}")

    def replace(self, **changes) -> "SimConfig":
        fields = {
            "x0": self.x0, "xhat0": self.xhat0, "t_end": self.t_end, "step": self.step,
            "event_tol": self.event_tol, "epsilon": self.epsilon, "min_dwell": self.min_dwell,
            "mode": self.mode, "law": self.law, "vertex_bounds": self.vertex_bounds,
            "input_u": self.input_u, "input_v": self.input_v,
        }
        if "step" in changes and "min_dwell" not in changes and self.min_dwell == self.step:
            changes["min_dwell"] = None
        fields.update(changes)
        return SimConfig(**fields)


@dataclass
class SchedulerState:
    """Per-trajectory latches ``(tau_k, V(e(tau_k)))`` plus the reset history."""

    n_tracked: int
    latch_t: list = field(default_factory=list)
    latch_v: list = field(default_factory=list)
    jump_count: int = 0
    last_jump: float = -math.inf
    reset_times: list = field(default_factory=list)

    def __post_init__(self):
        self.clear()

    def clear(self) -> None:
        self.latch_t = [None] * self.n_tracked
        self.latch_v = [None] * self.n_tracked

    def all_latched(self) -> bool:
        return all(t is not None for t in self.latch_t)


@dataclass(frozen=True)
class JumpRecord:
    t: float
    k: int
    law: object
    z_pre: np.ndarray
    z_post: np.ndarray
    e_pre: np.ndarray
    e_post: np.ndarray
    tracked_pre: np.ndarray
    tracked_post: np.ndarray
    tau_k: tuple
    v_latched: tuple


@dataclass
class VertexBundle:
    vertices: np.ndarray  # (k, n)
    alpha: np.ndarray  # (k,)


@dataclass
class HybridTrajectory:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    xhat: np.ndarray
    e: np.ndarray
    tracked: np.ndarray  # (T, k, n): true error or vertex errors
    sector: np.ndarray  # (T, k)
    v_lyap: np.ndarray  # (T,) V of the true error
    jump_flag: np.ndarray  # (T,) 1 on post-jump samples
    jumps: list
    mode: str
    law: int
    epsilon: float
    min_dwell: float
    event_tol: float
    alpha: Optional[np.ndarray] = None
    diverged: bool = False

    @property
    def reset_times(self) -> list:
        return [j.t for j in self.jumps]

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


# --------------------------------------------------------------------------
# Elementary operations
# --------------------------------------------------------------------------


def sector_value(f, e):
    """``e^T F e``; non-positive means ``e`` is in the jump set."""
    e = np.asarray(e, dtype=float)
    return np.einsum("...i,ij,...j->...", e, np.asarray(f, dtype=float), e)


def reset_law_fires(law: int, vertices, f, t, k: int):
    """Sector part of reset law ``law`` for the vertex errors ``vertices`` at time ``t``.

    ``vertices`` has shape ``(..., n_vertices, n)``; ``k`` is the 1-based
    index of the prospective jump (law 4 relaxes only the first one).
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim < 2 or vertices.shape[-2] < 1:
        raise DimensionMismatch("need at least one vertex")
    q = sector_value(f, vertices)
    stack_norm = np.sqrt(np.sum(vertices**2, axis=(-2, -1)))
    if law == 1:
        out = q.max(axis=-1) < 0
    elif law == 2:
        out = q.sum(axis=-1) < 0
    elif law == 3:
        out = q.max(axis=-1) < stack_norm * np.exp(-np.asarray(t, dtype=float))
    elif law == 4:
        out = q.sum(axis=-1) < (stack_norm if k == 1 else 0.0)
    else:
        raise ValueError(f"unknown reset law {law}")
    return bool(out) if np.ndim(out) == 0 else out


def apply_jump(cuio: CuioParams, cert: ResetCertificate, z, y) -> np.ndarray:
    """Observer reset ``Z+ = (M - A_R E C) Z - (I - A_R) M E y``.

    ``E C`` is rewritten as ``M - I`` so the output matrix is not needed.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = cuio.m.shape[0]
    if z.shape != (n,) or y.shape != (cuio.e.shape[1],):
        raise DimensionMismatch("z or y has the wrong length")
    z_map, y_map = reset_maps(cuio, cert)
    return z_map @ z + y_map @ y


def reset_maps(cuio: CuioParams, cert: ResetCertificate) -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``(M - A_R (M - I), -(I - A_R) M E)`` of the observer reset."""
    n = cuio.m.shape[0]
    eye = np.eye(n)
    return cuio.m - cert.a_r @ (cuio.m - eye), -(eye - cert.a_r) @ cuio.m @ cuio.e


def build_vertices(e0, bounds) -> VertexBundle:
    """Box vertices over the bounded components; exact components copied from ``e0``."""
    e0 = np.asarray(e0, dtype=float)
    n = e0.size
    bounds = [None] * n if bounds is None else list(bounds)
    choices = []
    weights = []
    for i, b in enumerate(bounds):
        if b is None or b[0] == b[1]:
            value = e0[i] if b is None else float(b[0])
            if b is not None and abs(e0[i] - value) > 1e-12 * (1 + abs(value)):
                raise ConfigInvalid(f"initial error component {i} lies outside its bound")
            choices.append([value])
            weights.append([1.0])
            continue
        lo, hi = float(b[0]), float(b[1])
        if not lo <= e0[i] <= hi:
            raise ConfigInvalid(
                f"initial error component {i} = {e0[i]:.6g} lies outside [{lo}, {hi}]"
            )
        w_hi = (e0[i] - lo) / (hi - lo)
        choices.append([lo, hi])
        weights.append([1.0 - w_hi, w_hi])
    verts = np.array([list(c) for c in itertools.product(*choices)], dtype=float)
    alpha = np.array([math.prod(w) for w in itertools.product(*weights)], dtype=float)
    return VertexBundle(vertices=verts.reshape(-1, n), alpha=alpha)


# --------------------------------------------------------------------------
# RK4 for s' = A s + B w(t)
# --------------------------------------------------------------------------


def rk4_coefficients(a: np.ndarray, b: np.ndarray, h: float):
    """Step map of classical RK4 on ``s' = A s + B w(t)``.

    Returns ``(Phi, G0, Gh, G1)`` with
    ``s(t+h) = Phi s + G0 w(t) + Gh w(t+h/2) + G1 w(t+h)``.
    """
    dim = a.shape[0]
    nw = b.shape[1]
    zero = np.zeros((dim, nw))
    # Each stage k = (coef of s, coef of w0, coef of wh, coef of w1).
    k1 = (a, b, zero, zero)

    def stage(prev, frac, w_slot):
        ks, k0, kh, k1_ = prev
        out = [a + frac * h * a @ ks, frac * h * a @ k0, frac * h * a @ kh, frac * h * a @ k1_]
        out[w_slot] = out[w_slot] + b
        return tuple(out)

    k2 = stage(k1, 0.5, 2)
    k3 = stage(k2, 0.5, 2)
    k4 = stage(k3, 1.0, 3)
    comb = [h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(4)]
    phi = np.eye(dim) + comb[0]
    return phi, comb[1], comb[2], comb[3]


# --------------------------------------------------------------------------
# Simulator
# --------------------------------------------------------------------------

Trigger = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class _Simulator:
    def __init__(self, plant, cuio, cert, cfg, trigger):
        n = plant.n
        if cfg.x0.size != n:
            raise ConfigInvalid(f"x0 has {cfg.x0.size} entries, plant has {n} states")
        self.plant, self.cuio, self.cert, self.cfg = plant, cuio, cert, cfg
        self.trigger = trigger
        self.n = n
        self.c = plant.c
        self.m = cuio.m
        self.f = cert.f
        self.p = cert.p
        self.h_jump = jump_matrix(cert.a_r, cuio.m)
        self.reset_z, self.reset_y = reset_maps(cuio, cert)

        e0 = cfg.xhat0 - cfg.x0
        self.mode = cfg.mode
        if cfg.mode == "ruio_vertex":
            self.bundle = build_vertices(e0, cfg.vertex_bounds)
        else:
            self.bundle = None
        self.n_vert = 0 if self.bundle is None else len(self.bundle.alpha)
        self.n_tracked = self.n_vert if self.bundle is not None else 1
        self.resets = cfg.mode != "cuio" or trigger is not None

        # Joint linear system.
        nu, nv = plant.n_inputs, plant.n_unknown
        dim = 2 * n + self.n_vert * n
        a = np.zeros((dim, dim))
        a[:n, :n] = plant.a
        a[n : 2 * n, n : 2 * n] = cuio.n_mat
        a[n : 2 * n, :n] = cuio.l @ plant.c
        for i in range(self.n_vert):
            sl = slice(2 * n + i * n, 2 * n + (i + 1) * n)
            a[sl, sl] = cuio.n_mat
        bw = np.zeros((dim, nu + nv))
        bw[:n, :nu] = plant.b
        bw[:n, nu:] = plant.d
        bw[n : 2 * n, :nu] = cuio.g
        self.a_joint, self.b_joint = a, bw
        self.nu, self.nv = nu, nv
        self.no_inputs = cfg.input_u.kind == "zero" and cfg.input_v.kind == "zero"
        self.coeffs = rk4_coefficients(a, bw, cfg.step)

        z0 = cfg.xhat0 + cuio.e @ (plant.c @ cfg.x0)
        parts = [cfg.x0, z0]
        if self.bundle is not None:
            parts.append(self.bundle.vertices.ravel())
        self.s0 = np.concatenate(parts)

    # ---- state views -----------------------------------------------------

    def inputs(self, t) -> np.ndarray:
        t = np.atleast_1d(t)
        if self.no_inputs:
            return np.zeros((t.size, self.nu + self.nv))
        return np.hstack([self.cfg.input_u.sample(t, self.nu), self.cfg.input_v.sample(t, self.nv)])

    def error(self, s: np.ndarray) -> np.ndarray:
        n = self.n
        x = s[..., :n]
        z = s[..., n : 2 * n]
        return z - x @ self.m.T

    def tracked(self, s: np.ndarray) -> np.ndarray:
        if self.bundle is None:
            return self.error(s)[..., None, :]
        lead = s.shape[:-1]
        return s[..., 2 * self.n :].reshape(*lead, self.n_vert, self.n)

    def lyap(self, e: np.ndarray) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", e, self.p, e)

    # ---- integration -----------------------------------------------------

    def advance(self, s: np.ndarray, t: float, h: float) -> np.ndarray:
        w = self.inputs(np.array([t, t + 0.5 * h, t + h]))
        if h == self.cfg.step:
            phi, g0, gh, g1 = self.coeffs
            return phi @ s + g0 @ w[0] + gh @ w[1] + g1 @ w[2]
        a = self.a_joint
        bw = w @ self.b_joint.T
        k1 = a @ s + bw[0]
        k2 = a @ (s + 0.5 * h * k1) + bw[1]
        k3 = a @ (s + 0.5 * h * k2) + bw[1]
        k4 = a @ (s + h * k3) + bw[2]
        return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def chunk(self, s: np.ndarray, t: float, steps: int) -> np.ndarray:
        """States after 1..steps full steps from ``(t, s)``, shape ``(steps, dim)``."""
        h = self.cfg.step
        phi, g0, gh, g1 = self.coeffs
        j = np.arange(steps)
        w0 = self.inputs(t + j * h)
        wh = self.inputs(t + (j + 0.5) * h)
        w1 = self.inputs(t + (j + 1) * h)
        forcing = w0 @ g0.T + wh @ gh.T + w1 @ g1.T
        out = np.empty((steps, s.size))
        cur = s
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(steps):
                cur = phi @ cur + forcing[i]
                out[i] = cur
        return out

    # ---- predicates ------------------------------------------------------

    def armed(self, t, s) -> np.ndarray:
        """Which tracked trajectories would latch at ``(t, s)``; shape ``(..., k)``."""
        tr = self.tracked(s)
        q = sector_value(self.f, tr)
        arm = q <= 0
        if self.mode == "ruio_vertex":
            law_ok = reset_law_fires(self.cfg.law, tr, self.f, t, self.sched.jump_count + 1)
            arm = arm | np.asarray(law_ok)[..., None]
        nonzero = self.lyap(tr) > 0
        if self.bundle is None:
            n = self.n
            scale = 1.0 + np.linalg.norm(s[..., : 2 * n], axis=-1)
            nonzero = nonzero & (np.linalg.norm(tr[..., 0, :], axis=-1) > ZERO_ERROR_RTOL * scale)[..., None]
        return arm & nonzero

    def fires(self, t, s, s_start) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        dwell = (t - self.sched.last_jump) >= self.cfg.min_dwell
        tr = self.tracked(s)
        if self.trigger is not None:
            return np.asarray(self.trigger(t, tr, self.tracked(s_start))) & dwell
        if not self.sched.all_latched():
            return np.zeros(np.shape(t), dtype=bool)
        if self.mode == "ruio_ideal":
            sect = sector_value(self.f, tr[..., 0, :]) <= 0
        else:
            sect = np.asarray(reset_law_fires(self.cfg.law, tr, self.f, t, self.sched.jump_count + 1))
        v = self.lyap(tr)
        thresh = (1.0 - self.cfg.epsilon) * np.array(self.sched.latch_v, dtype=float)
        latched_before = t[..., None] >= np.array(self.sched.latch_t, dtype=float)
        decrease = np.all((v <= thresh) & latched_before, axis=-1)
        return sect & decrease & dwell

    def bisect(self, pred, s0, t0, h, s1):
        """Earliest ``t`` in ``(t0, t0+h]`` (to event_tol) where ``pred`` holds."""
        lo, hi = 0.0, h
        s_hi = s1
        while hi - lo > self.cfg.event_tol:
            mid = 0.5 * (lo + hi)
            s_mid = self.advance(s0, t0, mid)
            if pred(t0 + mid, s_mid):
                hi, s_hi = mid, s_mid
            else:
                lo = mid
        return t0 + hi, s_hi

    # ---- main loop -------------------------------------------------------

    def run(self) -> HybridTrajectory:
        cfg = self.cfg
        self.sched = SchedulerState(self.n_tracked)
        self.samples_t: list = [np.zeros(1)]
        self.samples_s: list = [self.s0[None, :].copy()]
        self.samples_jump: list = [np.zeros(1, dtype=int)]
        self.jumps: list = []
        self.diverged = False

        t, s = 0.0, self.s0.copy()
        resets = self.resets
        if resets and self.trigger is None:
            self.latch_now(t, s)

        chunk_len = MIN_CHUNK
        while not self.diverged:
            remaining = cfg.t_end - t
            if remaining <= 1e-9 * cfg.step:
                break
            full = int(math.floor(remaining / cfg.step * (1 + 1e-12)))
            if full == 0:
                t, s = self.single_step(t, s, remaining, None)
                continue
            steps = min(full, chunk_len)
            block = self.chunk(s, t, steps)
            times = t + cfg.step * np.arange(1, steps + 1)
            bad = ~np.all(np.isfinite(block), axis=1) | (np.max(np.abs(block), axis=1) > DIVERGENCE_NORM)
            limit = int(np.argmax(bad)) if bad.any() else steps
            event = limit
            if resets and limit > 0:
                event = min(event, self.first_event(times[:limit], block[:limit], s))
            if event:
                self.record_block(times[:event], block[:event])
            if event < steps and event == limit and bad.any():
                self.diverged = True
                break
            if event == steps:
                t, s = times[-1], block[-1]
                chunk_len = min(2 * chunk_len, CHUNK)
                continue
            chunk_len = MIN_CHUNK
            t_prev = t if event == 0 else times[event - 1]
            s_prev = s if event == 0 else block[event - 1]
            t, s = self.single_step(t_prev, s_prev, cfg.step, block[event])
        return self.build()

    def first_event(self, times, block, s_start) -> int:
        """Index of the first step in ``block`` where a latch or jump may occur."""
        n_steps = len(times)
        prev = np.vstack([s_start[None, :], block[:-1]])
        if self.trigger is not None:
            hit = self.fires(times, block, prev)
            return int(np.argmax(hit)) if hit.any() else n_steps
        unlatched = [i for i, lt in enumerate(self.sched.latch_t) if lt is None]
        if unlatched:
            arm = self.armed(times, block)[:, unlatched]
            hit = arm.any(axis=1)
        else:
            hit = self.fires(times, block, prev)
        return int(np.argmax(hit)) if hit.any() else n_steps

    def single_step(self, t0, s0, h, s1):
        """Advance one step with exact latch/jump handling; returns the new ``(t, s)``."""
        if s1 is None:
            s1 = self.advance(s0, t0, h)
        t1 = t0 + h
        if not self.resets:
            self.record(t1, s1)
            return t1, s1
        if self.trigger is None:
            arm_end = self.armed(t1, s1)
            for i, lt in enumerate(self.sched.latch_t):
                if lt is None and arm_end[i]:
                    tl, sl = self.bisect(lambda tt, ss, i=i: bool(self.armed(tt, ss)[i]), s0, t0, h, s1)
                    self.sched.latch_t[i] = tl
                    self.sched.latch_v[i] = float(self.lyap(self.tracked(sl)[i]))
        if bool(self.fires(t1, s1, s0)):
            tk, sk = self.bisect(lambda tt, ss: bool(self.fires(tt, ss, s0)), s0, t0, h, s1)
            self.record(tk, sk)
            s_post = self.jump(tk, sk)
            self.record(tk, s_post, jump=1)
            return tk, s_post
        self.record(t1, s1)
        return t1, s1

    def jump(self, tk: float, s: np.ndarray) -> np.ndarray:
        n = self.n
        x, z = s[:n], s[n : 2 * n]
        y = self.c @ x
        z_post = self.reset_z @ z + self.reset_y @ y
        s_post = s.copy()
        s_post[n : 2 * n] = z_post
        if self.bundle is not None:
            verts = self.tracked(s)
            s_post[2 * n :] = (verts @ self.h_jump.T).ravel()
        self.sched.jump_count += 1
        self.jumps.append(
            JumpRecord(
                t=tk,
                k=self.sched.jump_count,
                law=("custom" if self.trigger is not None else
                     "ideal" if self.mode == "ruio_ideal" else self.cfg.law),
                z_pre=z.copy(),
                z_post=z_post.copy(),
                e_pre=self.error(s),
                e_post=self.error(s_post),
                tracked_pre=self.tracked(s).copy(),
                tracked_post=self.tracked(s_post).copy(),
                tau_k=tuple(self.sched.latch_t),
                v_latched=tuple(self.sched.latch_v),
            )
        )
        self.sched.last_jump = tk
        self.sched.reset_times.append(tk)
        self.sched.clear()
        if self.trigger is None:
            self.latch_now(tk, s_post)
        return s_post

    def latch_now(self, t, s) -> None:
        arm = self.armed(t, s)
        tr = self.tracked(s)
        for i in range(self.n_tracked):
            if self.sched.latch_t[i] is None and arm[i]:
                self.sched.latch_t[i] = t
                self.sched.latch_v[i] = float(self.lyap(tr[i]))

    def record(self, t, s, jump: int = 0) -> None:
        self.samples_t.append(np.array([float(t)]))
        self.samples_s.append(np.array(s, dtype=float)[None, :])
        self.samples_jump.append(np.array([jump], dtype=int))

    def record_block(self, times, block) -> None:
        self.samples_t.append(np.array(times, dtype=float))
        self.samples_s.append(np.array(block, dtype=float))
        self.samples_jump.append(np.zeros(len(times), dtype=int))

    def build(self) -> HybridTrajectory:
        n = self.n
        states = np.concatenate(self.samples_s)
        x = states[:, :n]
        z = states[:, n : 2 * n]
        y = x @ self.c.T
        xhat = z - y @ self.cuio.e.T
        e = xhat - x
        tracked = self.tracked(states)
        return HybridTrajectory(
            t=np.concatenate(self.samples_t),
            x=x,
            z=z,
            xhat=xhat,
            e=e,
            tracked=tracked,
            sector=sector_value(self.f, tracked),
            v_lyap=self.lyap(e),
            jump_flag=np.concatenate(self.samples_jump),
            jumps=self.jumps,
            mode=self.mode,
            law=self.cfg.law,
            epsilon=self.cfg.epsilon,
            min_dwell=self.cfg.min_dwell,
            event_tol=self.cfg.event_tol,
            alpha=None if self.bundle is None else self.bundle.alpha,
            diverged=self.diverged,
        )


def run_simulation(
    plant: PlantModel,
    cuio: CuioParams,
    cert: ResetCertificate,
    cfg: SimConfig,
    *,
    trigger: Optional[Trigger] = None,
) -> HybridTrajectory:
    """Simulate plant and observer over ``[0, cfg.t_end]``.

    ``trigger`` replaces the built-in scheduler with a custom jump rule
    ``trigger(t, tracked, tracked_at_step_start) -> bool`` (vectorized over a
    leading time axis); only the dwell-time guard is kept. It exists to
    reproduce naive reset rules for comparison.
    """
    cfg.validate()
    if cert.n != plant.n:
        raise DimensionMismatch("certificate and plant sizes differ")
    if trigger is not None and cfg.mode == "ruio_vertex":
        raise ConfigInvalid("custom triggers act on the true error; use mode ruio_ideal")
    return _Simulator(plant, cuio, cert, cfg, trigger).run()


# --------------------------------------------------------------------------
# Metrics and CSV
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    l2: float
    settling: float
    first_reset: Optional[float]


def compute_metrics(traj: HybridTrajectory, settle_frac: float = 0.02) -> Metrics:
    """L2 norm of the error (trapezoid rule), 2% settling time and first reset time.

    Jump instants appear twice in the samples (pre and post), so the
    trapezoid rule never integrates across a discontinuity.
    """
    t = np.asarray(traj.t)
    if t.size == 0:
        raise ValueError("empty trajectory")
    sq = np.sum(traj.e**2, axis=1)
    l2 = math.sqrt(float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t)))) if t.size > 1 else 0.0
    norms = np.sqrt(sq)
    bound = settle_frac * norms[0]
    above = np.flatnonzero(norms > bound)
    if above.size == 0:
        settling = float(t[0])
    elif above[-1] == t.size - 1:
        settling = float(t[-1])
    else:
        settling = float(t[above[-1] + 1])
    first = traj.jumps[0].t if traj.jumps else None
    return Metrics(l2=l2, settling=settling, first_reset=first)


def trajectory_header(n: int) -> list[str]:
    return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"xhat{i + 1}" for i in range(n)]
            + [f"e{i + 1}" for i in range(n)] + ["sector_min", "V", "jump"])


def write_trajectory_csv(traj: HybridTrajectory, path) -> None:
    n = traj.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(n))
        smin = traj.sector.min(axis=1)
        for i in range(traj.t.size):
            row = [traj.t[i], *traj.x[i], *traj.xhat[i], *traj.e[i], smin[i], traj.v_lyap[i]]
            w.writerow([repr(float(v)) for v in row] + [int(traj.jump_flag[i])])


def read_trajectory_csv(path) -> dict:
    """Load a trajectory dump back into arrays keyed by column name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {name: np.array([float(r[j]) for r in body]) for j, name in enumerate(header)}
    cols["jump"] = cols["jump"].astype(int)
    return cols
