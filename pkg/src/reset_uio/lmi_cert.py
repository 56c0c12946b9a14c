"""Reset certificates: validation, synthesis and the derived reset maps.

A certificate ``(P, F, Q)`` at fixed scalars ``(lambda_f, lambda_j, tau_j)``
must satisfy (with ``tau_f = 1``)::

    N^T P + P N + lambda_f P + F < 0
    [[lambda_j P + tau_j F, (Q - Q M + P M)^T],
     [Q - Q M + P M,        P                ]] >= 0
    P > 0

``A_R = P^{-1} Q`` is the after-reset matrix and ``H = A_R - A_R M + M`` the
induced error jump ``e+ = H e``. The jump set is ``{e : e^T F e <= 0}``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, Infeasible
from .matrix_core import as_matrix, max_eig, min_eig, solve_linear

TAU_F = 1.0
STRICT_MARGIN = 1e-3
RESIDUAL_TOL = 1e-7
MAX_ITERATIONS = 5000
SYNTH_VALIDATE_TOL = 1e-6
INDEFINITE_TOL = 1e-9
WELLPOSED_MIN_EIG = 1e-9
TAU_W_GRID = tuple(1e-3 * 10 ** (k / 10) for k in range(61))


@dataclass(frozen=True)
class SynthesisInfo:
    iterations: int
    residual: float


@dataclass
class ResetCertificate:
    p: np.ndarray
    f: np.ndarray
    q: np.ndarray
    lambda_f: float
    lambda_j: float
    tau_j: float
    a_r: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    tau_f: float = TAU_F
    tau_w: Optional[float] = None
    epsilon: float = 0.01
    synthesis: Optional[SynthesisInfo] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.p = as_matrix(self.p, "P")
        self.f = as_matrix(self.f, "F")
        self.q = as_matrix(self.q, "Q")
        n = self.p.shape[0]
        for name, mat in (("P", self.p), ("F", self.f), ("Q", self.q)):
            if mat.shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}, got {mat.shape}")
        if self.a_r is None:
            self.a_r = solve_linear(self.p, self.q)
        else:
            self.a_r = as_matrix(self.a_r, "A_R")

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def attach(self, m) -> "ResetCertificate":
        """Fill in ``h`` for the observer matrix ``M``; returns self."""
        self.a_r, self.h = derive_reset_maps(m, self)
        return self

    def lyapunov(self, e) -> float:
        e = np.asarray(e, dtype=float)
        return float(e @ self.p @ e)

    def sector(self, e) -> float:
        e = np.asarray(e, dtype=float)
        return float(e @ self.f @ e)

    def f_indefinite(self) -> bool:
        return min_eig(self.f) < -INDEFINITE_TOL and max_eig(self.f) > INDEFINITE_TOL

    def to_dict(self) -> dict:
        return {
            "P": self.p.tolist(),
            "F": self.f.tolist(),
            "Q": self.q.tolist(),
            "A_R": self.a_r.tolist(),
            "lambda_f": self.lambda_f,
            "lambda_j": self.lambda_j,
            "tau_j": self.tau_j,
            "tau_w": self.tau_w,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ResetCertificate":
        """Inverse of :meth:`to_dict`. ``Q`` may be omitted when ``A_R`` is given."""
        p = as_matrix(doc["P"], "P")
        a_r = doc.get("A_R")
        if "Q" in doc and doc["Q"] is not None:
            q = as_matrix(doc["Q"], "Q")
        elif a_r is not None:
            q = p @ as_matrix(a_r, "A_R")
        else:
            raise KeyError("certificate needs Q or A_R")
        return cls(
            p=p,
            f=doc["F"],
            q=q,
            a_r=a_r,
            lambda_f=float(doc["lambda_f"]),
            lambda_j=float(doc["lambda_j"]),
            tau_j=float(doc["tau_j"]),
            tau_w=None if doc.get("tau_w") is None else float(doc["tau_w"]),
            epsilon=float(doc.get("epsilon", 0.01)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ResetCertificate":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LmiReport:
    margin_flow: float
    margin_jump: float
    margin_p: float
    feasible: bool
    tol: float = 0.0


def _check_dims(m: np.ndarray, n_mat: np.ndarray, cert: ResetCertificate) -> None:
    n = cert.n
    if m.shape != (n, n) or n_mat.shape != (n, n):
        raise DimensionMismatch(
            f"M{m.shape} and N{n_mat.shape} must match the {n}x{n} certificate"
        )


def flow_matrix(n_mat, p, f, lambda_f: float) -> np.ndarray:
    return n_mat.T @ p + p @ n_mat + lambda_f * p + TAU_F * f


def jump_block(m, p, f, q, lambda_j: float, tau_j: float) -> np.ndarray:
    x = q - q @ m + p @ m
    return np.block([[lambda_j * p + tau_j * f, x.T], [x, p]])


def validate_certificate(m, n_mat, cert: ResetCertificate, tol: float = 1e-6) -> LmiReport:
    """Eigenvalue margins of the three inequalities; positive means satisfied."""
    m = as_matrix(m, "M")
    n_mat = as_matrix(n_mat, "N")
    _check_dims(m, n_mat, cert)
    if cert.tau_f != TAU_F:
        raise ValueError("certificates are normalized to tau_f = 1")
    flow = flow_matrix(n_mat, cert.p, cert.f, cert.lambda_f)
    margin_flow = -max_eig(0.5 * (flow + flow.T))
    blk = jump_block(m, cert.p, cert.f, cert.q, cert.lambda_j, cert.tau_j)
    margin_jump = min_eig(0.5 * (blk + blk.T))
    margin_p = min_eig(0.5 * (cert.p + cert.p.T))
    feasible = margin_flow > -tol and margin_jump >= -tol and margin_p > tol
    return LmiReport(margin_flow, margin_jump, margin_p, feasible, tol)


def derive_reset_maps(m, cert: ResetCertificate) -> tuple[np.ndarray, np.ndarray]:
    """``A_R = P^{-1} Q`` and the error jump ``H = A_R - A_R M + M``."""
    m = as_matrix(m, "M")
    a_r = solve_linear(cert.p, cert.q)
    return a_r, jump_matrix(a_r, m)


def jump_matrix(a_r, m) -> np.ndarray:
    return a_r - a_r @ m + m


def check_wellposedness(h, f) -> Optional[float]:
    """Smallest grid ``tau_w`` with ``H^T F H + tau_w F`` positive definite, else None."""
    h = as_matrix(h, "H")
    f = as_matrix(f, "F")
    if h.shape != f.shape or h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"H{h.shape} and F{f.shape} must be equal square shapes")
    hfh = h.T @ f @ h
    for tau_w in TAU_W_GRID:
        s = hfh + tau_w * f
        if min_eig(0.5 * (s + s.T)) > WELLPOSED_MIN_EIG:
            return tau_w
    return None


# --------------------------------------------------------------------------
# Synthesis by alternating projections
# --------------------------------------------------------------------------


def _sym_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        for j in range(i, n):
            b = np.zeros((n, n))
            b[i, j] = b[j, i] = 1.0
            basis.append(b)
    return basis


def _full_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        for j in range(n):
            b = np.zeros((n, n))
            b[i, j] = 1.0
            basis.append(b)
    return basis


def _psd_project(s: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (s + s.T))
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


@dataclass
class _AffineLift:
    """Affine map from decision vector (P, F, Q) to the three constraint matrices."""

    n: int
    m: np.ndarray
    n_mat: np.ndarray
    lambda_f: float
    lambda_j: float
    tau_j: float
    delta: float
    sym: list = field(init=False)
    full: list = field(init=False)

    def __post_init__(self):
        self.sym = _sym_basis(self.n)
        self.full = _full_basis(self.n)

    @property
    def dim(self) -> int:
        return 2 * len(self.sym) + len(self.full)

    def unpack(self, theta: np.ndarray):
        ns = len(self.sym)
        p = sum(c * b for c, b in zip(theta[:ns], self.sym))
        f = sum(c * b for c, b in zip(theta[ns : 2 * ns], self.sym))
        q = theta[2 * ns :].reshape(self.n, self.n)
        return p, f, q

    def linear(self, p, f, q) -> np.ndarray:
        """Homogeneous part: constraint matrices without the -delta*I offsets, flattened."""
        s1 = -flow_matrix(self.n_mat, p, f, self.lambda_f)
        s2 = jump_block(self.m, p, f, q, self.lambda_j, self.tau_j)
        return np.concatenate([s1.ravel(), s2.ravel(), p.ravel()])

    def offset(self) -> np.ndarray:
        eye = np.eye(self.n) * self.delta
        return np.concatenate([-eye.ravel(), np.zeros(4 * self.n * self.n), -eye.ravel()])

    def operator(self) -> np.ndarray:
        zero = np.zeros((self.n, self.n))
        cols = []
        for b in self.sym:
            cols.append(self.linear(b, zero, zero))
        for b in self.sym:
            cols.append(self.linear(zero, b, zero))
        for b in self.full:
            cols.append(self.linear(zero, zero, b))
        return np.column_stack(cols)

    def split(self, flat: np.ndarray):
        n = self.n
        a, b = n * n, n * n + 4 * n * n
        return flat[:a].reshape(n, n), flat[a:b].reshape(2 * n, 2 * n), flat[b:].reshape(n, n)


def synthesize_certificate(
    m,
    n_mat,
    lambda_f: float,
    lambda_j: float,
    tau_j: float,
    *,
    delta: float = STRICT_MARGIN,
    max_iter: int = MAX_ITERATIONS,
    tol: float = RESIDUAL_TOL,
    epsilon: float = 0.01,
) -> ResetCertificate:
    """Find ``(P, F, Q)`` for fixed scalars or raise :class:`Infeasible`.

    Alternates between the affine image of the decision variables (with
    ``trace(P) = n`` imposed) and the product of PSD cones. The verdict
    ``Infeasible`` is heuristic; any returned certificate is re-validated.
    """
    m = as_matrix(m, "M")
    n_mat = as_matrix(n_mat, "N")
    n = m.shape[0]
    if m.shape != (n, n) or n_mat.shape != (n, n):
        raise DimensionMismatch("M and N must be square of equal size")
    if not lambda_f > 0 or not 0 < lambda_j <= 1 or not tau_j > 0:
        raise ValueError("need lambda_f > 0, 0 < lambda_j <= 1, tau_j > 0")
    if n < 2:
        # An indefinite F needs at least two dimensions.
        raise Infeasible("no sector exists for n = 1", residual=math.inf)

    lift = _AffineLift(n, m, n_mat, lambda_f, lambda_j, tau_j, delta)
    op = lift.operator()
    off = lift.offset()
    ns = len(lift.sym)

    # trace(P) = n as a linear constraint on theta, removed by null-space parametrization.
    trace_row = np.zeros(lift.dim)
    for idx, b in enumerate(lift.sym):
        trace_row[idx] = np.trace(b)
    theta_p = trace_row * (n / float(trace_row @ trace_row))
    _, _, vt = np.linalg.svd(trace_row.reshape(1, -1))
    null = vt[1:].T
    reduced = op @ null
    reduced_pinv = np.linalg.pinv(reduced)
    base = op @ theta_p + off

    p0 = np.eye(n)
    f0 = np.zeros((n, n))
    f0[0, 1] = f0[1, 0] = delta
    theta = np.concatenate([_svec(p0, lift.sym), _svec(f0, lift.sym), np.zeros(n * n)])
    s = op @ theta + off

    residual = math.inf
    for it in range(1, max_iter + 1):
        blocks = lift.split(s)
        proj = [_psd_project(b) for b in blocks]
        target = np.concatenate([b.ravel() for b in proj])
        residual = float(np.linalg.norm(s - target))
        if residual <= tol:
            break
        phi = reduced_pinv @ (target - base)
        theta = theta_p + null @ phi
        s = op @ theta + off
    else:
        raise Infeasible(
            f"no certificate after {max_iter} iterations (residual {residual:.2e})",
            residual=residual,
            no_convergence=True,
        )

    p, f, q = lift.unpack(theta)
    cert = ResetCertificate(
        p=p, f=f, q=q, lambda_f=lambda_f, lambda_j=lambda_j, tau_j=tau_j, epsilon=epsilon
    )
    cert.attach(m)
    report = validate_certificate(m, n_mat, cert, tol=SYNTH_VALIDATE_TOL)
    if not report.feasible:
        raise Infeasible(f"converged point fails validation: {report}", residual=residual)
    if not cert.f_indefinite():
        raise Infeasible("F is not indefinite, so it does not define a sector", residual=residual)
    cert.tau_w = check_wellposedness(cert.h, cert.f)
    cert.synthesis = SynthesisInfo(iterations=it, residual=residual)
    return cert


def _svec(mat: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    # Coordinates in the symmetric basis: read the upper triangle.
    n = mat.shape[0]
    return np.array([mat[i, j] for i in range(n) for j in range(i, n)])
