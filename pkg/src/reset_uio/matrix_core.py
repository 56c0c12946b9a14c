"""Dense real linear algebra for small matrices (n up to about 20).

Matrices are plain 2-D ``float64`` numpy arrays. The kernels here are written
out explicitly (Gaussian elimination, cyclic Jacobi, Kronecker-form Lyapunov
solve, scaling-and-squaring exponential) so that every certificate check in
the package rests on code whose tolerances are pinned below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoConvergence, RankDeficient, SingularMatrix

# Tolerances. Exposed so tests and callers can refer to the same numbers.
PIVOT_RTOL = 1e-12
JACOBI_RTOL = 1e-12
JACOBI_MAX_SWEEPS = 100
SYMMETRY_RTOL = 1e-9
RANK_RTOL = 1e-9
FULL_RANK_RTOL = 1e-10
HURWITZ_MIN_EIG = 1e-9
EXPM_SCALE_TARGET = 0.5
EXPM_TAYLOR_TERMS = 18


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce ``m`` to a finite 2-D float64 array (vectors become columns)."""
    arr = np.array(m, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _require_square(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")


def max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


@dataclass(frozen=True)
class SymEig:
    """Eigenpairs of a symmetric matrix, values ascending, vectors as columns."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def min(self) -> float:
        return float(self.values[0])

    @property
    def max(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class HurwitzVerdict:
    """Outcome of :func:`hurwitz_check`; truthy iff the matrix is Hurwitz.

    ``marginal`` flags a singular Lyapunov operator, i.e. two eigenvalues
    summing to zero (imaginary-axis or mirrored spectrum).
    """

    hurwitz: bool
    marginal: bool = False
    min_eig: float = float("nan")

    def __bool__(self) -> bool:
        return self.hurwitz


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _require_square(a, "a")
    n = a.shape[0]
    if b.shape[0] != n:
        raise DimensionMismatch(f"b has {b.shape[0]} rows, a has {n}")

    scale = max_abs(a)
    if scale == 0.0:
        raise SingularMatrix("a is the zero matrix")
    threshold = PIVOT_RTOL * scale
    aug = np.hstack([a, b])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < threshold:
            raise SingularMatrix(f"pivot {aug[piv, col]:.3e} below {threshold:.3e} at column {col}")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        factors = aug[col + 1 :, col] / aug[col, col]
        aug[col + 1 :, col:] -= np.outer(factors, aug[col, col:])

    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (aug[row, n:] - aug[row, row + 1 : n] @ x[row + 1 :]) / aug[row, row]
    return x


def sym_eig(s) -> SymEig:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Input is symmetrized first; it must already be symmetric to within
    ``SYMMETRY_RTOL`` relative to its largest entry.
    """
    s = as_matrix(s, "s")
    _require_square(s, "s")
    scale = max_abs(s)
    if max_abs(s - s.T) > SYMMETRY_RTOL * max(scale, 1e-300):
        raise ValueError("sym_eig requires a symmetric matrix")
    # normalize so that squared norms cannot underflow or overflow
    unit = scale if scale > 0 else 1.0
    a = 0.5 * (s + s.T) / unit
    n = a.shape[0]
    v = np.eye(n)
    target = JACOBI_RTOL * np.linalg.norm(a)

    for _ in range(JACOBI_MAX_SWEEPS + 1):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= target:
            order = np.argsort(np.diag(a), kind="stable")
            return SymEig(values=np.diag(a)[order] * unit, vectors=v[:, order].copy())
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e150 * abs(apq):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                sn = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - sn * rq
                a[q, :] = sn * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    raise NoConvergence(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")


def min_eig(s) -> float:
    return sym_eig(s).min


def max_eig(s) -> float:
    return sym_eig(s).max


def gram_rank(m) -> int:
    """Numerical rank from the eigenvalues of ``m.T @ m`` (threshold relative to its trace)."""
    m = as_matrix(m, "m")
    gram = m.T @ m
    tr = float(np.trace(gram))
    vals = sym_eig(gram).values
    return int(np.sum(vals > RANK_RTOL * tr))


def pinv_full_column_rank(m) -> np.ndarray:
    """Left pseudoinverse ``(m^T m)^{-1} m^T`` of a full-column-rank matrix."""
    m = as_matrix(m, "m")
    gram = m.T @ m
    tr = float(np.trace(gram))
    if tr == 0.0 or sym_eig(gram).min <= FULL_RANK_RTOL * tr:
        raise RankDeficient(f"matrix of shape {m.shape} is not of full column rank")
    return solve_linear(gram, m.T)


def lyapunov_solve(n) -> np.ndarray:
    """Solve ``n^T P + P n = -I`` through its Kronecker (vectorized) form."""
    n = as_matrix(n, "n")
    _require_square(n, "n")
    k = n.shape[0]
    eye = np.eye(k)
    # Row-major vec: vec(XY) relations give (N^T kron I + I kron N^T) vec(P).
    op = np.kron(n.T, eye) + np.kron(eye, n.T)
    p = solve_linear(op, -eye.reshape(-1, 1)).reshape(k, k)
    return 0.5 * (p + p.T)


def hurwitz_check(n) -> HurwitzVerdict:
    """Decide whether every eigenvalue of ``n`` has negative real part.

    Uses the Lyapunov criterion: ``n`` is Hurwitz iff ``n^T P + P n = -I``
    has a positive-definite solution.
    """
    try:
        p = lyapunov_solve(n)
    except SingularMatrix:
        return HurwitzVerdict(hurwitz=False, marginal=True)
    lo = min_eig(p)
    return HurwitzVerdict(hurwitz=lo > HURWITZ_MIN_EIG, marginal=False, min_eig=lo)


def mat_exp(n, t: float = 1.0) -> np.ndarray:
    """``exp(n t)`` by scaling and squaring with a truncated Taylor series."""
    n = as_matrix(n, "n")
    _require_square(n, "n")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    x = n * t
    norm = float(np.max(np.sum(np.abs(x), axis=1)))
    squarings = 0
    if norm > EXPM_SCALE_TARGET:
        squarings = int(math.ceil(math.log2(norm / EXPM_SCALE_TARGET)))
        x = x / (2.0**squarings)
    k = x.shape[0]
    result = np.eye(k)
    term = np.eye(k)
    for j in range(1, EXPM_TAYLOR_TERMS + 1):
        term = term @ x / j
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result
