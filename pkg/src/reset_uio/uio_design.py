"""Conventional (full-order) unknown input observer design.

Observer::

    Z' = N Z + G u + L y,    xhat = Z - E y

with ``M = I + E C``, ``M D = 0``, ``N = M A - K C``, ``G = M B`` and
``L = K (I + C E) - M A E``. The gain ``K`` is supplied by the caller and only
checked for making ``N`` Hurwitz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotStabilizing, RankCondition, RankDeficient
from .matrix_core import as_matrix, gram_rank, hurwitz_check, max_abs, pinv_full_column_rank

DECOUPLING_TOL = 1e-9


@dataclass(frozen=True)
class PlantModel:
    """LTI plant ``x' = A x + B u + D v``, ``y = C x`` with unknown input ``v``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_matrix(self.b, "B")
        c = as_matrix(self.c, "C")
        d = as_matrix(self.d, "D")
        n = a.shape[0]
        if a.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {a.shape}")
        if b.shape[0] != n or c.shape[1] != n or d.shape[0] != n:
            raise DimensionMismatch(
                f"inconsistent shapes A{a.shape} B{b.shape} C{c.shape} D{d.shape}"
            )
        if gram_rank(d) != d.shape[1]:
            raise RankDeficient("D must have full column rank")
        for name, val in (("a", a), ("b", b), ("c", c), ("d", d)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]

    @property
    def n_unknown(self) -> int:
        return self.d.shape[1]

    def measured_states(self) -> list[int]:
        """Indices of states read directly by some output row (unit row of C)."""
        out = []
        for row in self.c:
            nz = np.flatnonzero(row)
            if nz.size == 1 and row[nz[0]] == 1.0:
                out.append(int(nz[0]))
        return sorted(set(out))


@dataclass(frozen=True)
class CuioParams:
    n_mat: np.ndarray
    g: np.ndarray
    l: np.ndarray
    e: np.ndarray
    m: np.ndarray
    k: np.ndarray
    y: np.ndarray

    def to_dict(self) -> dict:
        return {
            "N": self.n_mat.tolist(),
            "G": self.g.tolist(),
            "L": self.l.tolist(),
            "E": self.e.tolist(),
            "M": self.m.tolist(),
            "K": self.k.tolist(),
            "Y": self.y.tolist(),
        }


def compute_decoupling_gain(plant: PlantModel, y_free=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(E, M)`` with ``E = -D (CD)^+ + Y (I - CD (CD)^+)`` and ``M = I + E C``.

    ``y_free`` defaults to the all-ones ``n x p`` matrix.
    """
    n, p = plant.n, plant.n_outputs
    y_free = np.ones((n, p)) if y_free is None else as_matrix(y_free, "Y")
    if y_free.shape != (n, p):
        raise DimensionMismatch(f"Y must be {n}x{p}, got {y_free.shape}")

    cd = plant.c @ plant.d
    if gram_rank(cd) != gram_rank(plant.d):
        raise RankCondition("rank(CD) != rank(D); no unknown input observer exists")
    cd_pinv = pinv_full_column_rank(cd)
    e = -plant.d @ cd_pinv + y_free @ (np.eye(p) - cd @ cd_pinv)
    m = np.eye(n) + e @ plant.c
    residual = max_abs(m @ plant.d)
    if residual > DECOUPLING_TOL:
        raise RankCondition(f"decoupling residual |MD| = {residual:.3e} exceeds {DECOUPLING_TOL}")
    return e, m


def assemble_cuio(plant: PlantModel, k, y_free=None) -> CuioParams:
    """Build every C-UIO matrix and verify that ``N = M A - K C`` is Hurwitz."""
    n, p = plant.n, plant.n_outputs
    k = as_matrix(k, "K")
    if k.shape != (n, p):
        raise DimensionMismatch(f"K must be {n}x{p}, got {k.shape}")
    y_free = np.ones((n, p)) if y_free is None else as_matrix(y_free, "Y")
    e, m = compute_decoupling_gain(plant, y_free)

    n_mat = m @ plant.a - k @ plant.c
    verdict = hurwitz_check(n_mat)
    if not verdict:
        why = "marginal spectrum" if verdict.marginal else "unstable spectrum"
        raise NotStabilizing(f"N = MA - KC is not Hurwitz ({why})")
    g = m @ plant.b
    l = k @ (np.eye(p) + plant.c @ e) - m @ plant.a @ e
    return CuioParams(n_mat=n_mat, g=g, l=l, e=e, m=m, k=k, y=y_free)
