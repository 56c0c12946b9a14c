"""Benchmark data: the third-order plant with one unmeasured state, its observer
gain and published reset certificate, and the planar system used to show how a
badly timed reset destabilizes an otherwise stable error flow."""
from __future__ import annotations

import numpy as np

from .lmi_cert import ResetCertificate
from .uio_design import CuioParams, PlantModel, assemble_cuio

A = [[-1.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, -1.0]]
B = [[0.0], [0.0], [1.0]]
C = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
D = [[-1.0], [0.0], [0.0]]
# LQR gain with identity weights, as printed (4 decimals).
K = [[1.2926, 0.3638], [-0.7654, -1.0076], [0.3638, 0.9830]]
Y = [[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]

# Observer matrices as printed, used only as test expectations.
E_PRINTED = [[-1.0, 1.0], [0.0, 1.0], [0.0, 1.0]]
M_PRINTED = [[0.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 2.0]]
N_PRINTED = [[-1.2926, -1.0, -1.3638], [-0.2346, -1.0, 0.0076], [-0.3638, -2.0, -2.9830]]
G_PRINTED = [[1.0], [1.0], [2.0]]
L_PRINTED = [[0.0, 4.0202], [-1.0, 0.2194], [0.0, 6.3297]]

# Certificate at (lambda_f, lambda_j, tau_j) = (1.1, 0.8, 1).
CERT_F = [[-0.4090, 0.2892, 0.4246], [0.2892, 0.7555, 0.7758], [0.4246, 0.7758, 0.9560]]
CERT_P = [[1.1029, -0.1262, -0.3658], [-0.1262, 1.1057, 0.1314], [-0.3658, 0.1314, 0.6295]]
CERT_A_R = [[-0.0009, 1.0000, 0.0000], [0.1295, 0.3264, 0.0000], [-0.0031, 2.0019, 0.0000]]
CERT_SCALARS = (1.1, 0.8, 1.0)

# Comparison scenario: x1 = -5, x3 = 10, x2 unknown in [-5, 5], observer at zero.
COMPARE_X0 = [-5.0, -5.0, 10.0]
COMPARE_BOUNDS = [None, [-5.0, 5.0], None]
CUIO_L2_PUBLISHED = 8.1944

# Planar destabilization example.
DEMO_N = [[-0.1, 1.0], [-1.0, -0.1]]
DEMO_H = [[0.0, 0.4], [-2.0, 0.0]]
DEMO_F = [[0.0, 1.0], [1.0, 0.0]]
DEMO_P = [[1.3296, 0.0], [0.0, 0.2924]]
DEMO_E0 = [-15.0, 10.0]


def example_plant() -> PlantModel:
    return PlantModel(a=A, b=B, c=C, d=D)


def example_cuio() -> CuioParams:
    return assemble_cuio(example_plant(), K, Y)


def example_certificate(epsilon: float = 0.01) -> ResetCertificate:
    p = np.array(CERT_P)
    a_r = np.array(CERT_A_R)
    lf, lj, tj = CERT_SCALARS
    cert = ResetCertificate(
        p=p, f=CERT_F, q=p @ a_r, a_r=a_r, lambda_f=lf, lambda_j=lj, tau_j=tj, epsilon=epsilon
    )
    return cert.attach(example_cuio().m)


def demo_system():
    """Embed the planar example as a degenerate observer problem.

    With ``C = I`` and ``E = -I`` we get ``M = 0``, so the observer state is
    the error itself, ``N = -K`` and the error jump ``H`` equals ``A_R``. The
    example's jump region is ``e^T F e >= 0``, hence the certificate stores
    ``-F`` to fit the ``<= 0`` convention used everywhere else.
    """
    n_mat = np.array(DEMO_N)
    plant = PlantModel(a=np.zeros((2, 2)), b=np.zeros((2, 1)), c=np.eye(2), d=[[1.0], [0.0]])
    cuio = assemble_cuio(plant, -n_mat, -np.eye(2))
    p = np.array(DEMO_P)
    h = np.array(DEMO_H)
    cert = ResetCertificate(
        p=p, f=-np.array(DEMO_F), q=p @ h, a_r=h, lambda_f=0.1, lambda_j=1.0, tau_j=1.0
    )
    return plant, cuio, cert.attach(cuio.m)
