import numpy as np
import pytest
from scipy.linalg import solve_continuous_are

from reset_uio import reference
from reset_uio.lmi_cert import ResetCertificate
from reset_uio.errors import NotStabilizing, RankCondition
from reset_uio.uio_design import PlantModel, assemble_cuio, compute_decoupling_gain


def random_admissible(rng, n=None, m=None, p=None, stable=False):
    """Random plant with rank(CD) = rank(D) and a stabilizing K from a dual Riccati solve.

    ``stable`` shifts A so the plant itself decays, keeping long runs finite.
    """
    while True:
        n_ = n or int(rng.integers(2, 6))
        m_ = m or int(rng.integers(1, n_))
        p_ = p or int(rng.integers(m_, n_ + 1))
        a = rng.normal(size=(n_, n_))
        if stable:
            a -= max(np.linalg.eigvals(a).real.max() + 0.2, 0.0) * np.eye(n_)
        b = rng.normal(size=(n_, 1))
        c = rng.normal(size=(p_, n_))
        d = rng.normal(size=(n_, m_))
        y = rng.normal(size=(n_, p_))
        try:
            plant = PlantModel(a=a, b=b, c=c, d=d)
            _, mm = compute_decoupling_gain(plant, y)
            x = solve_continuous_are((mm @ a).T, c.T, np.eye(n_), np.eye(p_))
            k = x @ c.T
            return plant, assemble_cuio(plant, k, y)
        except (RankCondition, NotStabilizing, np.linalg.LinAlgError, ValueError):
            continue


@pytest.fixture(scope="session")
def plant():
    return reference.example_plant()


@pytest.fixture(scope="session")
def cuio():
    return reference.example_cuio()


@pytest.fixture
def cert():
    return reference.example_certificate()


@pytest.fixture(scope="session")
def synthesized():
    from reset_uio.lmi_cert import synthesize_certificate

    c = reference.example_cuio()
    return synthesize_certificate(c.m, c.n_mat, *reference.CERT_SCALARS)


def random_certificate(rng, n):
    """Random (P, F, Q) with P > 0 whose Schur form is pushed to either side of zero."""
    g = rng.normal(size=(n, n))
    p = g @ g.T + 0.1 * np.eye(n)
    h = rng.normal(size=(n, n))
    lambda_j = float(rng.uniform(0.05, 1.0))
    tau_j = float(rng.uniform(0.1, 5.0))
    r = rng.normal(size=(n, n))
    sign = rng.choice([-1.0, 1.0])
    shift = sign * (r @ r.T + 0.05 * np.eye(n))
    f = (h.T @ p @ h - lambda_j * p + shift) / tau_j
    m = rng.normal(size=(n, n))
    # Pick Q so that P^{-1} Q - P^{-1} Q M + M = H for this M, when I - M is invertible.
    a_r = (h - m) @ np.linalg.inv(np.eye(n) - m)
    return m, h, ResetCertificate(p=p, f=0.5 * (f + f.T), q=p @ a_r, lambda_f=1.0,
                                  lambda_j=lambda_j, tau_j=tau_j)


def audit_jumps(traj, cert, sprocedure=True):
    """Scheduler soundness violations of a trajectory (empty list when sound)."""
    from reset_uio.hybrid_sim import reset_law_fires, sector_value

    bad = []
    p, f = cert.p, cert.f
    eps = traj.epsilon
    times = traj.reset_times
    for a, b in zip(times, times[1:]):
        if b - a < traj.min_dwell - 1e-12:
            bad.append(f"dwell {b - a} < {traj.min_dwell}")
    for j in traj.jumps:
        pre, post = j.tracked_pre, j.tracked_post
        v_pre = np.einsum("ki,ij,kj->k", pre, p, pre)
        v_post = np.einsum("ki,ij,kj->k", post, p, post)
        q_pre = sector_value(f, pre)
        if j.law != "custom":
            thresh = (1 - eps) * np.array(j.v_latched, dtype=float)
            if np.any(v_pre > thresh + 1e-9):
                bad.append(f"t={j.t}: V(e-) above (1-eps) V_latched")
            if any(tk is None or tk > j.t for tk in j.tau_k):
                bad.append(f"t={j.t}: latch missing or later than the jump")
            if j.law == "ideal":
                if q_pre[0] > 1e-9 * (1 + v_pre[0]):
                    bad.append(f"t={j.t}: true error outside the jump set")
            elif not reset_law_fires(j.law, pre, f, j.t, j.k):
                bad.append(f"t={j.t}: law {j.law} predicate false at the jump")
        inside = q_pre <= 0
        if np.any(v_post[inside] > cert.lambda_j * v_pre[inside] + 1e-6):
            bad.append(f"t={j.t}: V(e+) > lambda_j V(e-) for an in-sector trajectory")
        # S-procedure consequence valid for every trajectory, in the sector or not.
        bound = cert.lambda_j * v_pre + cert.tau_j * q_pre + 1e-6 * (1 + v_pre)
        if sprocedure and np.any(v_post > bound):
            bad.append(f"t={j.t}: jump inequality violated")
    return bad


# One line per acceptance criterion, filled by tests/test_acceptance.py.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
