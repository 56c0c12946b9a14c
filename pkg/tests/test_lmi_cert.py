import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reset_uio import reference
from reset_uio.errors import DimensionMismatch, Infeasible
from reset_uio.lmi_cert import (
    TAU_W_GRID,
    ResetCertificate,
    check_wellposedness,
    derive_reset_maps,
    jump_block,
    synthesize_certificate,
    validate_certificate,
)
from reset_uio.matrix_core import max_eig, min_eig

from conftest import random_certificate

seeds = st.integers(0, 2**32 - 1)


def scalar_cert(**kw):
    args = dict(p=[[1.0]], f=[[-0.5]], q=[[0.0]], lambda_f=1.0, lambda_j=0.6, tau_j=1.0)
    args.update(kw)
    return ResetCertificate(**args)


class TestCertificateType:
    def test_reference_a_r_and_h(self, cert, cuio):
        np.testing.assert_allclose(cert.a_r, reference.CERT_A_R, atol=1e-12)
        expected_h = [[-0.0009, 0, 0.0009], [0.1295, 1.0, 0.5441], [-0.0031, 0, 0.0012]]
        np.testing.assert_allclose(cert.h, expected_h, atol=1e-4)
        a_r, h = derive_reset_maps(cuio.m, cert)
        np.testing.assert_allclose(a_r, cert.a_r, atol=1e-9)
        np.testing.assert_allclose(h, a_r - a_r @ cuio.m + cuio.m, atol=1e-12)

    def test_a_r_defaults_to_p_inverse_q(self):
        p = np.diag([2.0, 4.0])
        q = np.array([[2.0, 0.0], [4.0, 8.0]])
        c = ResetCertificate(p=p, f=np.diag([1.0, -1.0]), q=q, lambda_f=1, lambda_j=0.5, tau_j=1)
        np.testing.assert_allclose(c.a_r, [[1.0, 0.0], [1.0, 2.0]])

    def test_reset_maps_identity_and_zero(self):
        m = np.array([[0.0, 1.0], [0.0, 2.0]])
        p = np.eye(2)
        ident = ResetCertificate(p=p, f=np.diag([1.0, -1.0]), q=np.eye(2), lambda_f=1, lambda_j=1, tau_j=1)
        np.testing.assert_allclose(derive_reset_maps(m, ident)[1], np.eye(2), atol=1e-15)
        zero = ResetCertificate(p=p, f=np.diag([1.0, -1.0]), q=np.zeros((2, 2)), lambda_f=1, lambda_j=1, tau_j=1)
        np.testing.assert_allclose(derive_reset_maps(m, zero)[1], m)

    def test_f_indefinite(self, cert):
        assert cert.f_indefinite()
        vals = np.linalg.eigvalsh(np.array(reference.CERT_F))
        assert vals[0] < 0 < vals[-1]

    def test_json_round_trip(self, cert, tmp_path):
        cert.save(tmp_path / "c.json")
        back = ResetCertificate.load(tmp_path / "c.json")
        assert set(json.loads((tmp_path / "c.json").read_text())) == {
            "P", "F", "Q", "A_R", "lambda_f", "lambda_j", "tau_j", "tau_w", "epsilon"}
        for name in ("p", "f", "q", "a_r"):
            np.testing.assert_array_equal(getattr(back, name), getattr(cert, name))
        assert (back.lambda_f, back.lambda_j, back.tau_j, back.epsilon) == (
            cert.lambda_f, cert.lambda_j, cert.tau_j, cert.epsilon)

    def test_round_trip_random_values(self, tmp_path):
        rng = np.random.default_rng(3)
        p = rng.normal(size=(3, 3))
        c = ResetCertificate(p=p @ p.T + np.eye(3), f=np.diag([1.0, -1.0, 0.3]),
                             q=rng.normal(size=(3, 3)), lambda_f=0.1 + 1e-17, lambda_j=0.3, tau_j=1 / 3)
        c.save(tmp_path / "r.json")
        back = ResetCertificate.load(tmp_path / "r.json")
        np.testing.assert_array_equal(back.q, c.q)
        assert back.tau_j == c.tau_j


class TestValidate:
    def test_reference_certificate(self, cert, cuio):
        rep = validate_certificate(cuio.m, cuio.n_mat, cert, tol=1e-2)
        assert rep.feasible
        assert rep.margin_flow > 0 and rep.margin_jump > 0 and rep.margin_p > 0

    def test_scalar_margins(self):
        rep = validate_certificate([[0.0]], [[-1.0]], scalar_cert(), tol=1e-9)
        assert rep.margin_flow == pytest.approx(1.5)
        assert rep.margin_jump == pytest.approx(0.1)
        assert rep.margin_p == pytest.approx(1.0)
        assert rep.feasible

    def test_scalar_infeasible(self):
        rep = validate_certificate([[0.0]], [[-1.0]], scalar_cert(f=[[2.0]]), tol=1e-9)
        assert not rep.feasible and rep.margin_flow < 0

    def test_dimension_mismatch(self, cert):
        with pytest.raises(DimensionMismatch):
            validate_certificate(np.eye(2), np.eye(2), cert)

    @pytest.mark.parametrize("alpha", [1e-3, 0.5, 7.0, 1e3])
    def test_homogeneity(self, cert, cuio, alpha):
        base = validate_certificate(cuio.m, cuio.n_mat, cert, tol=1e-2)
        scaled = ResetCertificate(p=alpha * cert.p, f=alpha * cert.f, q=alpha * cert.q,
                                  lambda_f=cert.lambda_f, lambda_j=cert.lambda_j, tau_j=cert.tau_j)
        rep = validate_certificate(cuio.m, cuio.n_mat, scaled, tol=1e-2 * alpha)
        assert rep.feasible
        assert rep.margin_flow == pytest.approx(alpha * base.margin_flow, rel=1e-9)
        np.testing.assert_allclose(scaled.a_r, cert.a_r, atol=1e-9)


class TestSchurEquivalence:
    @settings(max_examples=100, deadline=None)
    @given(seeds, st.integers(1, 5))
    def test_block_and_quadratic_forms_agree(self, seed, n):
        m, h, c = random_certificate(np.random.default_rng(seed), n)
        blk = jump_block(m, c.p, c.f, c.q, c.lambda_j, c.tau_j)
        block_ok = min_eig(0.5 * (blk + blk.T)) >= -1e-8
        schur = h.T @ c.p @ h - c.lambda_j * c.p - c.tau_j * c.f
        schur_ok = max_eig(0.5 * (schur + schur.T)) <= 1e-8
        assert block_ok == schur_ok


class TestWellposedness:
    def test_identity_jump(self):
        assert check_wellposedness(np.eye(2), np.diag([1.0, -1.0])) is None

    def test_diagonal_case(self):
        tau = check_wellposedness([[0.0, 2.0], [0.0, 0.0]], np.diag([1.0, -1.0]))
        assert tau is not None and 0 < tau < 4

    def test_grid(self):
        assert len(TAU_W_GRID) == 61
        assert TAU_W_GRID[0] == pytest.approx(1e-3) and TAU_W_GRID[-1] == pytest.approx(1e3)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_returned_value_rechecked(self, seed):
        rng = np.random.default_rng(seed)
        h = rng.normal(size=(3, 3))
        f = rng.normal(size=(3, 3))
        f = f + f.T
        tau = check_wellposedness(h, f)
        if tau is not None:
            s = h.T @ f @ h + tau * f
            assert np.linalg.eigvalsh(0.5 * (s + s.T))[0] > 0


class TestSynthesis:
    def test_reference_point(self, synthesized, cuio):
        rep = validate_certificate(cuio.m, cuio.n_mat, synthesized, tol=1e-6)
        assert rep.feasible
        assert synthesized.f_indefinite()
        assert np.trace(synthesized.p) == pytest.approx(3.0, abs=1e-6)
        assert synthesized.synthesis.residual <= 1e-7

    def test_numpy_eigenvalues_agree(self, synthesized, cuio):
        flow = cuio.n_mat.T @ synthesized.p + synthesized.p @ cuio.n_mat \
            + synthesized.lambda_f * synthesized.p + synthesized.f
        assert np.linalg.eigvalsh(0.5 * (flow + flow.T)).max() < 0
        assert np.linalg.eigvalsh(synthesized.p).min() > 0

    def test_deterministic(self, synthesized, cuio):
        again = synthesize_certificate(cuio.m, cuio.n_mat, *reference.CERT_SCALARS)
        np.testing.assert_array_equal(again.p, synthesized.p)
        np.testing.assert_array_equal(again.q, synthesized.q)

    def test_scalar_contradiction(self):
        with pytest.raises(Infeasible):
            synthesize_certificate([[1.0]], [[-1.0]], 1000.0, 0.5, 1.0)

    def test_large_decay_rate_infeasible(self, cuio):
        with pytest.raises(Infeasible) as info:
            synthesize_certificate(cuio.m, cuio.n_mat, 5.1, 0.5, 1.0, max_iter=300)
        assert info.value.no_convergence

    @pytest.mark.parametrize("bad", [(0.0, 0.5, 1.0), (1.0, 0.0, 1.0), (1.0, 1.5, 1.0), (1.0, 0.5, -1.0)])
    def test_rejects_bad_scalars(self, cuio, bad):
        with pytest.raises(ValueError):
            synthesize_certificate(cuio.m, cuio.n_mat, *bad)

    @pytest.mark.parametrize("point", [(0.1, 0.1, 1.0), (2.1, 0.8, 1.0), (0.1, 0.5, 0.1)])
    def test_other_grid_points(self, cuio, point):
        c = synthesize_certificate(cuio.m, cuio.n_mat, *point)
        assert validate_certificate(cuio.m, cuio.n_mat, c, tol=1e-6).feasible
