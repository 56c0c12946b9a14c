import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reset_uio import reference
from reset_uio.errors import DimensionMismatch, NotStabilizing, RankCondition, RankDeficient
from reset_uio.matrix_core import hurwitz_check
from reset_uio.uio_design import PlantModel, assemble_cuio, compute_decoupling_gain

from conftest import random_admissible

seeds = st.integers(0, 2**32 - 1)


class TestPlantModel:
    def test_dimensions(self, plant):
        assert (plant.n, plant.n_inputs, plant.n_outputs, plant.n_unknown) == (3, 1, 2, 1)

    def test_measured_states(self, plant):
        assert plant.measured_states() == [0, 2]

    def test_d_must_have_full_column_rank(self):
        with pytest.raises(RankDeficient):
            PlantModel(a=np.eye(2), b=np.ones((2, 1)), c=np.eye(2), d=[[1.0, 2.0], [2.0, 4.0]])

    def test_inconsistent_shapes(self):
        with pytest.raises(DimensionMismatch):
            PlantModel(a=np.eye(3), b=np.ones((2, 1)), c=np.eye(3), d=np.ones((3, 1)))


class TestDecouplingGain:
    def test_reference_plant(self, plant):
        e, m = compute_decoupling_gain(plant, reference.Y)
        np.testing.assert_allclose(e, reference.E_PRINTED, atol=1e-12)
        np.testing.assert_allclose(m, reference.M_PRINTED, atol=1e-12)

    def test_unit_disturbance_direction(self):
        e1 = np.eye(3)[:, :1]
        plant = PlantModel(a=np.zeros((3, 3)), b=np.zeros((3, 1)), c=np.eye(3), d=e1)
        e, m = compute_decoupling_gain(plant, np.zeros((3, 3)))
        np.testing.assert_allclose(e, -e1 @ e1.T, atol=1e-15)
        np.testing.assert_allclose(m, np.eye(3) - e1 @ e1.T, atol=1e-15)

    def test_rank_condition(self):
        plant = PlantModel(a=np.zeros((2, 2)), b=np.zeros((2, 1)), c=[[1.0, 0.0]], d=[[0.0], [1.0]])
        with pytest.raises(RankCondition):
            compute_decoupling_gain(plant)

    def test_default_y_is_ones(self, plant):
        np.testing.assert_array_equal(compute_decoupling_gain(plant)[0], compute_decoupling_gain(plant, reference.Y)[0])

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_md_vanishes_for_any_y(self, seed):
        rng = np.random.default_rng(seed)
        plant, _ = random_admissible(rng)
        for _ in range(2):
            y = rng.normal(size=(plant.n, plant.n_outputs))
            e, m = compute_decoupling_gain(plant, y)
            np.testing.assert_array_equal(m, np.eye(plant.n) + e @ plant.c)
            assert np.abs(m @ plant.d).max() <= 1e-9


class TestAssembleCuio:
    def test_reference_matrices(self, cuio):
        np.testing.assert_allclose(cuio.n_mat, reference.N_PRINTED, atol=1e-3)
        np.testing.assert_allclose(cuio.g, reference.G_PRINTED, atol=1e-3)
        np.testing.assert_allclose(cuio.l, reference.L_PRINTED, atol=1e-3)
        # Exact value of the rounded L[3][2] entry.
        assert cuio.l[2, 1] == pytest.approx(6.3298, abs=1e-4)

    def test_not_stabilizing(self, plant):
        with pytest.raises(NotStabilizing):
            assemble_cuio(plant, np.zeros((3, 2)), reference.Y)

    def test_bad_gain_shape(self, plant):
        with pytest.raises(DimensionMismatch):
            assemble_cuio(plant, np.zeros((2, 3)), reference.Y)

    def test_to_dict_keys(self, cuio):
        assert set(cuio.to_dict()) == {"N", "G", "L", "E", "M", "K", "Y"}

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_reconstruction_identities(self, seed):
        plant, c = random_admissible(np.random.default_rng(seed))
        a, b, cc = plant.a, plant.b, plant.c
        eye_p = np.eye(plant.n_outputs)
        np.testing.assert_allclose(c.m, np.eye(plant.n) + c.e @ cc, atol=1e-12)
        np.testing.assert_allclose(c.n_mat, c.m @ a - c.k @ cc, atol=1e-9)
        np.testing.assert_allclose(c.g, c.m @ b, atol=1e-9)
        np.testing.assert_allclose(c.l, c.k @ (eye_p + cc @ c.e) - c.m @ a @ c.e, atol=1e-9)
        assert hurwitz_check(c.n_mat)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_error_dynamics_are_autonomous(self, seed):
        rng = np.random.default_rng(seed)
        plant, c = random_admissible(rng)
        x = rng.normal(size=plant.n)
        z = rng.normal(size=plant.n)
        u = rng.normal(size=plant.n_inputs)
        v = rng.normal(size=plant.n_unknown)
        y = plant.c @ x
        xdot = plant.a @ x + plant.b @ u + plant.d @ v
        zdot = c.n_mat @ z + c.g @ u + c.l @ y
        xhat = z - c.e @ y
        xhat_dot = zdot - c.e @ plant.c @ xdot
        err = xhat - x
        scale = 1 + np.abs(c.n_mat).max() * np.abs(err).max()
        assert np.abs((xhat_dot - xdot) - c.n_mat @ err).max() <= 1e-8 * scale
