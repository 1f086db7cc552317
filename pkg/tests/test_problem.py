import numpy as np
import pytest

from lowrank_lab import (
    InitSpec,
    assemble_full_sigma,
    gd_step_full,
    init_factors,
    make_instance,
    reduce_to_diagonal,
    theory_epsilon,
    theory_eta,
    verify_init_bounds,
)
from lowrank_lab.errors import RankDeficiencyError, ValidationError
from lowrank_lab.problem import DEFAULT_C


class TestMakeInstance:
    def test_rank1_diagonal(self):
        inst = make_instance(2, 2, 1, [3.0])
        np.testing.assert_array_equal(assemble_full_sigma(inst),
                                      [[3.0, 0.0], [0.0, 0.0]])

    def test_identity_case(self):
        inst = make_instance(3, 3, 3, [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(assemble_full_sigma(inst), np.eye(3))

    def test_seeded_unitaries_recover_singular_values(self):
        inst = make_instance(4, 3, 2, [2.0, 1.0], unitary_seed=7)
        full = assemble_full_sigma(inst)
        sv = np.linalg.svd(full, compute_uv=False)
        np.testing.assert_allclose(sv[:2], [2.0, 1.0], atol=1e-10)
        assert np.all(sv[2:] < 1e-12)

    def test_validation_errors(self):
        with pytest.raises(ValidationError):
            make_instance(3, 3, 2, [1.0, -0.5])
        with pytest.raises(ValidationError):
            make_instance(3, 3, 2, [1.0, 2.0])
        with pytest.raises(ValidationError):
            make_instance(3, 3, 4, [1.0, 1.0, 1.0, 1.0])
        with pytest.raises(ValidationError):
            make_instance(3, 3, 2, [1.0, 0.0])

    def test_unitary_orthonormality(self):
        inst = make_instance(5, 4, 2, [2.0, 1.0], unitary_seed=11)
        np.testing.assert_allclose(inst.phi.T @ inst.phi, np.eye(5),
                                   atol=1e-12)
        np.testing.assert_allclose(inst.psi.T @ inst.psi, np.eye(4),
                                   atol=1e-12)

    def test_kappa(self):
        inst = make_instance(4, 4, 2, [10.0, 2.0])
        assert inst.kappa == 5.0


class TestAssembleFullSigma:
    def test_diagonal_square(self):
        inst = make_instance(2, 2, 2, [2.0, 1.0])
        np.testing.assert_array_equal(assemble_full_sigma(inst),
                                      [[2.0, 0.0], [0.0, 1.0]])

    def test_tall_rank1(self):
        inst = make_instance(2, 1, 1, [5.0])
        np.testing.assert_array_equal(assemble_full_sigma(inst),
                                      [[5.0], [0.0]])

    def test_frobenius_norm_preserved_under_unitaries(self):
        inst = make_instance(6, 5, 3, [3.0, 2.0, 1.0], unitary_seed=2)
        full = assemble_full_sigma(inst)
        np.testing.assert_allclose(np.linalg.norm(full),
                                   np.sqrt(9.0 + 4.0 + 1.0), rtol=1e-12)


class TestReduceToDiagonal:
    def test_already_diagonal_passthrough(self):
        inst = make_instance(4, 3, 2, [2.0, 1.0])
        full = assemble_full_sigma(inst)
        rng = np.random.default_rng(0)
        U0 = rng.standard_normal((4, 2))
        V0 = rng.standard_normal((3, 2))
        red, U0p, V0p = reduce_to_diagonal(full, U0, V0)
        np.testing.assert_array_equal(red.singular_values, [2.0, 1.0])
        np.testing.assert_array_equal(U0p, U0)
        np.testing.assert_array_equal(V0p, V0)

    def test_one_by_one(self):
        red, U0p, _ = reduce_to_diagonal(np.array([[4.0]]),
                                         np.array([[0.3]]),
                                         np.array([[-0.2]]))
        assert red.d == 1 and red.singular_values[0] == 4.0
        np.testing.assert_array_equal(U0p, [[0.3]])

    def test_step_commutes_with_reduction(self):
        # One GD step taken in the original frame then reduced must match a
        # step taken in the reduced frame.
        theta = 0.7
        R = np.array([[np.cos(theta), -np.sin(theta)],
                      [np.sin(theta), np.cos(theta)]])
        sigma_full = R @ np.diag([2.0, 1.0]) @ R.T
        rng = np.random.default_rng(5)
        U0 = rng.standard_normal((2, 2))
        V0 = rng.standard_normal((2, 2))
        red, U0p, V0p = reduce_to_diagonal(sigma_full, U0, V0)
        np.testing.assert_allclose(red.singular_values, [2.0, 1.0],
                                   rtol=1e-12)
        eta = 0.05
        U1, V1 = gd_step_full(U0, V0, sigma_full, eta)
        _, U1_mapped, V1_mapped = reduce_to_diagonal(sigma_full, U1, V1)
        U1p, V1p = gd_step_full(U0p, V0p, assemble_full_sigma(red), eta)
        assert np.linalg.norm(U1_mapped - U1p, 2) <= 1e-12
        assert np.linalg.norm(V1_mapped - V1p, 2) <= 1e-12

    def test_roundtrip_recovers_singular_values(self):
        inst = make_instance(6, 5, 3, [4.0, 2.0, 0.5], unitary_seed=9)
        full = assemble_full_sigma(inst)
        rng = np.random.default_rng(1)
        red, _, _ = reduce_to_diagonal(full, rng.standard_normal((6, 3)),
                                       rng.standard_normal((5, 3)))
        np.testing.assert_allclose(red.singular_values, [4.0, 2.0, 0.5],
                                   rtol=1e-10)

    def test_rank_errors(self):
        full = np.diag([2.0, 0.0])
        rng = np.random.default_rng(2)
        with pytest.raises(RankDeficiencyError):
            reduce_to_diagonal(full, rng.standard_normal((2, 2)),
                               rng.standard_normal((2, 2)))
        with pytest.raises(ValidationError):
            reduce_to_diagonal(np.diag([2.0, 1.0]),
                               rng.standard_normal((2, 1)),
                               rng.standard_normal((2, 1)))


class TestInitFactors:
    def test_zero_epsilon(self):
        U0, V0 = init_factors(4, 3, 2, InitSpec(epsilon=0.0, seed=1))
        assert not U0.any() and not V0.any()

    def test_deterministic(self):
        spec = InitSpec(epsilon=0.01, seed=42)
        U0, V0 = init_factors(5, 4, 2, spec)
        U1, V1 = init_factors(5, 4, 2, spec)
        np.testing.assert_array_equal(U0, U1)
        np.testing.assert_array_equal(V0, V1)

    def test_sample_std_matches_epsilon(self):
        # >= 1e4 entries pooled across seeds.
        entries = []
        for seed in range(25):
            U0, V0 = init_factors(50, 50, 5, InitSpec(epsilon=0.01, seed=seed))
            entries += [U0.ravel(), V0.ravel()]
        pooled = np.concatenate(entries)
        assert pooled.size >= 10_000
        assert abs(pooled.std() - 0.01) <= 0.002

    def test_invalid_spec(self):
        with pytest.raises(ValidationError):
            InitSpec(epsilon=-1.0, seed=0)
        with pytest.raises(ValidationError):
            InitSpec(epsilon=0.1, seed=0, c=0.5)


class TestTheoryScales:
    def test_unit_case(self):
        inst = make_instance(1, 1, 1, [1.0])
        assert theory_epsilon(inst, k_eps=1.0) == 0.5

    def test_homogeneity_in_singular_values(self):
        base = make_instance(8, 6, 2, [2.0, 1.0])
        scaled = make_instance(8, 6, 2, [8.0, 4.0])
        np.testing.assert_allclose(theory_epsilon(scaled),
                                   2.0 * theory_epsilon(base), rtol=1e-12)

    def test_dimension_dependence(self):
        small = make_instance(5, 5, 2, [2.0, 1.0])
        big = make_instance(10, 10, 2, [2.0, 1.0])
        np.testing.assert_allclose(theory_epsilon(big),
                                   0.5 * theory_epsilon(small), rtol=1e-12)

    def test_eta_formula(self):
        inst = make_instance(4, 4, 2, [2.0, 1.0])
        eps = 0.01
        assert theory_eta(inst, eps) == pytest.approx(
            1.0 * eps ** 2 / (2 * 8.0), rel=1e-12)
        assert theory_eta(inst, eps, k_eta=400) == pytest.approx(
            400 * eps ** 2 / 16.0, rel=1e-12)


class TestVerifyInitBounds:
    def test_identity_factors(self):
        eps = 0.3
        for d, c in ((1, 1.0), (3, 3.0)):
            U0 = V0 = eps * np.eye(d)
            rep = verify_init_bounds(U0, V0, eps, c=c)
            assert rep["B_fro"].holds and rep["B_fro"].measured == 0.0
            assert rep["sigma_d_A_lower"].holds

    def test_zero_epsilon_flagged(self):
        U0, V0 = init_factors(5, 4, 2, InitSpec(epsilon=0.0, seed=0))
        rep = verify_init_bounds(U0, V0, 0.0, c=3.0)
        assert not rep["sigma_d_A_lower"].holds
        assert rep["sigma_1_A_upper"].holds
        assert not rep.all_hold

    @pytest.mark.parametrize("m,n,d", [(50, 50, 5), (20, 20, 3)])
    def test_monte_carlo_pass_rate(self, m, n, d):
        # Default c is calibrated so the five bounds hold on >= 99/100 draws.
        eps = 0.01
        passes = 0
        for seed in range(100):
            U0, V0 = init_factors(m, n, d, InitSpec(epsilon=eps, seed=seed))
            passes += verify_init_bounds(U0, V0, eps, c=DEFAULT_C).all_hold
        assert passes >= 99


def test_instance_immutable_and_pure():
    inst = make_instance(4, 4, 2, [2.0, 1.0], unitary_seed=3)
    again = make_instance(4, 4, 2, [2.0, 1.0], unitary_seed=3)
    np.testing.assert_array_equal(inst.phi, again.phi)
    np.testing.assert_array_equal(assemble_full_sigma(inst),
                                  assemble_full_sigma(again))
