import numpy as np
import pytest

from lowrank_lab import FactorState, InitSpec, init_factors, make_instance


@pytest.fixture
def desk_instance():
    return make_instance(6, 5, 2, [2.0, 1.0])


def random_state(instance, epsilon, seed, t=0):
    """Gaussian-initialized block state for an instance."""
    U0, V0 = init_factors(instance.m, instance.n, instance.d,
                          InitSpec(epsilon=epsilon, seed=seed))
    return FactorState.from_full(U0, V0, t=t)


def random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def stage1_state(instance, eps, c, e_b, rng):
    """Random block state satisfying the warm-up-phase norm bounds.

    sigma(A) lies in [eps/(c sqrt d), sqrt(2 sigma_1)], ||B||_F <= e_b d eps,
    ||J||_op <= c eps sqrt(max(m-d, d)), ||K||_op likewise.
    """
    d = instance.d
    lo = eps / (c * np.sqrt(d))
    hi = np.sqrt(2 * instance.sigma_1)
    svals = rng.uniform(lo, hi, d)
    A = (random_orthogonal(d, rng) * svals) @ random_orthogonal(d, rng).T
    B = rng.standard_normal((d, d))
    B *= rng.uniform(0.1, 0.9) * e_b * d * eps / np.linalg.norm(B)
    U, V = A + B, A - B
    J = rng.standard_normal((instance.m - d, d))
    if J.size:
        J *= rng.uniform(0.1, 0.9) * c * eps * np.sqrt(
            max(instance.m - d, d)) / np.linalg.norm(J, 2)
    K = rng.standard_normal((instance.n - d, d))
    if K.size:
        K *= rng.uniform(0.1, 0.9) * c * eps * np.sqrt(
            max(instance.n - d, d)) / np.linalg.norm(K, 2)
    return FactorState(U=U, V=V, J=J, K=K, t=0)
