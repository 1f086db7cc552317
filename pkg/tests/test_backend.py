import subprocess
import sys

import numpy as np
import pytest

from lowrank_lab import backend, gd_step_full, regularized_gd_step
from lowrank_lab.backend import available_backends, get_kernel


def _setup(m=7, n=5, d=2, seed=0):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((m, d))
    V = rng.standard_normal((n, d))
    sigma = np.array([2.0, 1.0][:d])
    full = np.zeros((m, n))
    np.fill_diagonal(full[:d, :d], sigma)
    return U, V, sigma, full


def test_python_backend_always_available():
    assert "python" in available_backends()


def test_selected_backend_reported():
    assert backend.BACKEND in ("compiled", "python")


@pytest.mark.parametrize("name", available_backends())
@pytest.mark.parametrize("lam", [0.0, 0.7])
def test_kernel_matches_reference_step(name, lam):
    U, V, sigma, full = _setup()
    kernel = get_kernel(name)
    Uk, Vk = U.copy(), V.copy()
    eta = 0.03
    for _ in range(10):
        kernel(Uk, Vk, sigma, eta, lam, 1)
    Ur, Vr = U.copy(), V.copy()
    for _ in range(10):
        Ur, Vr = regularized_gd_step(Ur, Vr, full, eta, lam) if lam \
            else gd_step_full(Ur, Vr, full, eta)
    assert np.linalg.norm(Uk - Ur, 2) <= 1e-13
    assert np.linalg.norm(Vk - Vr, 2) <= 1e-13


@pytest.mark.skipif("compiled" not in available_backends(),
                    reason="extension not built")
@pytest.mark.parametrize("steps", [1, 2, 7, 64])
def test_backends_agree_over_chunk(steps):
    U, V, sigma, _ = _setup(seed=3)
    Uc, Vc = U.copy(), V.copy()
    Up, Vp = U.copy(), V.copy()
    get_kernel("compiled")(Uc, Vc, sigma, 0.04, 0.2, steps)
    get_kernel("python")(Up, Vp, sigma, 0.04, 0.2, steps)
    assert np.linalg.norm(Uc - Up, 2) <= 1e-13 * steps
    assert np.linalg.norm(Vc - Vp, 2) <= 1e-13 * steps


@pytest.mark.skipif("compiled" not in available_backends(),
                    reason="extension not built")
def test_chunked_equals_stepwise():
    U, V, sigma, _ = _setup(seed=4)
    Ua, Va = U.copy(), V.copy()
    get_kernel("compiled")(Ua, Va, sigma, 0.02, 0.0, 17)
    Ub, Vb = U.copy(), V.copy()
    for _ in range(17):
        get_kernel("compiled")(Ub, Vb, sigma, 0.02, 0.0, 1)
    np.testing.assert_array_equal(Ua, Ub)
    np.testing.assert_array_equal(Va, Vb)


def test_env_var_forces_python_backend():
    code = ("import lowrank_lab.backend as b; print(b.BACKEND)")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True,
                         env={"PATH": "/usr/bin:/bin",
                              "LOWRANK_LAB_BACKEND": "python"})
    assert out.stdout.strip() == "python"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        get_kernel("fortran")
