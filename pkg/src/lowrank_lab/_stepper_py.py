"""Pure-numpy fallback for the compiled stepping kernel.

Implements the same contract as the extension module: advance (U, V) in place
by ``n_steps`` simultaneous GD updates against the diagonal embedding of
``sigma``, with an optional balancing-regularizer term scaled by ``lam``.
"""

import numpy as np


def step_chunk(U, V, sigma, eta, lam, n_steps):
    d = sigma.shape[0]
    scale = sigma[:, None]
    for _ in range(n_steps):
        UtU = U.T @ U
        VtV = V.T @ V
        if lam != 0.0:
            D = 0.5 * lam * (UtU - VtV)
            MU = VtV + D
            MV = UtU - D
        else:
            MU = VtV
            MV = UtU
        GU = U @ MU
        GV = V @ MV
        GU[:d] -= scale * V[:d]
        GV[:d] -= scale * U[:d]
        U -= eta * GU
        V -= eta * GV
