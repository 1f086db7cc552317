"""Problem instances, diagonal reduction, and random initialization.

A problem instance is the target matrix given through its singular values and
optional orthonormal factors. All dynamics run in the frame where the target
is diagonal; ``reduce_to_diagonal`` maps arbitrary targets (and factor
iterates) into that frame.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficiencyError, ValidationError

# Scale constant for the random-initialization bounds. The smallest singular
# value of a d x d Gaussian matrix has no gap away from zero (its density is
# flat near 0), so the lower bound sigma_d(A0) >= eps/(c sqrt(d)) only holds
# with ~1 - 1.2/c probability per draw. c = 300 gives a ~99.5% empirical pass
# rate of all five bounds at desk dimensions (d <= 6, m, n <= 50).
DEFAULT_C = 300.0

#: Numerical-rank tolerance: singular values above RANK_TOL * sigma_1 count.
RANK_TOL = 1e-10

_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class ProblemInstance:
    """Rank-d target with singular values sigma_1 >= ... >= sigma_d > 0.

    ``phi`` (m x m) and ``psi`` (n x n) are optional orthonormal factors;
    ``None`` means identity, in which case the target is the m x n diagonal
    embedding of the singular values.
    """

    m: int
    n: int
    d: int
    singular_values: np.ndarray
    phi: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float)
        object.__setattr__(self, "singular_values", sv)
        if not (1 <= self.d <= min(self.m, self.n)):
            raise ValidationError(
                f"rank d={self.d} outside [1, min(m={self.m}, n={self.n})]"
            )
        if sv.shape != (self.d,):
            raise ValidationError(
                f"expected {self.d} singular values, got shape {sv.shape}"
            )
        if not np.all(sv > 0):
            raise ValidationError("singular values must be strictly positive")
        if np.any(np.diff(sv) > 0):
            raise ValidationError("singular values must be non-increasing")
        for name, q, dim in (("phi", self.phi, self.m), ("psi", self.psi, self.n)):
            if q is None:
                continue
            q = np.asarray(q, dtype=float)
            if q.shape != (dim, dim):
                raise ValidationError(f"{name} must be {dim}x{dim}")
            defect = np.linalg.norm(q.T @ q - np.eye(dim), 2)
            if defect > _ORTHO_TOL:
                raise ValidationError(
                    f"{name} not orthonormal: ||Q^T Q - I||_op = {defect:.3e}"
                )

    @property
    def sigma_1(self):
        return float(self.singular_values[0])

    @property
    def sigma_d(self):
        return float(self.singular_values[-1])

    @property
    def kappa(self):
        return self.sigma_1 / self.sigma_d

    @property
    def is_diagonal(self):
        return self.phi is None and self.psi is None

    def sigma_diag(self):
        """The d x d diagonal core diag(sigma_1, ..., sigma_d)."""
        return np.diag(self.singular_values)


@dataclass(frozen=True)
class InitSpec:
    """Gaussian initialization scale, seed, and the bound constant c.

    ``epsilon`` is the entrywise standard deviation; 0 is allowed as the
    degenerate all-zero initialization.
    """

    epsilon: float
    seed: int
    c: float = DEFAULT_C

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValidationError("epsilon must be >= 0")
        if self.c < 1:
            raise ValidationError("c must be >= 1")


def _orthonormal(dim, rng):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def make_instance(m, n, d, singular_values, unitary_seed=None):
    """Build an instance; a seed attaches random orthonormal factors."""
    phi = psi = None
    if unitary_seed is not None:
        rng = np.random.default_rng(unitary_seed)
        phi = _orthonormal(m, rng)
        psi = _orthonormal(n, rng)
    return ProblemInstance(m=m, n=n, d=d, singular_values=singular_values,
                           phi=phi, psi=psi)


def assemble_full_sigma(instance):
    """Dense m x n target: phi @ diag-embed(singular_values) @ psi^T."""
    full = np.zeros((instance.m, instance.n))
    np.fill_diagonal(full[: instance.d, : instance.d], instance.singular_values)
    if instance.phi is not None:
        full = instance.phi @ full
    if instance.psi is not None:
        full = full @ instance.psi.T
    return full


def reduce_to_diagonal(sigma_full, U0, V0):
    """Rotate a dense target and factor pair into the diagonal frame.

    Returns a diagonal instance plus U0' = Phi^T U0 and V0' = Psi^T V0, where
    sigma_full = Phi S Psi^T is the SVD. GD trajectories of (U0', V0') under
    the diagonal instance map back to trajectories of (U0, V0) under
    sigma_full.
    """
    sigma_full = np.asarray(sigma_full, dtype=float)
    U0 = np.asarray(U0, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    m, n = sigma_full.shape
    d = U0.shape[1]
    if U0.shape != (m, d) or V0.shape != (n, d):
        raise ValidationError("factor shapes do not match sigma_full")
    phi, sv, psi_t = np.linalg.svd(sigma_full)
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv[0] > 0 else 0
    if rank < d:
        raise RankDeficiencyError(
            f"numerical rank {rank} below factor width {d}"
        )
    if rank > d:
        raise ValidationError(
            f"numerical rank {rank} exceeds factor width {d}"
        )
    instance = ProblemInstance(m=m, n=n, d=d, singular_values=sv[:d])
    return instance, phi.T @ U0, psi_t @ V0


def init_factors(m, n, d, init_spec):
    """I.i.d. Gaussian factors, mean 0, std epsilon, deterministic in seed."""
    rng = np.random.default_rng(init_spec.seed)
    U0 = init_spec.epsilon * rng.standard_normal((m, d))
    V0 = init_spec.epsilon * rng.standard_normal((n, d))
    return U0, V0


def theory_epsilon(instance, c=DEFAULT_C, k_eps=1.0):
    """Initialization scale k_eps * sigma_d / (sqrt(d^3 sigma_1) (m + n)).

    ``c`` is accepted for interface symmetry with the bound checks; the
    default formula drops the logarithmic factors that would involve it.
    """
    del c
    return k_eps * instance.sigma_d / (
        np.sqrt(instance.d ** 3 * instance.sigma_1) * (instance.m + instance.n)
    )


def theory_eta(instance, epsilon, k_eta=1.0):
    """Step size k_eta * sigma_d * epsilon^2 / (d sigma_1^3)."""
    return k_eta * instance.sigma_d * epsilon ** 2 / (
        instance.d * instance.sigma_1 ** 3
    )


@dataclass(frozen=True)
class InitBound:
    name: str
    measured: float
    limit: float
    holds: bool

    @property
    def ratio(self):
        """measured / limit; < 1 means comfortable for upper bounds."""
        return self.measured / self.limit if self.limit != 0 else np.inf


@dataclass(frozen=True)
class InitBoundsReport:
    bounds: tuple = field(default_factory=tuple)

    @property
    def all_hold(self):
        return all(b.holds for b in self.bounds)

    def __getitem__(self, name):
        for b in self.bounds:
            if b.name == name:
                return b
        raise KeyError(name)


def verify_init_bounds(U0, V0, epsilon, c=DEFAULT_C):
    """Check the five scale bounds the Gaussian initialization should satisfy.

    Report-only: sigma_d((U+V)/2) > eps/(c sqrt d), sigma_1((U+V)/2) <= c eps
    sqrt d, ||B0||_F <= c d eps, and the operator norms of the complement
    blocks J0, K0 against c eps sqrt(max(m-d, d)) and c eps sqrt(max(n-d, d)).
    """
    m, d = U0.shape
    n = V0.shape[0]
    A = (U0[:d] + V0[:d]) / 2
    B = (U0[:d] - V0[:d]) / 2
    J = U0[d:]
    K = V0[d:]
    s = np.linalg.svd(A, compute_uv=False)
    j_op = np.linalg.norm(J, 2) if J.size else 0.0
    k_op = np.linalg.norm(K, 2) if K.size else 0.0
    sqrt_d = np.sqrt(d)
    lower_ok = epsilon > 0 and s[-1] >= epsilon / (c * sqrt_d)
    bounds = (
        InitBound("sigma_d_A_lower", float(s[-1]), epsilon / (c * sqrt_d), lower_ok),
        InitBound("sigma_1_A_upper", float(s[0]), c * epsilon * sqrt_d,
                  s[0] <= c * epsilon * sqrt_d),
        InitBound("B_fro", float(np.linalg.norm(B)), c * d * epsilon,
                  np.linalg.norm(B) <= c * d * epsilon),
        InitBound("J_op", float(j_op), c * epsilon * np.sqrt(max(m - d, d)),
                  j_op <= c * epsilon * np.sqrt(max(m - d, d))),
        InitBound("K_op", float(k_op), c * epsilon * np.sqrt(max(n - d, d)),
                  k_op <= c * epsilon * np.sqrt(max(n - d, d))),
    )
    return InitBoundsReport(bounds=bounds)
