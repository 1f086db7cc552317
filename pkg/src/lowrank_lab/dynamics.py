"""Gradient-descent dynamics in full, block, and symmetrized coordinates.

The iterate is stored both as full factors (m x d, n x d) and as the four
blocks that arise once the target is diagonal: the principal d x d blocks
U, V and the complement blocks J, K. The symmetrized coordinates A, B and
the derived matrices S, P, Q carry the quantities the convergence analysis
tracks; ``diagnostics`` snapshots all of them per iteration.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import (
    DivergenceError,
    LowrankLabError,
    NumericOverflowError,
    ValidationError,
)
from .problem import ProblemInstance, InitSpec, init_factors

#: Column order of the trajectory CSV serialization.
CSV_COLUMNS = (
    "t", "loss", "rel_loss", "sigma_d_A", "sigma_1_A", "B_fro", "J_op",
    "K_op", "lambda_min_P", "sigma_1_P", "Delta", "balance_gap",
    "E_residual_op",
)

DIVERGENCE_THRESHOLD = 1e12


@dataclass(frozen=True)
class FactorState:
    """Block view of the iterate: principal U, V and complement J, K."""

    U: np.ndarray
    V: np.ndarray
    J: np.ndarray
    K: np.ndarray
    t: int = 0

    def __post_init__(self):
        d = self.U.shape[1]
        if self.U.shape[0] != d or self.V.shape != (d, d):
            raise ValidationError("principal blocks must be d x d")
        if self.J.shape[1:] != (d,) or self.K.shape[1:] != (d,):
            raise ValidationError("complement blocks must have d columns")

    @property
    def d(self):
        return self.U.shape[1]

    @property
    def m(self):
        return self.d + self.J.shape[0]

    @property
    def n(self):
        return self.d + self.K.shape[0]

    @classmethod
    def from_full(cls, Ufull, Vfull, t=0):
        d = Ufull.shape[1]
        return cls(U=Ufull[:d].copy(), V=Vfull[:d].copy(),
                   J=Ufull[d:].copy(), K=Vfull[d:].copy(), t=t)

    def full(self):
        """Reassemble the stacked factors (m x d, n x d)."""
        return np.vstack([self.U, self.J]), np.vstack([self.V, self.K])


@dataclass(frozen=True)
class SymmetrizedView:
    """Symmetrized coordinates A=(U+V)/2, B=(U-V)/2 and S, P, Q."""

    A: np.ndarray
    B: np.ndarray
    S: np.ndarray
    P: np.ndarray
    Q: np.ndarray


@dataclass(frozen=True)
class PerturbationTerms:
    """The d x d coupling terms entering the A/B update remainders."""

    C: np.ndarray
    D: np.ndarray


@dataclass
class DiagnosticsRecord:
    t: int
    loss: float
    rel_loss: float
    sigma_d_A: float
    sigma_1_A: float
    B_fro: float
    J_op: float
    K_op: float
    lambda_min_P: float
    sigma_1_P: float
    Delta: float
    balance_gap: float
    E_residual_op: float = math.nan

    def as_row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


def _check_step_args(Ufull, Vfull, sigma_full, eta):
    m, d = Ufull.shape
    n = Vfull.shape[0]
    if Vfull.shape[1] != d or sigma_full.shape != (m, n):
        raise ValidationError(
            f"shape mismatch: U {Ufull.shape}, V {Vfull.shape}, "
            f"sigma {sigma_full.shape}"
        )
    if eta < 0:
        raise ValidationError("eta must be >= 0")
    if not (np.isfinite(Ufull).all() and np.isfinite(Vfull).all()):
        raise NumericOverflowError("non-finite factor entries (eta too large?)")


def gd_step_full(Ufull, Vfull, sigma_full, eta):
    """One simultaneous GD update on the full factors.

    U' = U + eta (Sigma - U V^T) V and V' = V + eta (Sigma - U V^T)^T U,
    both evaluated at the incoming iterate.
    """
    _check_step_args(Ufull, Vfull, sigma_full, eta)
    R = sigma_full - Ufull @ Vfull.T
    return Ufull + eta * (R @ Vfull), Vfull + eta * (R.T @ Ufull)


def regularized_gd_step(Ufull, Vfull, sigma_full, eta, lam):
    """GD update plus the balancing-regularizer gradient scaled by lam.

    The regularizer is (lam/8) ||U^T U - V^T V||_F^2; lam=0 reduces to
    ``gd_step_full``.
    """
    if lam < 0:
        raise ValidationError("lam must be >= 0")
    _check_step_args(Ufull, Vfull, sigma_full, eta)
    R = sigma_full - Ufull @ Vfull.T
    G = Ufull.T @ Ufull - Vfull.T @ Vfull
    Unew = Ufull + eta * (R @ Vfull) - 0.5 * eta * lam * (Ufull @ G)
    Vnew = Vfull + eta * (R.T @ Ufull) + 0.5 * eta * lam * (Vfull @ G)
    return Unew, Vnew


def gd_step_blocks(state, instance, eta):
    """One GD update written on the four blocks of a diagonal instance."""
    if not instance.is_diagonal:
        raise ValidationError("block stepping requires a diagonal instance")
    if (state.m, state.n, state.d) != (instance.m, instance.n, instance.d):
        raise ValidationError("state shape does not match instance")
    if eta < 0:
        raise ValidationError("eta must be >= 0")
    U, V, J, K = state.U, state.V, state.J, state.K
    for blk in (U, V, J, K):
        if not np.isfinite(blk).all():
            raise NumericOverflowError("non-finite block entries")
    sig = instance.sigma_diag()
    R = sig - U @ V.T
    Unew = U + eta * (R @ V) - eta * (U @ (K.T @ K))
    Vnew = V + eta * (R.T @ U) - eta * (V @ (J.T @ J))
    Jnew = J - eta * (J @ (V.T @ V + K.T @ K))
    Knew = K - eta * (K @ (U.T @ U + J.T @ J))
    return FactorState(U=Unew, V=Vnew, J=Jnew, K=Knew, t=state.t + 1)


def symmetrize(state, instance):
    """Symmetrized view of the principal blocks; exact inverse of
    ``desymmetrize``."""
    A = (state.U + state.V) / 2
    B = (state.U - state.V) / 2
    S = A @ A.T
    P = instance.sigma_diag() - S + B @ B.T
    Q = A @ B.T - B @ A.T
    return SymmetrizedView(A=A, B=B, S=S, P=P, Q=Q)


def desymmetrize(A, B):
    """Recover (U, V) = (A + B, A - B)."""
    return A + B, A - B


def ab_step(A, B, J, K, instance, eta):
    """One GD update in symmetrized coordinates.

    Equivalent, by the linear change of variables, to stepping the blocks and
    re-symmetrizing; the complement blocks enter through (K^T K +- J^T J)/2.
    """
    if not instance.is_diagonal:
        raise ValidationError("symmetrized stepping requires a diagonal instance")
    sig = instance.sigma_diag()
    P = sig - A @ A.T + B @ B.T
    Q = A @ B.T - B @ A.T
    plus = (K.T @ K + J.T @ J) / 2
    minus = (K.T @ K - J.T @ J) / 2
    Anew = A + eta * (P @ A) - eta * (Q @ B) - eta * (A @ plus) - eta * (B @ minus)
    Bnew = B - eta * (P @ B) + eta * (Q @ A) - eta * (A @ minus) - eta * (B @ plus)
    return Anew, Bnew


def perturbation_terms(A, B, J, K):
    """The remainder terms of the A/B updates beyond P A and -P B."""
    plus = (K.T @ K + J.T @ J) / 2
    minus = (K.T @ K - J.T @ J) / 2
    C = -A @ (B.T @ B) + B @ (A.T @ B) - A @ plus - B @ minus
    D = A @ (B.T @ A) - B @ (A.T @ A) - A @ minus - B @ plus
    return PerturbationTerms(C=C, D=D)


def p_step_residual(view_t, view_t1, instance, eta):
    """Deviation of the P update from its congruence-form approximation.

    Returns (E, ||E||_op) with
    E = P_{t+1} - (I - eta (Sigma - P_t)) P_t (I - eta (Sigma - P_t)).
    """
    sig = instance.sigma_diag()
    M = np.eye(instance.d) - eta * (sig - view_t.P)
    E = view_t1.P - M @ view_t.P @ M
    return E, float(np.linalg.norm(E, 2))


def loss_pair(state, instance):
    """Loss computed two ways: on full matrices and via the block split.

    Returns (direct, decomposed) where the split is
    (||Sigma_d - U V^T||_F^2 + ||U K^T||_F^2 + ||J V^T||_F^2
    + ||J K^T||_F^2) / 2. The two agree up to float roundoff.
    """
    Ufull, Vfull = state.full()
    full = np.zeros((state.m, state.n))
    np.fill_diagonal(full[: instance.d, : instance.d], instance.singular_values)
    direct = 0.5 * np.linalg.norm(full - Ufull @ Vfull.T) ** 2
    parts = (
        np.linalg.norm(instance.sigma_diag() - state.U @ state.V.T) ** 2
        + np.linalg.norm(state.U @ state.K.T) ** 2
        + np.linalg.norm(state.J @ state.V.T) ** 2
        + np.linalg.norm(state.J @ state.K.T) ** 2
    )
    return float(direct), float(0.5 * parts)


def _loss_agreement_tol(loss, instance):
    # 1e-9 relative, plus a roundoff floor that matters once the loss sits
    # near the float64 noise of the residual entries (~eps * sigma_1 each).
    mn = instance.m * instance.n
    s1 = instance.sigma_1
    return 1e-9 * loss + 1e-12 * s1 * math.sqrt(2 * mn * max(loss, 0.0)) + \
        mn * (1e-13 * s1) ** 2


def diagnostics(state, instance, e_residual_op=math.nan):
    """All per-iteration scalars tracked by the two-stage analysis."""
    view = symmetrize(state, instance)
    direct, decomposed = loss_pair(state, instance)
    tol = _loss_agreement_tol(direct, instance)
    if abs(direct - decomposed) > tol:
        raise LowrankLabError(
            f"loss decomposition mismatch at t={state.t}: "
            f"{direct!r} vs {decomposed!r}"
        )
    sA = np.linalg.svd(view.A, compute_uv=False)
    eigP = np.linalg.eigvalsh(view.P)
    Ufull, Vfull = state.full()
    half_norm2 = 0.5 * float(np.sum(instance.singular_values ** 2))
    return DiagnosticsRecord(
        t=state.t,
        loss=direct,
        rel_loss=direct / half_norm2,
        sigma_d_A=float(sA[-1]),
        sigma_1_A=float(sA[0]),
        B_fro=float(np.linalg.norm(view.B)),
        J_op=float(np.linalg.norm(state.J, 2)) if state.J.size else 0.0,
        K_op=float(np.linalg.norm(state.K, 2)) if state.K.size else 0.0,
        lambda_min_P=float(eigP[0]),
        sigma_1_P=float(max(abs(eigP[0]), abs(eigP[-1]))),
        Delta=float(np.linalg.norm(instance.sigma_diag() - state.U @ state.V.T, 2)),
        balance_gap=float(np.linalg.norm(Ufull.T @ Ufull - Vfull.T @ Vfull)),
        E_residual_op=e_residual_op,
    )


@dataclass
class Trajectory:
    """Recorded diagnostics (and optional state snapshots) of one GD run."""

    instance: ProblemInstance
    eta: float
    records: list
    snapshots: list = field(default_factory=list)
    exit_reason: str = ""
    meta: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final(self):
        return self.records[-1]

    def snapshot_pairs(self):
        """Consecutive-iteration snapshot pairs (state_t, state_{t+1})."""
        by_t = {s.t: s for s in self.snapshots}
        return [(s, by_t[s.t + 1]) for s in self.snapshots if s.t + 1 in by_t]

    def write_csv(self, path, config_hash=None):
        with open(path, "w") as fh:
            if config_hash is not None:
                fh.write(f"# config_hash={config_hash}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for rec in self.records:
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in rec.as_row()) + "\n")


def read_trajectory_csv(path):
    """Parse a trajectory CSV; returns (records, config_hash or None)."""
    records = []
    config_hash = None
    with open(path) as fh:
        header = fh.readline().strip()
        if header.startswith("# config_hash="):
            config_hash = header.split("=", 1)[1]
            header = fh.readline().strip()
        if tuple(header.split(",")) != CSV_COLUMNS:
            raise ValidationError(f"unexpected trajectory columns in {path}")
        for line in fh:
            vals = line.strip().split(",")
            records.append(DiagnosticsRecord(
                t=int(vals[0]), **{c: float(v) for c, v in
                                   zip(CSV_COLUMNS[1:], vals[1:])}
            ))
    return records, config_hash


def _state_from_arrays(U, V, d, t):
    return FactorState(U=U[:d].copy(), V=V[:d].copy(),
                       J=U[d:].copy(), K=V[d:].copy(), t=t)


def _guard(U, V, rec, t):
    bad = None
    if not (np.isfinite(U).all() and np.isfinite(V).all()):
        bad = "non-finite factor entries"
    elif rec is not None and any(
        abs(v) > DIVERGENCE_THRESHOLD
        for v in rec.as_row()[1:] if not math.isnan(v)
    ):
        bad = f"diagnostic beyond {DIVERGENCE_THRESHOLD:g}"
    if bad:
        raise DivergenceError(f"divergence at iteration {t}: {bad}", iteration=t)


def run_trajectory(instance, init, eta, T_max, loss_tol=None, record_every=1,
                   snapshot_every=0, lam=0.0, meta=None):
    """Run GD, recording diagnostics every ``record_every`` iterations.

    ``init`` is either an InitSpec or a pair of full factor arrays. For a
    non-diagonal instance the factors are rotated into the diagonal frame
    first; all recorded quantities live in that frame (the loss is frame
    independent). Stops at ``loss_tol`` (if given) or after ``T_max``
    iterations; any diagnostic beyond 1e12 raises DivergenceError carrying
    the partial trajectory.

    ``snapshot_every`` > 0 stores full states at that iteration spacing, in
    consecutive (t, t+1) pairs so recursion checks always have one-step
    increments to work with.
    """
    if isinstance(init, InitSpec):
        U0, V0 = init_factors(instance.m, instance.n, instance.d, init)
    else:
        U0, V0 = init
    if not instance.is_diagonal:
        if instance.phi is not None:
            U0 = instance.phi.T @ U0
        if instance.psi is not None:
            V0 = instance.psi.T @ V0
        instance = ProblemInstance(m=instance.m, n=instance.n, d=instance.d,
                                   singular_values=instance.singular_values)
    if T_max < 0 or record_every < 1:
        raise ValidationError("T_max must be >= 0 and record_every >= 1")

    U = np.ascontiguousarray(U0, dtype=float).copy()
    V = np.ascontiguousarray(V0, dtype=float).copy()
    sv = np.ascontiguousarray(instance.singular_values, dtype=float)
    d = instance.d
    records = []
    snapshots = []
    traj = Trajectory(instance=instance, eta=eta, records=records,
                      snapshots=snapshots, exit_reason="",
                      meta=dict(meta or {}, backend=backend.BACKEND, lam=lam))

    t = 0
    while True:
        state = _state_from_arrays(U, V, d, t)
        try:
            _guard(U, V, None, t)
            rec = diagnostics(state, instance)
            _guard(U, V, rec, t)
        except DivergenceError as err:
            err.trajectory = traj
            raise
        records.append(rec)
        snap_due = snapshot_every > 0 and t % snapshot_every == 0
        if snap_due and (not snapshots or snapshots[-1].t != t):
            snapshots.append(state)
        if loss_tol is not None and rec.loss <= loss_tol:
            traj.exit_reason = "loss_tol"
            break
        if t >= T_max:
            traj.exit_reason = "t_max"
            break
        # One explicit step so the P-recursion residual (and the paired
        # snapshot) see consecutive iterations, then the rest of the chunk.
        view_t = symmetrize(state, instance)
        backend.step_chunk(U, V, sv, eta, lam, 1)
        state1 = _state_from_arrays(U, V, d, t + 1)
        view_t1 = symmetrize(state1, instance)
        _, rec.E_residual_op = p_step_residual(view_t, view_t1, instance, eta)
        if snap_due and snapshot_every > 1:
            snapshots.append(state1)
        remaining = min(record_every, T_max - t) - 1
        if remaining > 0:
            backend.step_chunk(U, V, sv, eta, lam, remaining)
        t += 1 + remaining
    return traj
