"""Randomized checks of the eigenvalue-recursion bounds and the per-stage
trajectory conditions.

The two recursion bounds concern congruence-form updates of symmetric
matrices: the smallest singular value of S' = (I + eta (Sigma - S)) S
(I + eta (Sigma - S)) grows geometrically up to an eta^2 error term, and the
smallest eigenvalue of P' = (I - eta (Sigma - P)) P (I - eta (Sigma - P))
cannot fall much below its geometric contraction. Trajectory checks verify
the warm-up and local-convergence conditions on recorded diagnostics.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

#: float-roundoff cushion applied to eigenvalue comparisons, relative to
#: the scale sigma_1 of the instance at hand.
_EIG_TOL = 1e-12


@dataclass(frozen=True)
class LemmaParams:
    """Contraction parameter beta, step size, and the spectrum bounds."""

    beta: float
    eta: float
    sigma_1: float
    sigma_d: float

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValidationError("beta must lie in (0, 1)")
        if self.eta < 0:
            raise ValidationError("eta must be >= 0")
        if not 0 < self.sigma_d <= self.sigma_1:
            raise ValidationError("need 0 < sigma_d <= sigma_1")

    @property
    def error_coeff(self):
        """(8 + 6 beta) / (1 - beta), the eta^2 error-term coefficient."""
        return (8 + 6 * self.beta) / (1 - self.beta)

    @property
    def eta_ok(self):
        return self.eta <= self.beta / (8 * self.sigma_1)


@dataclass(frozen=True)
class LemmaCheck:
    value: float
    bound: float
    hypothesis_met: bool
    skip_reason: str = ""

    @property
    def slack(self):
        return self.value - self.bound

    @property
    def holds(self):
        """None when the hypotheses failed and the check was skipped."""
        if not self.hypothesis_met:
            return None
        return self.slack >= 0


def _sigma_hypotheses(sigma_diag, params):
    diag = np.diag(sigma_diag)
    if np.any(np.abs(sigma_diag - np.diag(diag)) > 0):
        return "sigma must be diagonal"
    if np.any(diag < params.sigma_d) or np.any(diag > params.sigma_1):
        return "sigma spectrum outside [sigma_d, sigma_1]"
    if not params.eta_ok:
        return "eta exceeds beta / (8 sigma_1)"
    return ""


def check_lemma_S(S, sigma_diag, params):
    """Growth bound for the smallest singular value of the S-recursion.

    With s = sigma_d(S), the updated s' must satisfy
    s' >= (1 + eta (sigma_d - s))^2 s - error_coeff * sigma_1^3 eta^2
    whenever sigma_1(S) <= 2 sigma_1 and eta <= beta / (8 sigma_1).
    """
    reason = _sigma_hypotheses(sigma_diag, params)
    sv = np.linalg.svd(S, compute_uv=False)
    eig_min = np.linalg.eigvalsh(S)[0]
    if not reason and eig_min <= 0:
        reason = "S must be positive definite"
    if not reason and sv[0] > 2 * params.sigma_1:
        reason = "sigma_1(S) exceeds 2 sigma_1"
    s = float(sv[-1])
    M = np.eye(S.shape[0]) + params.eta * (sigma_diag - S)
    s_next = float(np.linalg.svd(M @ S @ M, compute_uv=False)[-1])
    bound = (1 + params.eta * (params.sigma_d - s)) ** 2 * s \
        - params.error_coeff * params.sigma_1 ** 3 * params.eta ** 2
    return LemmaCheck(value=s_next, bound=bound,
                      hypothesis_met=not reason, skip_reason=reason)


def check_lemma_P(P, sigma_diag, params):
    """Floor bound for the smallest eigenvalue of the P-recursion.

    With p = lambda_min(P): if p < 0 then
    p' >= (1 - eta sigma_d)^2 p - error_coeff * sigma_1^3 eta^2; if p >= 0
    then p' >= 0 (congruence preserves positive semidefiniteness). A
    roundoff cushion of 1e-12 sigma_1 is applied to the PSD branch.
    """
    reason = _sigma_hypotheses(sigma_diag, params)
    asym = np.linalg.norm(P - P.T)
    if not reason and asym > 1e-12 * max(1.0, np.linalg.norm(P)):
        reason = "P must be symmetric"
    sv = np.linalg.svd(P, compute_uv=False)
    if not reason and sv[0] > 2 * params.sigma_1:
        reason = "sigma_1(P) exceeds 2 sigma_1"
    p = float(np.linalg.eigvalsh(P)[0])
    M = np.eye(P.shape[0]) - params.eta * (sigma_diag - P)
    p_next = float(np.linalg.eigvalsh(M @ P @ M)[0])
    if p >= 0:
        bound = -_EIG_TOL * params.sigma_1
    else:
        bound = (1 - params.eta * params.sigma_d) ** 2 * p \
            - params.error_coeff * params.sigma_1 ** 3 * params.eta ** 2
    return LemmaCheck(value=p_next, bound=bound,
                      hypothesis_met=not reason, skip_reason=reason)


@dataclass
class SweepResult:
    checked: int = 0
    skipped: int = 0
    violations: int = 0
    worst_slack: float = math.inf

    def absorb(self, check):
        if check.holds is None:
            self.skipped += 1
            return
        self.checked += 1
        self.worst_slack = min(self.worst_slack, check.slack)
        if not check.holds:
            self.violations += 1


def _random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _random_spectrum_matrix(eigs, rng):
    q = _random_orthogonal(len(eigs), rng)
    return (q * eigs) @ q.T


def sweep_lemma_S(samples, d_max, seed, betas=(0.25, 0.5, 0.75)):
    """Randomized hypothesis-satisfying sweep of the S-recursion bound.

    Per-sample seeds derive as seed + index. Returns a SweepResult; any
    violation is a genuine counterexample.
    """
    result = SweepResult()
    for i in range(samples):
        rng = np.random.default_rng(seed + i)
        d = int(rng.integers(1, d_max + 1))
        sigma_d = rng.uniform(0.5, 1.0)
        sigma_1 = sigma_d * rng.uniform(1.0, 10.0)
        sigma = np.diag(np.sort(rng.uniform(sigma_d, sigma_1, d))[::-1])
        beta = betas[i % len(betas)]
        eta = rng.uniform(0.05, 1.0) * beta / (8 * sigma_1)
        eigs = rng.uniform(1e-3 * sigma_1, 2 * sigma_1, d)
        S = _random_spectrum_matrix(eigs, rng)
        params = LemmaParams(beta=beta, eta=eta, sigma_1=sigma_1,
                             sigma_d=sigma_d)
        result.absorb(check_lemma_S(S, sigma, params))
    return result


def sweep_lemma_P(samples, d_max, seed, betas=(0.25, 0.5, 0.75)):
    """Randomized hypothesis-satisfying sweep of the P-recursion bound."""
    result = SweepResult()
    for i in range(samples):
        rng = np.random.default_rng(seed + i)
        d = int(rng.integers(1, d_max + 1))
        sigma_d = rng.uniform(0.5, 1.0)
        sigma_1 = sigma_d * rng.uniform(1.0, 10.0)
        sigma = np.diag(np.sort(rng.uniform(sigma_d, sigma_1, d))[::-1])
        beta = betas[i % len(betas)]
        eta = rng.uniform(0.05, 1.0) * beta / (8 * sigma_1)
        eigs = rng.uniform(-2 * sigma_1, 2 * sigma_1, d)
        P = _random_spectrum_matrix(eigs, rng)
        params = LemmaParams(beta=beta, eta=eta, sigma_1=sigma_1,
                             sigma_d=sigma_d)
        result.absorb(check_lemma_P(P, sigma, params))
    return result


@dataclass
class ConditionSeries:
    """Slack sequence of one inequality; holds iff every slack is >= 0."""

    name: str
    ts: list = field(default_factory=list)
    slacks: list = field(default_factory=list)

    def append(self, t, slack):
        self.ts.append(int(t))
        self.slacks.append(float(slack))

    @property
    def holds(self):
        return all(s >= 0 for s in self.slacks)

    @property
    def first_violation(self):
        for t, s in zip(self.ts, self.slacks):
            if s < 0:
                return t
        return None

    @property
    def min_slack(self):
        return min(self.slacks) if self.slacks else math.inf


@dataclass
class ConditionReport:
    series: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __getitem__(self, name):
        for s in self.series:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def all_hold(self):
        return all(s.holds for s in self.series)

    def to_json_dict(self):
        return {
            "conditions": {
                s.name: {
                    "t": s.ts,
                    "slack": s.slacks,
                    "holds": s.holds,
                    "first_violation": s.first_violation,
                }
                for s in self.series
            },
            "all_hold": self.all_hold,
            "info": self.info,
        }


def _snapshot_map(traj):
    return {s.t: s for s in traj.snapshots}


def check_stage1_conditions(traj, instance, eps, c, e_b, t0=None):
    """Warm-up-phase conditions over recorded iterations t <= T0.

    Checks the Gram sandwich eps^2/(c^2 d) I <= A A^T <= 2 Sigma, the
    asymmetry bound ||B||_F <= 2 c d eps, the complement-norm bounds on J and
    K, and (at T0) the signal and symmetric-error thresholds. The Gram upper
    bound is evaluated exactly where state snapshots exist and otherwise via
    the certificate sigma_d + lambda_min(P) - ||B||_F^2 >= 0, which is
    sufficient but not necessary; the method used is counted in ``info``.
    """
    if t0 is None:
        from .phases import detect_phases

        t0 = detect_phases(traj, instance, delta=None).T0
    d, sd = instance.d, instance.sigma_d
    snaps = _snapshot_map(traj)
    two_sigma = 2 * instance.sigma_diag()
    lower = ConditionSeries("gram_lower")
    upper = ConditionSeries("gram_upper")
    b_bound = ConditionSeries("B_fro")
    j_bound = ConditionSeries("J_op")
    k_bound = ConditionSeries("K_op")
    exact_count = 0
    mp = max(instance.m - d, d)
    np_ = max(instance.n - d, d)
    records = [r for r in traj.records if t0 is None or r.t <= t0]
    for r in records:
        lower.append(r.t, r.sigma_d_A ** 2 - eps ** 2 / (c ** 2 * d))
        if r.t in snaps:
            A = (snaps[r.t].U + snaps[r.t].V) / 2
            slack = float(np.linalg.eigvalsh(two_sigma - A @ A.T)[0])
            exact_count += 1
        else:
            slack = sd + r.lambda_min_P - r.B_fro ** 2
        upper.append(r.t, slack)
        b_bound.append(r.t, 2 * c * d * eps - r.B_fro)
        j_bound.append(r.t, c * eps * math.sqrt(mp) - r.J_op)
        k_bound.append(r.t, c * eps * math.sqrt(np_) - r.K_op)
    series = [lower, upper, b_bound, j_bound, k_bound]
    info = {
        "t0": t0,
        "gram_upper_exact_points": exact_count,
        "gram_upper_certificate_points": len(records) - exact_count,
    }
    if t0 is not None:
        at_t0 = next(r for r in traj.records if r.t == t0)
        signal = ConditionSeries("signal_at_T0")
        signal.append(t0, at_t0.sigma_d_A - math.sqrt(sd / 2))
        sym_err = ConditionSeries("P_op_at_T0")
        sym_err.append(t0, sd / 4 - at_t0.sigma_1_P)
        series += [signal, sym_err]
    # Envelope constant for the dip of lambda_min(P) below zero.
    dip = max((max(0.0, -r.lambda_min_P) for r in records), default=0.0)
    scale = e_b ** 2 * eps ** 2 * (instance.m + instance.n) * d * instance.kappa
    info["lambda_min_P_envelope_k"] = dip / scale if scale > 0 else 0.0
    return ConditionReport(series=series, info=info)


def check_stage2_conditions(traj, instance, eta, t0, eps=None, c=None,
                            b_const=1.0):
    """Local-convergence conditions for recorded iterations t >= T0.

    (1) ||B||_F <= b_const * sigma_d / sqrt(sigma_1); (2) the principal
    residual Delta contracts at least geometrically from (2/5) sigma_d;
    (3) sigma_d(U), sigma_d(V) >= sqrt(sigma_d / 2), snapshot-exact where
    possible, otherwise via the certificate sigma_d(A) - ||B||_F; (4) J and
    K decay geometrically below their warm-up bounds.
    """
    if eps is None:
        eps = traj.meta.get("epsilon")
    if c is None:
        c = traj.meta.get("c")
    d, sd = instance.d, instance.sigma_d
    snaps = _snapshot_map(traj)
    rho = 1 - eta * sd / 2
    b_lim = b_const * sd / math.sqrt(instance.sigma_1)
    thr = math.sqrt(sd / 2)
    mp = max(instance.m - d, d)
    np_ = max(instance.n - d, d)
    b_series = ConditionSeries("B_fro")
    delta_series = ConditionSeries("Delta_decay")
    u_series = ConditionSeries("sigma_d_U")
    v_series = ConditionSeries("sigma_d_V")
    j_series = ConditionSeries("J_decay")
    k_series = ConditionSeries("K_decay")
    exact_count = 0
    for r in traj.records:
        if r.t < t0:
            continue
        tau = r.t - t0
        b_series.append(r.t, b_lim - r.B_fro)
        delta_series.append(r.t, rho ** tau * 0.4 * sd - r.Delta)
        if r.t in snaps:
            st = snaps[r.t]
            su = float(np.linalg.svd(st.U, compute_uv=False)[-1])
            sv_ = float(np.linalg.svd(st.V, compute_uv=False)[-1])
            exact_count += 1
        else:
            su = r.sigma_d_A - r.B_fro
            sv_ = su
        u_series.append(r.t, su - thr)
        v_series.append(r.t, sv_ - thr)
        if eps is not None and c is not None:
            j_series.append(r.t, c * eps * rho ** tau * math.sqrt(mp) - r.J_op)
            k_series.append(r.t, c * eps * rho ** tau * math.sqrt(np_) - r.K_op)
    series = [b_series, delta_series, u_series, v_series]
    if j_series.ts:
        series += [j_series, k_series]
    info = {
        "t0": t0,
        "sigma_d_exact_points": exact_count,
        "b_const": b_const,
    }
    return ConditionReport(series=series, info=info)


def check_B_recursion(traj, instance=None):
    """Per-step audit of the asymmetry-energy recursion on snapshot pairs.

    For each stored consecutive pair, verifies (a) the exact expansion
    ||B'||_F^2 - ||B||_F^2 = -2 eta <B, Z> + eta^2 ||Z||_F^2 with Z the full
    B-update direction, to 1e-9 relative, and (b) the bound
    ||B'||^2 - ||B||^2 <= -2 eta lambda_min(P) ||B||^2
    + eta ||B^T A||_F ||K^T K - J^T J||_F + eta^2 ||Z||_F^2.
    Reports the per-pair growth factor in ``info``.
    """
    if instance is None:
        instance = traj.instance
    eta = traj.eta
    sig = instance.sigma_diag()
    identity = ConditionSeries("exact_expansion")
    inequality = ConditionSeries("growth_bound")
    factors = []
    for s0, s1 in traj.snapshot_pairs():
        A = (s0.U + s0.V) / 2
        B = (s0.U - s0.V) / 2
        B1 = (s1.U - s1.V) / 2
        J, K = s0.J, s0.K
        P = sig - A @ A.T + B @ B.T
        Q = A @ B.T - B @ A.T
        minus = (K.T @ K - J.T @ J) / 2
        plus = (K.T @ K + J.T @ J) / 2
        Z = P @ B - Q @ A + A @ minus + B @ plus
        b0 = float(np.linalg.norm(B) ** 2)
        b1 = float(np.linalg.norm(B1) ** 2)
        lhs = b1 - b0
        rhs = -2 * eta * float(np.sum(B * Z)) + eta ** 2 * float(
            np.linalg.norm(Z) ** 2
        )
        tol = 1e-9 * (b0 + b1) + 1e-300
        identity.append(s0.t, tol - abs(lhs - rhs))
        lam_min = float(np.linalg.eigvalsh(P)[0])
        bound = (
            -2 * eta * lam_min * b0
            + eta * float(np.linalg.norm(B.T @ A)) * float(
                np.linalg.norm(K.T @ K - J.T @ J))
            + eta ** 2 * float(np.linalg.norm(Z) ** 2)
        )
        cushion = 1e-12 * (abs(bound) + b0) + 1e-300
        inequality.append(s0.t, bound - lhs + cushion)
        factors.append(b1 / b0 if b0 > 0 else math.nan)
    info = {"pairs": len(factors), "growth_factors": factors}
    return ConditionReport(series=[identity, inequality], info=info)
