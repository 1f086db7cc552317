"""Two-stage structure detection and rate fitting on recorded trajectories.

Stage 1 ends once the signal strength sigma_d(A) crosses sqrt(sigma_d / 2)
(at T1) and the symmetric error sigma_1(P) falls to sigma_d / 4 (T2 more
iterations, T0 = T1 + T2). Stage 2 runs until the loss reaches the target
delta at Tf. Rates are ordinary least squares on log-transformed diagnostics.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, ValidationError

_MIN_FIT_POINTS = 10


@dataclass
class PhaseReport:
    """Detected phase boundaries and fitted per-step rates.

    ``growth_rate`` and ``decay_rate`` are per-step ratios (exp of the
    fitted log-slopes); the raw slopes are kept alongside. Any quantity
    whose crossing never happens is None.
    """

    T1: int | None = None
    T2: int | None = None
    T0: int | None = None
    Tf: int | None = None
    delta: float | None = None
    growth_rate: float | None = None
    decay_rate: float | None = None
    growth_slope: float | None = None
    decay_slope: float | None = None
    warnings: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "T1": self.T1, "T2": self.T2, "T0": self.T0, "Tf": self.Tf,
            "delta": self.delta,
            "growth_rate": self.growth_rate, "decay_rate": self.decay_rate,
            "growth_slope": self.growth_slope, "decay_slope": self.decay_slope,
            "warnings": self.warnings,
        }


def _first_crossing(records, pred):
    for r in records:
        if pred(r):
            return r.t
    return None


def detect_phases(traj, instance, delta=None, fit_rates=False):
    """Locate T1, T2, T0 and (when delta is given) Tf on recorded steps.

    First-crossing detection without hysteresis; later re-crossings are
    reported as warnings, not treated as new phases. ``fit_rates`` also runs
    the two rate fits where their windows are available.
    """
    sd = instance.sigma_d
    recs = traj.records
    report = PhaseReport(delta=delta)
    thr_a = math.sqrt(sd / 2)
    report.T1 = _first_crossing(recs, lambda r: r.sigma_d_A >= thr_a)
    if report.T1 is not None:
        after = [r for r in recs if r.t >= report.T1]
        t_p = _first_crossing(after, lambda r: r.sigma_1_P <= sd / 4)
        if t_p is not None:
            report.T2 = t_p - report.T1
            report.T0 = t_p
        if any(r.sigma_d_A < thr_a for r in after):
            report.warnings.append("sigma_d(A) re-crossed its threshold")
    if report.T0 is not None:
        tail = [r for r in recs if r.t >= report.T0]
        if any(r.sigma_1_P > sd / 4 for r in tail):
            report.warnings.append("sigma_1(P) re-crossed sigma_d / 4")
    if delta is not None:
        report.Tf = _first_crossing(recs, lambda r: r.loss <= delta)
    if fit_rates:
        try:
            report.growth_slope = fit_growth_rate(traj, instance)
            report.growth_rate = math.exp(report.growth_slope)
        except InsufficientDataError:
            report.warnings.append("growth window too short to fit")
        if report.T0 is not None and report.Tf is not None:
            try:
                report.decay_slope = fit_decay_rate(
                    traj, instance, window=(report.T0, report.Tf))
                report.decay_rate = math.exp(report.decay_slope)
            except InsufficientDataError:
                report.warnings.append("decay window too short to fit")
    return report


def _ols_slope(ts, ys):
    t = np.asarray(ts, dtype=float)
    y = np.asarray(ys, dtype=float)
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def fit_growth_rate(traj, instance, window=None):
    """OLS slope of ln(s_t / (sigma_d - s_t)) with s = sigma_d(A)^2.

    The default window is [0, T1]. Points with s outside (0, sigma_d) are
    dropped. Fewer than 10 usable points raises InsufficientDataError.
    """
    sd = instance.sigma_d
    if window is None:
        t1 = detect_phases(traj, instance).T1
        if t1 is None:
            raise InsufficientDataError("T1 not detected; give a window")
        window = (0, t1)
    lo, hi = window
    ts, ys = [], []
    for r in traj.records:
        if not lo <= r.t <= hi:
            continue
        s = r.sigma_d_A ** 2
        if 0 < s < sd:
            ts.append(r.t)
            ys.append(math.log(s / (sd - s)))
    if len(ts) < _MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"growth window has {len(ts)} usable points, need "
            f">= {_MIN_FIT_POINTS}"
        )
    return _ols_slope(ts, ys)


def fit_decay_rate(traj, instance, window, delta=None):
    """OLS slope of ln(Delta_t) over the local-convergence window.

    ``window`` is (T0, Tf); non-positive Delta values are dropped.
    """
    del instance, delta
    lo, hi = window
    ts, ys = [], []
    for r in traj.records:
        if lo <= r.t <= hi and r.Delta > 0:
            ts.append(r.t)
            ys.append(math.log(r.Delta))
    if len(ts) < _MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"decay window has {len(ts)} usable points, need "
            f">= {_MIN_FIT_POINTS}"
        )
    return _ols_slope(ts, ys)


@dataclass
class ScalingFit:
    """Least-squares fit of Tf against ln(1 / delta)."""

    slope: float
    intercept: float
    r_squared: float
    n_used: int
    excluded: int

    def to_json_dict(self):
        return {
            "slope": self.slope, "intercept": self.intercept,
            "r_squared": self.r_squared, "n_used": self.n_used,
            "excluded": self.excluded,
        }


def total_time_scaling(points):
    """Fit measured Tf versus ln(1/delta) across a sweep.

    ``points`` is an iterable of (delta, Tf, T0-or-None). Saturated points
    (Tf not past T0, i.e. delta already met during warm-up) are excluded.
    Needs at least 4 sweep points and 3 usable ones.
    """
    points = list(points)
    if len(points) < 4:
        raise ValidationError("need at least 4 sweep points")
    xs, ys, excluded = [], [], 0
    for delta, tf, t0 in points:
        if delta <= 0 or tf is None:
            excluded += 1
            continue
        if t0 is not None and tf <= t0:
            excluded += 1
            continue
        xs.append(math.log(1.0 / delta))
        ys.append(float(tf))
    if len(xs) < 3:
        raise InsufficientDataError("fewer than 3 usable sweep points")
    x = np.asarray(xs)
    y = np.asarray(ys)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(slope=float(coef[0]), intercept=float(coef[1]),
                      r_squared=r2, n_used=len(xs), excluded=excluded)
