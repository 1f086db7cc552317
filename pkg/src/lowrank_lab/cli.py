"""Command-line harness: seeded runs, sweeps, property suites, reports.

Subcommands: ``run``, ``sweep``, ``verify-lemmas``, ``oracle-compare``,
``report``. Configuration is flat ``key = value`` text; comma-separated
values on the sweepable keys (seed, delta, delta_rel, eta, sigma_d) denote
sweep axes. Every artifact embeds the sha256 hash of the resolved config,
and post-processing commands reject inputs whose hashes disagree.

Exit codes: 0 success, 2 validation, 3 divergence, 4 property violation.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__, backend
from .dynamics import run_trajectory, read_trajectory_csv, Trajectory
from .errors import DivergenceError, LowrankLabError, ValidationError
from .flow_oracle import (
    ClosedFormInputs,
    closed_form_P,
    closed_form_S,
    integrate_matrix_ode,
    rank1_solution,
    sweep_magical_identity,
)
from .phases import detect_phases, total_time_scaling
from .problem import DEFAULT_C, InitSpec, ProblemInstance, theory_epsilon, theory_eta
from .verification import (
    check_B_recursion,
    check_stage1_conditions,
    check_stage2_conditions,
    sweep_lemma_P,
    sweep_lemma_S,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_VIOLATION = 4

RNG_NAME = "numpy.random.default_rng (PCG64)"

_SWEEPABLE = ("seed", "delta", "delta_rel", "eta", "sigma_d")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; lists on sweepable keys mean axes."""

    m: int = 20
    n: int = 20
    d: int = 2
    singular_values: tuple | None = None
    kappa: float | None = None
    sigma_d: float | tuple = 1.0
    unitary_seed: int | None = None
    mode: str = "theory"
    epsilon: float | None = None
    eta: float | tuple | None = None
    k_eps: float = 1.0
    k_eta: float = 1.0
    c: float = DEFAULT_C
    e_b: float | None = None
    lam: float = 0.0
    seed: int | tuple = 1
    seeds: int | None = None
    T_max: int | None = None
    delta: float | tuple | None = None
    delta_rel: float | tuple | None = None
    record_every: int | None = None
    snapshot_every: int | None = None
    stage2_b_const: float = 1.0
    override_theory: bool = False

    def __post_init__(self):
        if self.mode not in ("theory", "practical"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if (self.singular_values is None) == (self.kappa is None):
            raise ValidationError(
                "give exactly one of singular_values or kappa"
            )
        if self.mode == "theory" and not self.override_theory and (
            self.epsilon is not None or self.eta is not None
        ):
            raise ValidationError(
                "explicit epsilon/eta in theory mode requires override_theory"
            )
        if self.mode == "practical" and (
            self.epsilon is None or self.eta is None
        ):
            raise ValidationError("practical mode requires epsilon and eta")
        if self.delta is not None and self.delta_rel is not None:
            raise ValidationError("give at most one of delta / delta_rel")

    @property
    def e_b_resolved(self):
        return 2 * self.c if self.e_b is None else self.e_b


_BOOL_KEYS = {"override_theory"}
_INT_KEYS = {"m", "n", "d", "seed", "seeds", "unitary_seed", "T_max",
             "record_every", "snapshot_every"}
_LIST_KEYS = {"singular_values"}
_KEY_ALIASES = {"lambda": "lam"}
_ALL_KEYS = set(ExperimentConfig.__dataclass_fields__)


def parse_config_text(text):
    """Parse flat ``key = value`` lines into a raw settings dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key not in _ALL_KEYS:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        raw[key] = _parse_value(key, value, lineno)
    return raw


def _parse_scalar(key, token):
    if key in _BOOL_KEYS:
        if token.lower() in ("true", "1", "yes"):
            return True
        if token.lower() in ("false", "0", "no"):
            return False
        raise ValidationError(f"bad boolean for {key}: {token!r}")
    if key == "mode":
        return token
    if key in _INT_KEYS:
        return int(token)
    return float(token)


def _parse_value(key, value, lineno):
    tokens = [t.strip() for t in value.split(",") if t.strip()]
    if not tokens:
        raise ValidationError(f"config line {lineno}: empty value for {key}")
    if len(tokens) == 1 and key not in _LIST_KEYS:
        return _parse_scalar(key, tokens[0])
    if key in _LIST_KEYS or key in _SWEEPABLE:
        return tuple(_parse_scalar(key, t) for t in tokens)
    raise ValidationError(f"config line {lineno}: {key} cannot be a list")


def load_config(path, overrides=None):
    with open(path) as fh:
        raw = parse_config_text(fh.read())
    raw.update(overrides or {})
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def config_hash(config):
    """sha256 over the canonical key=value serialization of the config."""
    items = []
    for key in sorted(ExperimentConfig.__dataclass_fields__):
        value = getattr(config, key)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        items.append(f"{key}={value!r}")
    return hashlib.sha256("\n".join(items).encode()).hexdigest()


def build_instance(config, sigma_d=None):
    """Instance from explicit singular values or the kappa generator.

    The kappa generator spaces d values linearly from kappa * sigma_d down
    to sigma_d; for d = 1 it produces the single value kappa * sigma_d
    (a rank-1 target always has condition number 1, so kappa acts as a
    scale there).
    """
    if sigma_d is None:
        sigma_d = config.sigma_d
    if config.singular_values is not None:
        sv = tuple(config.singular_values)
    elif config.d == 1:
        sv = (config.kappa * sigma_d,)
    else:
        sv = tuple(np.linspace(config.kappa * sigma_d, sigma_d, config.d))
    return ProblemInstance(m=config.m, n=config.n, d=config.d,
                           singular_values=np.array(sv))


def resolve_run_params(config, instance):
    """Concrete (epsilon, eta, delta, T_max, record_every, snapshot_every)."""
    if config.mode == "theory" and config.epsilon is None:
        eps = theory_epsilon(instance, config.c, k_eps=config.k_eps)
    else:
        eps = config.epsilon
    if config.mode == "theory" and config.eta is None:
        eta = theory_eta(instance, eps, k_eta=config.k_eta)
    else:
        eta = config.eta
    if eta is None or eps is None:
        raise ValidationError("epsilon/eta unresolved")
    eps, eta = float(eps), float(eta)
    delta = config.delta
    if config.delta_rel is not None:
        delta = float(config.delta_rel * instance.sigma_d ** 2)
    t_max = config.T_max
    if t_max is None:
        t_max = int(math.ceil(40.0 / (eta * instance.sigma_d)))
    record_every = config.record_every
    if record_every is None:
        record_every = max(1, min(int(0.01 / (eta * instance.sigma_d)),
                                  max(1, t_max // 50)))
    snapshot_every = config.snapshot_every
    if snapshot_every is None:
        snapshot_every = 1 if (t_max <= 10_000 and instance.d <= 6) else 0
    return eps, eta, delta, t_max, record_every, snapshot_every


@dataclass
class RunResult:
    config: ExperimentConfig
    instance: ProblemInstance
    epsilon: float
    eta: float
    delta: float | None
    seed: int
    trajectory: Trajectory | None = None
    phase: object = None
    stage1: object = None
    stage2: object = None
    b_recursion: object = None
    diverged: bool = False
    divergence_iteration: int | None = None

    @property
    def converged(self):
        return (self.trajectory is not None
                and self.trajectory.exit_reason == "loss_tol")


def run_one(config, seed=None, lam=None):
    """Execute one experiment: trajectory, phase report, condition checks."""
    seed = config.seed if seed is None else seed
    lam = config.lam if lam is None else lam
    if isinstance(seed, tuple):
        raise ValidationError("run needs a scalar seed (lists are sweep axes)")
    for key in ("delta", "delta_rel", "eta", "sigma_d"):
        if isinstance(getattr(config, key), tuple):
            raise ValidationError(f"run needs a scalar {key}")
    instance = build_instance(config)
    eps, eta, delta, t_max, record_every, snapshot_every = \
        resolve_run_params(config, instance)
    if config.unitary_seed is not None:
        instance = ProblemInstance(
            m=config.m, n=config.n, d=config.d,
            singular_values=instance.singular_values,
            phi=_haar(config.m, config.unitary_seed),
            psi=_haar(config.n, config.unitary_seed + 1),
        )
    result = RunResult(config=config, instance=instance, epsilon=eps,
                       eta=eta, delta=delta, seed=seed)
    spec = InitSpec(epsilon=eps, seed=seed, c=config.c)
    meta = {"epsilon": eps, "c": config.c, "e_b": config.e_b_resolved,
            "seed": seed, "mode": config.mode}
    try:
        traj = run_trajectory(instance, spec, eta=eta, T_max=t_max,
                              loss_tol=delta, record_every=record_every,
                              snapshot_every=snapshot_every, lam=lam,
                              meta=meta)
    except DivergenceError as err:
        result.trajectory = getattr(err, "trajectory", None)
        result.diverged = True
        result.divergence_iteration = err.iteration
        return result
    result.trajectory = traj
    diag_instance = traj.instance
    result.phase = detect_phases(traj, diag_instance, delta=delta,
                                 fit_rates=True)
    result.stage1 = check_stage1_conditions(
        traj, diag_instance, eps=eps, c=config.c, e_b=config.e_b_resolved,
        t0=result.phase.T0)
    if result.phase.T0 is not None:
        result.stage2 = check_stage2_conditions(
            traj, diag_instance, eta, result.phase.T0, eps=eps, c=config.c,
            b_const=config.stage2_b_const)
    if traj.snapshot_pairs():
        result.b_recursion = check_B_recursion(traj)
    return result


def _haar(dim, seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _write_json(path, payload, chash):
    payload = dict(payload)
    payload["config_hash"] = chash
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _params_hash(params):
    """sha256 over a canonical JSON rendering of command parameters."""
    text = json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _plot_series(path, series, chash, title, ylabel, ylog=True):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": chash}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, ts, ys in series:
            ts = np.asarray(ts, dtype=float)
            ys = np.asarray(ys, dtype=float)
            if ylog:
                keep = ys > 0
                ts, ys = ts[keep], ys[keep]
            ax.plot(ts, ys, label=label)
        if ylog:
            ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg",
                    metadata={"Date": None,
                              "Description": f"config_hash={chash}"})
        plt.close(fig)


def _emit_run_plots(out, traj, chash, twin=None):
    for col in ("loss", "sigma_d_A", "B_fro", "Delta"):
        _plot_series(os.path.join(out, f"{col}.svg"),
                     [(col, traj.column("t"), traj.column(col))],
                     chash, col, col)
    if twin is not None:
        _plot_series(
            os.path.join(out, "balance_compare.svg"),
            [("regularized", traj.column("t"), traj.column("balance_gap")),
             ("vanilla", twin.column("t"), twin.column("balance_gap"))],
            chash, "balance gap: regularized vs vanilla", "balance_gap")


def _meta_payload(result, chash):
    cfg = asdict(result.config)
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}
    traj = result.trajectory
    return {
        "config": cfg,
        "seed": result.seed,
        "epsilon": result.epsilon,
        "eta": result.eta,
        "delta": result.delta,
        "rng": RNG_NAME,
        "backend": backend.BACKEND,
        "versions": {"lowrank_lab": __version__, "numpy": np.__version__},
        "exit_reason": traj.exit_reason if traj is not None else "divergence",
        "diverged": result.diverged,
        "divergence_iteration": result.divergence_iteration,
    }


def cmd_run(config, out, no_plots=False, seed=None):
    """Single seeded run; writes trajectory, reports, metadata, plots."""
    os.makedirs(out, exist_ok=True)
    chash = config_hash(config)
    result = run_one(config, seed=seed)
    _write_json(os.path.join(out, "run_meta.json"),
                _meta_payload(result, chash), chash)
    if result.trajectory is not None:
        result.trajectory.write_csv(os.path.join(out, "trajectory.csv"),
                                    config_hash=chash)
    if result.diverged:
        print(f"divergence at iteration {result.divergence_iteration}",
              file=sys.stderr)
        return EXIT_DIVERGENCE
    reports = {"stage1": result.stage1.to_json_dict()}
    if result.stage2 is not None:
        reports["stage2"] = result.stage2.to_json_dict()
    if result.b_recursion is not None:
        reports["b_recursion"] = result.b_recursion.to_json_dict()
    _write_json(os.path.join(out, "phase_report.json"),
                result.phase.to_json_dict(), chash)
    _write_json(os.path.join(out, "conditions.json"), reports, chash)
    twin = None
    if result.config.lam != 0.0:
        twin_result = run_one(config, seed=seed, lam=0.0)
        if twin_result.trajectory is not None:
            twin = twin_result.trajectory
            twin.write_csv(os.path.join(out, "trajectory_lambda0.csv"),
                           config_hash=chash)
    if not no_plots:
        _emit_run_plots(out, result.trajectory, chash, twin=twin)
    return EXIT_OK


def _expand_axes(config):
    """Cartesian sweep rows, first axis slowest, in declaration order."""
    axes = []
    if config.seeds is not None:
        if isinstance(config.seed, tuple):
            raise ValidationError("give either a seed list or a seeds count")
        axes.append(("seed", tuple(config.seed + i
                                   for i in range(config.seeds))))
    for key in _SWEEPABLE:
        value = getattr(config, key)
        if isinstance(value, tuple):
            axes.append((key, value))
    rows = [{}]
    for key, values in axes:
        rows = [dict(r, **{key: v}) for r in rows for v in values]
    return axes, rows


def _row_config(config, row):
    subs = dict(row)
    subs.pop("seed", None)
    cfg = replace(config, seeds=None, **subs) if subs else \
        replace(config, seeds=None)
    return cfg


def cmd_sweep(config, out, no_plots=False):
    """Grid of runs over the list-valued keys; aggregate CSV plus fits."""
    del no_plots
    os.makedirs(out, exist_ok=True)
    chash = config_hash(config)
    axes, rows = _expand_axes(config)
    if not rows:
        raise ValidationError("sweep grid is empty")
    max_workers = int(os.environ.get("LOWRANK_LAB_THREADS", "0")) or \
        min(8, os.cpu_count() or 1)

    def run_row(row):
        cfg = _row_config(config, row)
        seed = row.get("seed", config.seed)
        try:
            return run_one(cfg, seed=seed)
        except LowrankLabError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(run_row, rows))

    columns = ("row", "seed", "eta", "delta", "sigma_d_min", "T1", "T2",
               "T0", "Tf", "final_t", "final_loss", "converged",
               "stage1_ok", "stage2_ok", "diverged", "growth_slope",
               "decay_slope")
    any_diverged = False
    table = []
    for idx, (row, res) in enumerate(zip(rows, results)):
        if isinstance(res, Exception):
            raise res
        ph = res.phase
        rec = {
            "row": idx,
            "seed": res.seed,
            "eta": res.eta,
            "delta": res.delta,
            "sigma_d_min": res.instance.sigma_d,
            "T1": None if ph is None else ph.T1,
            "T2": None if ph is None else ph.T2,
            "T0": None if ph is None else ph.T0,
            "Tf": None if ph is None else ph.Tf,
            "final_t": None if res.trajectory is None else res.trajectory.final.t,
            "final_loss": None if res.trajectory is None else res.trajectory.final.loss,
            "converged": res.converged,
            "stage1_ok": None if res.stage1 is None else res.stage1.all_hold,
            "stage2_ok": None if res.stage2 is None else res.stage2.all_hold,
            "diverged": res.diverged,
            "growth_slope": None if ph is None else ph.growth_slope,
            "decay_slope": None if ph is None else ph.decay_slope,
        }
        any_diverged |= res.diverged
        table.append(rec)

    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write(",".join(columns) + "\n")
        for rec in table:
            fh.write(",".join("" if rec[c] is None else repr(rec[c])
                              if isinstance(rec[c], float) else str(rec[c])
                              for c in columns) + "\n")

    summary = {
        "rows": len(table),
        "axes": {k: list(v) for k, v in axes},
        "success_rate": sum(r["converged"] for r in table) / len(table),
        "any_diverged": any_diverged,
    }
    delta_axis = any(k in ("delta", "delta_rel") for k, _ in axes)
    if delta_axis:
        fits = {}
        groups = {}
        for rec in table:
            groups.setdefault((rec["eta"], rec["seed"]), []).append(rec)
        for (eta_val, seed_val), recs in sorted(groups.items()):
            pts = [(r["delta"], r["Tf"], r["T0"]) for r in recs]
            if len(pts) >= 4:
                try:
                    fit = total_time_scaling(pts)
                except LowrankLabError:
                    continue
                fits[f"eta={eta_val!r},seed={seed_val}"] = dict(
                    fit.to_json_dict(), eta=eta_val, seed=seed_val)
        summary["scaling_fits"] = fits
        slopes = {}
        for fit in fits.values():
            slopes.setdefault(fit["eta"], []).append(fit["slope"])
        if len(slopes) == 2:
            (eta_hi, s_hi), (eta_lo, s_lo) = sorted(slopes.items(),
                                                    reverse=True)
            summary["slope_ratio_eta_halved"] = float(
                np.mean(s_lo) / np.mean(s_hi))
    _write_json(os.path.join(out, "sweep_summary.json"), summary, chash)
    return EXIT_DIVERGENCE if any_diverged else EXIT_OK


def cmd_verify_lemmas(samples, d_max, seed, betas=(0.25, 0.5, 0.75),
                      out=None):
    """Randomized sweeps of the two recursion bounds and the
    commuting-factor identity; exit 4 on any violation."""
    for beta in betas:
        if not 0 < beta < 1:
            raise ValidationError(f"beta {beta} outside (0, 1)")
    res_s = sweep_lemma_S(samples, d_max, seed, betas=tuple(betas))
    res_p = sweep_lemma_P(samples, d_max, seed + 10_000, betas=tuple(betas))
    identity_samples = min(samples, 100) if samples else 0
    worst_ident, ident_viol = sweep_magical_identity(
        identity_samples, d_max, seed + 20_000)
    report = {
        "samples": samples,
        "d_max": d_max,
        "seed": seed,
        "betas": list(betas),
        "S_recursion": {"checked": res_s.checked, "skipped": res_s.skipped,
                        "violations": res_s.violations,
                        "worst_slack": res_s.worst_slack
                        if res_s.checked else None},
        "P_recursion": {"checked": res_p.checked, "skipped": res_p.skipped,
                        "violations": res_p.violations,
                        "worst_slack": res_p.worst_slack
                        if res_p.checked else None},
        "commuting_identity": {"samples": identity_samples,
                               "worst_residual_over_sigma1": worst_ident,
                               "violations": ident_viol},
    }
    total = res_s.violations + res_p.violations + ident_viol
    if out:
        os.makedirs(out, exist_ok=True)
        _write_json(os.path.join(out, "lemma_report.json"), report,
                    _params_hash({"samples": samples, "d_max": d_max,
                                  "seed": seed, "betas": list(betas)}))
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_VIOLATION if total else EXIT_OK


def cmd_oracle_compare(d=2, kappa=2.0, t_end=None, dt=None, seed=0,
                       out=None):
    """Closed forms against RK4 plus the complementarity residual.

    Tolerances: 1e-6 (S closed form vs RK4, relaxed by (dt/dt_ref)^4 for
    coarse dt), 1e-6 (rank-1 vs scalar RK4), 1e-9 sigma_1 (S+P-Sigma on a
    four-point time grid).
    """
    rng = np.random.default_rng(seed)
    sv = np.linspace(kappa, 1.0, d) if d > 1 else np.array([float(kappa)])
    sigma = np.diag(sv)
    sigma_1, sigma_d = float(sv[0]), float(sv[-1])
    dt_ref = 1e-4 / sigma_1
    if dt is None:
        dt = dt_ref
    if t_end is None:
        t_end = 1.0 / sigma_d
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q *= np.sign(np.diag(r))
    W = (q * rng.uniform(0.1, 0.9, d)) @ q.T
    root = np.sqrt(sigma)
    inputs = ClosedFormInputs(sigma=sigma, S0=root @ W @ root)

    S_cf = closed_form_S(inputs, t_end)
    S_rk = integrate_matrix_ode(
        lambda S: (sigma - S) @ S + S @ (sigma - S), inputs.S0, t_end, dt)
    err_s = float(np.linalg.norm(S_cf - S_rk) / np.linalg.norm(S_cf))

    a0 = 0.1 * math.sqrt(sigma_d)
    t1 = 3.0 / sigma_d
    s_cf = rank1_solution(sigma_d, a0, t1)
    a_rk = integrate_matrix_ode(
        lambda a: (sigma_d - a ** 2) * a, np.array(a0), t1, dt)
    err_r = float(abs(s_cf - a_rk ** 2) / s_cf)

    err_id = 0.0
    for t in (0.0, 0.1 / sigma_d, 1.0 / sigma_d, 10.0 / sigma_d):
        resid = np.linalg.norm(
            closed_form_S(inputs, t) + closed_form_P(inputs, t) - sigma)
        err_id = max(err_id, float(resid))

    tol_s = 1e-6 * max(1.0, (dt / dt_ref) ** 4)
    report = {
        "d": d, "kappa": kappa, "t_end": t_end, "dt": dt, "seed": seed,
        "closed_form_S_vs_rk4": {"error": err_s, "tolerance": tol_s},
        "rank1_vs_rk4": {"error": err_r, "tolerance": 1e-6},
        "complement_identity": {"error": err_id,
                                "tolerance": 1e-9 * sigma_1},
    }
    ok = err_s <= tol_s and err_r <= 1e-6 and err_id <= 1e-9 * sigma_1
    report["pass"] = ok
    if out:
        os.makedirs(out, exist_ok=True)
        _write_json(os.path.join(out, "oracle_report.json"), report,
                    _params_hash({"d": d, "kappa": kappa, "t_end": t_end,
                                  "dt": dt, "seed": seed}))
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_report(run_dir, out=None, no_plots=False):
    """Post-process a stored run directory; rejects hash mismatches."""
    out = out or run_dir
    meta_path = os.path.join(run_dir, "run_meta.json")
    with open(meta_path) as fh:
        meta = json.load(fh)
    records, csv_hash = read_trajectory_csv(
        os.path.join(run_dir, "trajectory.csv"))
    chash = meta.get("config_hash")
    if csv_hash != chash:
        raise ValidationError(
            f"config hash mismatch: meta {chash} vs trajectory {csv_hash}"
        )
    cfg_dict = dict(meta["config"])
    for key, value in cfg_dict.items():
        if isinstance(value, list):
            cfg_dict[key] = tuple(value)
    config = ExperimentConfig(**cfg_dict)
    instance = build_instance(config)
    traj = Trajectory(instance=instance, eta=meta["eta"], records=records,
                      exit_reason=meta.get("exit_reason", ""),
                      meta={"epsilon": meta["epsilon"], "c": config.c})
    phase = detect_phases(traj, instance, delta=meta.get("delta"),
                          fit_rates=True)
    stage1 = check_stage1_conditions(traj, instance, eps=meta["epsilon"],
                                     c=config.c, e_b=config.e_b_resolved,
                                     t0=phase.T0)
    reports = {"stage1": stage1.to_json_dict()}
    if phase.T0 is not None:
        stage2 = check_stage2_conditions(traj, instance, meta["eta"],
                                         phase.T0, eps=meta["epsilon"],
                                         c=config.c,
                                         b_const=config.stage2_b_const)
        reports["stage2"] = stage2.to_json_dict()
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "phase_report.json"),
                phase.to_json_dict(), chash)
    _write_json(os.path.join(out, "conditions.json"), reports, chash)
    if not no_plots:
        _emit_run_plots(out, traj, chash)
    return EXIT_OK


def _add_common(parser):
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--no-plots", action="store_true")
    parser.add_argument("--override-theory", action="store_true",
                        help="allow explicit epsilon/eta in theory mode")


def _config_from_args(args):
    overrides = {}
    if args.override_theory:
        overrides["override_theory"] = True
    return load_config(args.config, overrides)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lowrank-lab",
        description="gradient-descent laboratory for low-rank factorization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single seeded experiment")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="grid of experiments")
    _add_common(p_sweep)

    p_lem = sub.add_parser("verify-lemmas", help="randomized bound sweeps")
    p_lem.add_argument("--samples", type=int, default=1000)
    p_lem.add_argument("--d-max", type=int, default=6)
    p_lem.add_argument("--seed", type=int, default=0)
    p_lem.add_argument("--betas", default="0.25,0.5,0.75")
    p_lem.add_argument("--out", default=None)

    p_or = sub.add_parser("oracle-compare", help="closed forms vs RK4")
    p_or.add_argument("--d", type=int, default=2)
    p_or.add_argument("--kappa", type=float, default=2.0)
    p_or.add_argument("--t-end", type=float, default=None)
    p_or.add_argument("--dt", type=float, default=None)
    p_or.add_argument("--seed", type=int, default=0)
    p_or.add_argument("--out", default=None)

    p_rep = sub.add_parser("report", help="post-process a run directory")
    p_rep.add_argument("--run", required=True, help="run directory")
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--no-plots", action="store_true")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(_config_from_args(args), args.out,
                           no_plots=args.no_plots, seed=args.seed)
        if args.command == "sweep":
            config = _config_from_args(args)
            if args.seed is not None:
                config = replace(config, seed=args.seed)
            return cmd_sweep(config, args.out, no_plots=args.no_plots)
        if args.command == "verify-lemmas":
            betas = tuple(float(b) for b in str(args.betas).split(","))
            return cmd_verify_lemmas(args.samples, args.d_max, args.seed,
                                     betas=betas, out=args.out)
        if args.command == "oracle-compare":
            return cmd_oracle_compare(d=args.d, kappa=args.kappa,
                                      t_end=args.t_end, dt=args.dt,
                                      seed=args.seed, out=args.out)
        if args.command == "report":
            return cmd_report(args.run, out=args.out,
                              no_plots=args.no_plots)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
