"""Monte-Carlo studies of random initialisation.

Every trial draws its own generator from ``SeedSequence(master, spawn_key=(i,))``
so a report does not depend on trial order or on how trials are split among
workers.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .activations import assumption_profile, parse_activation
from .dynamics import (FlowConfig, flow_population_batch, flow_sphere_reduced_batch,
                       plane_rule, default_plane_order, population_gradient_batch)
from .errors import ConfigurationError
from .hermite import expand
from .landscape import AssumptionBound, gaussian_density_floor, sphere_risk

SUCCESS_RISK = 1e-6
NEAR_RISK = 1e-2
THEOREM1_PLANE_ORDER = 48
ENVELOPE_SLACK = 1.05
BAD_MIN = -2.0 / 3.0
SCENARIOS = ("constant_prob", "high_prob", "counterexample", "theorem1")


# --------------------------------------------------------------------------
# Seeds and initialisations
# --------------------------------------------------------------------------

def trial_seed(master: int, i: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(i,))
    return int(ss.generate_state(1, np.uint64)[0])


def teacher(d: int) -> np.ndarray:
    w = np.zeros(d)
    w[0] = 1.0
    return w


def sphere_init(d: int, seed) -> np.ndarray:
    """Uniform point on the unit sphere in R^d."""
    if d < 2:
        raise ValueError("d must be >= 2")
    g = np.random.default_rng(seed).standard_normal(d)
    return g / np.linalg.norm(g)


def gaussian_init(d: int, eta: float, seed) -> np.ndarray:
    if d < 2:
        raise ValueError("d must be >= 2")
    if not eta > 0:
        raise ValueError("eta must be positive")
    return eta * np.random.default_rng(seed).standard_normal(d)


def overlap_cdf(z, d: int):
    """CDF of ``w.w*`` for ``w`` uniform on the sphere: density ~ (1 - z^2)^((d-3)/2)."""
    k = 0.5 * (d - 1)
    return stats.beta.cdf((np.asarray(z) + 1.0) / 2.0, k, k)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    name: str
    trials: int
    successes: int
    fraction: float
    std_error: float
    theoretical_bound: float
    direction: str  # ">=", "<=" or "==" (two-sided)
    passed: bool
    seeds: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name, success, bound, direction, seeds, details=None, extra_ok=True):
        success = np.asarray(success, dtype=bool)
        n = int(success.size)
        k = int(success.sum())
        frac = k / n if n else 0.0
        se = math.sqrt(frac * (1 - frac) / n) if n else 0.0
        if direction == ">=":
            ok = frac >= bound - 3 * se
        elif direction == "<=":
            ok = frac <= bound + 3 * se
        elif direction == "==":
            ok = abs(frac - bound) <= 3 * se
        else:
            raise ValueError(f"unknown direction {direction!r}")
        return cls(name, n, k, frac, se, float(bound), direction, bool(ok and extra_ok),
                   [int(s) for s in seeds], dict(details or {}))

    def to_json(self) -> str:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return json.dumps(out, default=_json_default, sort_keys=False)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: {self.successes}/{self.trials} = {self.fraction:.4f} "
                f"(se {self.std_error:.4f}) vs bound {self.direction} {self.theoretical_bound:.4f} "
                f"[{status}]")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


# --------------------------------------------------------------------------
# Initialisation-law checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InitLawReport:
    d: int
    draws: int
    ks: float
    ks_pass: bool
    delta: float
    tail_fraction: float
    tail_se: float
    tail_bound: float
    tail_exact: float
    tail_pass: bool


def init_law_check(d: int = 10, draws: int = 10_000, seed: int = 0, delta: float = 0.3,
                   ks_tol: float = 0.02) -> InitLawReport:
    """KS distance of sphere overlaps to their law, and the lower-tail bound ``0.5 e^{-d delta^2}``."""
    a0 = np.array([sphere_init(d, trial_seed(seed, i))[0] for i in range(draws)])
    ks = float(stats.kstest(a0, lambda z: overlap_cdf(z, d)).statistic)
    frac = float(np.mean(a0 < -delta))
    se = math.sqrt(frac * (1 - frac) / draws)
    bound = 0.5 * math.exp(-d * delta * delta)
    return InitLawReport(d, draws, ks, ks <= ks_tol, delta, frac, se, bound,
                         float(overlap_cdf(-delta, d)), frac <= bound + 3 * se)


def gaussian_init_check(d: int = 10, eta: float | None = None, draws: int = 10_000,
                        seed: int = 0) -> ExperimentReport:
    """Fraction of ``N(0, eta^2 I)`` draws with ``|w0 - w*|^2 <= 1 - 2 eta^2 d``."""
    eta = eta if eta is not None else 1.0 / (math.sqrt(2) * d)
    seeds = [trial_seed(seed, i) for i in range(draws)]
    ws = teacher(d)
    dist = np.array([np.linalg.norm(gaussian_init(d, eta, s) - ws) for s in seeds])
    radius = 1 - 2 * eta * eta * d
    bound = 0.5 - eta * d / 4 - 1.2 ** (-d)
    return ExperimentReport.build(
        "gaussian_init", dist**2 <= radius, bound, ">=", seeds,
        {"eta": eta, "radius": radius, "fraction_unsquared": float(np.mean(dist <= radius))})


def geometry_lemma_check(d: int = 10, pairs: int = 10_000, seed: int = 0) -> int:
    """Number of points with ``|w - w*| < 1`` whose angle to ``w*`` is not acute (expected 0)."""
    rng = np.random.default_rng(seed)
    ws = teacher(d)
    g = rng.standard_normal((pairs, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    W = ws + (rng.random(pairs) ** (1 / d))[:, None] * g
    W = W[np.linalg.norm(W - ws, axis=1) < 1]
    cos = (W @ ws) / np.linalg.norm(W, axis=1)
    return int(np.sum(np.arccos(np.clip(cos, -1, 1)) >= math.pi / 2))


# --------------------------------------------------------------------------
# Probability studies
# --------------------------------------------------------------------------

def _workers(workers):
    return max(1, int(workers or 1))


def _sphere_overlaps(d, seeds):
    return np.array([sphere_init(d, s)[0] for s in seeds])


def _run_reduced(cf, a0, cfg, workers):
    """Batched reduced flows; near-converged trials get up to 10x the horizon."""
    chunks = np.array_split(np.arange(a0.size), _workers(workers))
    chunks = [c for c in chunks if c.size]

    def run(idx):
        return flow_sphere_reduced_batch(cf, a0[idx], cfg)

    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(run, chunks))
    times = parts[0].times
    paths = np.empty((times.size, a0.size))
    for idx, p in zip(chunks, parts):
        paths[:, idx] = p.a
    final = paths[-1].copy()
    horizon = float(times[-1])
    for _ in range(9):
        risk = sphere_risk(cf, final)
        pending = (risk > SUCCESS_RISK) & (risk <= NEAR_RISK)
        if not pending.any():
            break
        ext = flow_sphere_reduced_batch(cf, final[pending], cfg)
        final[pending] = ext.final
        horizon += cfg.T
    return times, paths, final, horizon


def _envelope_ok(times, paths, envelope, burn_in=1.0):
    mask = times >= burn_in
    env = envelope(times[mask])
    if env.ndim == 1:
        env = env[:, None]
    return np.all(1.0 - paths[mask] <= ENVELOPE_SLACK * env + 1e-12, axis=0)


def _study_cfg(cfg, T=60.0):
    return cfg or FlowConfig(h=1e-2, T=T, record_every=10, stop_early=False)


def run_probability_study(scenario: str, spec=None, d: int = 20, trials: int = 500,
                          cfg: FlowConfig | None = None, seed: int = 0, delta: float = 0.5,
                          eta: float | None = None, workers: int = 1, K: int = 40) -> ExperimentReport:
    """Run one Monte-Carlo scenario and compare the success rate to its bound."""
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if trials < 1 or d < 2:
        raise ConfigurationError("need trials >= 1 and d >= 2")
    if isinstance(spec, str):
        spec = parse_activation(spec)
    seeds = [trial_seed(seed, i) for i in range(trials)]
    if scenario == "counterexample":
        if spec is not None and spec.id != "hermite:0,0,1,1":
            raise ConfigurationError("counterexample is defined for hermite:0,0,1,1 only")
        return _counterexample(d, seeds, _study_cfg(cfg), workers, K)
    if spec is None:
        raise ConfigurationError(f"scenario {scenario} needs an activation")
    if scenario == "high_prob":
        return _high_prob(spec, d, seeds, _study_cfg(cfg), delta, workers, K)
    if scenario == "constant_prob":
        return _constant_prob(spec, d, seeds, _study_cfg(cfg, T=200.0), delta, workers, K)
    return _theorem1(spec, d, seeds, cfg, eta, workers)


def _counterexample(d, seeds, cfg, workers, K):
    cf = expand(parse_activation("hermite:0,0,1,1"), K).correlation()
    a0 = _sphere_overlaps(d, seeds)
    _, _, final, horizon = _run_reduced(cf, a0, cfg, workers)
    bad = np.abs(final - BAD_MIN) <= 1e-2
    good = sphere_risk(cf, final) <= SUCCESS_RISK
    return ExperimentReport.build(
        "counterexample", bad, 0.5, "==", seeds,
        {"d": d, "to_global": int(good.sum()), "negative_init": int(np.sum(a0 < 0)),
         "bad_risk": float(sphere_risk(cf, BAD_MIN)), "horizon": horizon})


def _high_prob(spec, d, seeds, cfg, delta, workers, K):
    cf = expand(spec, K).correlation()
    q = cf.q_sigma(delta)
    a0 = _sphere_overlaps(d, seeds)
    times, paths, final, horizon = _run_reduced(cf, a0, cfg, workers)
    converged = sphere_risk(cf, final) <= SUCCESS_RISK
    stated = _envelope_ok(times, paths, lambda t: np.exp(-q * t / 2))
    # the same rate carrying the initial factor 1 - a0
    scaled = _envelope_ok(times, paths, lambda t: np.exp(-q * t / 2)[:, None] * (1 - a0)[None, :])
    success = converged & stated
    bound = 1 - 0.5 * math.exp(-d * delta * delta)
    details = {"d": d, "delta": delta, "q_sigma": q, "converged": int(converged.sum()),
               "envelope_violations": int(np.sum(converged & ~stated)),
               "scaled_envelope_violations": int(np.sum(converged & ~scaled)),
               "largest_violating_a0": float(a0[converged & ~stated].max()) if np.any(converged & ~stated) else None,
               "init_above_minus_delta": int(np.sum(a0 >= -delta)), "horizon": horizon,
               "rate_exponentially_small": bool(abs(q) < 1e-8)}
    return ExperimentReport.build("high_prob", success, bound, ">=", seeds, details)


def _constant_prob(spec, d, seeds, cfg, delta, workers, K):
    if not 0 < delta < 0.5:
        raise ConfigurationError("constant_prob needs delta in (0, 1/2)")
    cf = expand(spec, K).correlation()
    k = cf.first_nonzero()
    if k == 0:
        raise ConfigurationError("activation has no non-constant Hermite component")
    ck = k * cf.power_coeffs[k] * (delta / d) ** (k - 1)
    a0 = _sphere_overlaps(d, seeds)
    times, paths, final, horizon = _run_reduced(cf, a0, cfg, workers)
    converged = sphere_risk(cf, final) <= SUCCESS_RISK
    event = a0 >= delta / d
    rate_ok = _envelope_ok(times, paths, lambda t: np.exp(-ck * t))
    success = event & converged & rate_ok
    pos = a0 > 0
    frac_pos = float(np.mean(converged[pos])) if pos.any() else 0.0
    se_pos = math.sqrt(frac_pos * (1 - frac_pos) / max(1, pos.sum()))
    uncond = float(np.mean(converged))
    details = {"d": d, "delta": delta, "k": k, "c_k": float(ck), "C": 1.0,
               "event_trials": int(event.sum()), "rate_violations": int(np.sum(event & converged & ~rate_ok)),
               "positive_init": int(pos.sum()), "converged_given_positive": frac_pos,
               "converged_given_positive_pass": frac_pos >= 0.5 - 3 * se_pos,
               "converged_overall": uncond, "horizon": horizon}
    extra = details["converged_given_positive_pass"]
    if d >= 50:
        details["overall_pass"] = uncond >= 0.4
        extra = extra and details["overall_pass"]
    return ExperimentReport.build("constant_prob", success, 0.5 - delta / math.sqrt(d), ">=",
                                  seeds, details, extra_ok=extra)


def _theorem1(spec, d, seeds, cfg, eta, workers):
    """Gaussian initialisation near the origin followed by the population flow in R^d.

    A trial succeeds when the initial point satisfies ``|w0 - w*|^2 <= 1 - 2 eta^2 d``,
    the flow reaches risk 1e-6 and ``|w_t - w*|`` never increases.  Only trials
    meeting the initial condition are integrated; the rest fail by definition.
    """
    eta = eta if eta is not None else 1.0 / (math.sqrt(2) * d)
    cfg = cfg or FlowConfig(h=0.1, T=40.0, record_every=1, stop_early=False)
    ws = teacher(d)
    W0 = np.array([gaussian_init(d, eta, s) for s in seeds])
    dist0 = np.linalg.norm(W0 - ws, axis=1)
    radius = 1 - 2 * eta * eta * d
    start = dist0**2 <= radius
    success = np.zeros(len(seeds), dtype=bool)
    monotone = np.zeros(len(seeds), dtype=bool)
    terminal_risk = np.full(len(seeds), np.nan)
    idx = np.flatnonzero(start)
    if idx.size:
        # smooth activations are resolved to ~1e-14 with 48 nodes per axis
        m = THEOREM1_PLANE_ORDER if spec.twice_differentiable else default_plane_order(spec)
        rule2d = plane_rule(m)
        chunks = [c for c in np.array_split(idx, _workers(workers)) if c.size]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: flow_population_batch(spec, W0[c], ws, cfg, rule2d), chunks))
        for c, p in zip(chunks, parts):
            dist = np.linalg.norm(p.W - ws[None, None, :], axis=2)  # (N, B)
            monotone[c] = np.all(np.diff(dist**2, axis=0) <= 1e-10, axis=0)
            terminal_risk[c] = p.risks[-1]
        success = start & (terminal_risk <= SUCCESS_RISK) & monotone
    prof = assumption_profile(spec, alpha=1.0)
    lam = AssumptionBound(1.0, gaussian_density_floor(1.0), prof.gamma, math.sqrt(prof.zeta_sq),
                          1.0, math.pi / 2).lam
    details = {"d": d, "eta": eta, "radius": radius, "init_event": int(start.sum()),
               "fraction_unsquared": float(np.mean(dist0 <= radius)),
               "monotone": int(np.sum(monotone & start)),
               "converged": int(np.sum(start & (terminal_risk <= SUCCESS_RISK))),
               "lambda_half_pi": lam, "bound_vacuous": lam <= 0}
    bound = 0.5 - eta * d / 4 - 1.2 ** (-d)
    return ExperimentReport.build("theorem1", success, bound, ">=", seeds, details)


# --------------------------------------------------------------------------
# Assumption check on the gradient inner product
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Assumption1Report:
    probes: int
    min_ratio: float
    lam: float
    holds: bool
    mc_ratio: float
    mc_se: float
    worst_w: tuple


def assumption1_verify(spec, dist: str = "gaussian", d: int = 10, probe_count: int = 500,
                       mc_samples: int = 100_000, delta: float = math.pi / 2,
                       bound: AssumptionBound | None = None, seed: int = 0,
                       max_norm: float = 2.0) -> Assumption1Report:
    """Smallest ``<grad R(w), w - w*> / |w - w*|^2`` over probes with angle <= pi - delta.

    The quadrature minimum is compared with ``bound.lam``; a Monte-Carlo
    estimate at the worst probe is reported alongside as a cross-check.
    """
    if dist != "gaussian":
        raise ConfigurationError("only Gaussian inputs are supported")
    if not 0 < delta < math.pi:
        raise ConfigurationError("delta must lie in (0, pi)")
    if isinstance(spec, str):
        spec = parse_activation(spec)
    if bound is None:
        prof = assumption_profile(spec, alpha=1.0)
        bound = AssumptionBound(1.0, gaussian_density_floor(1.0), prof.gamma,
                                math.sqrt(prof.zeta_sq), 1.0, delta)
    rng = np.random.default_rng(seed)
    ws = teacher(d)
    theta = rng.uniform(0.0, math.pi - delta, probe_count)
    rho = rng.uniform(0.05, max_norm, probe_count)
    u = rng.standard_normal((probe_count, d))
    u[:, 0] = 0.0
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    W = rho[:, None] * (np.cos(theta)[:, None] * ws[None, :] + np.sin(theta)[:, None] * u)
    G = population_gradient_batch(spec, W, ws)
    diff = W - ws[None, :]
    ratio = np.sum(G * diff, axis=1) / np.sum(diff * diff, axis=1)
    i = int(np.argmin(ratio))
    w = W[i]
    X = rng.standard_normal((mc_samples, d))
    pre = X @ w
    terms = (spec._v(pre) - spec._v(X[:, 0])) * spec._d(pre) * (X @ diff[i]) / (diff[i] @ diff[i])
    return Assumption1Report(probe_count, float(ratio[i]), float(bound.lam), bool(ratio[i] >= bound.lam),
                             float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(mc_samples)),
                             tuple(float(x) for x in w))
