"""The acceptance suite: sixteen numbered checks with pinned tolerances.

Each check returns a :class:`CheckResult`; ``run_all`` executes a selection and
``format_table`` renders one line per check.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .activations import parse_activation
from .dynamics import FlowConfig, flow_1d, flow_sphere_reduced, population_gradient_batch
from .empirical import (EmpiricalContext, GaussianDataset, empirical_flow_sphere,
                        empirical_flow_zero_init, noise_floor, sup_gap)
from .experiments import (geometry_lemma_check, init_law_check, run_probability_study,
                          sphere_init, teacher, trial_seed)
from .hermite import default_rule, expand, gauss_hermite
from .landscape import offsphere_risk, r_sigma, region_integral_check, scan_1d, sphere_risk


@dataclass(frozen=True)
class CheckResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return (f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.title}: "
                f"{self.detail} ({self.seconds:.1f}s)")


def check_01():
    spec = parse_activation("relu")
    t0 = time.perf_counter()
    betas = np.linspace(0.0, 1.0, 101)
    err = float(np.max(np.abs(r_sigma(spec, betas, gauss_hermite(200)) - (betas - 1) ** 2 / 4)))
    dt = time.perf_counter() - t0
    return err <= 1e-8 and dt < 1.0, f"max err {err:.2e} <= 1e-8, {dt:.3f}s < 1s"


def check_02():
    tr = flow_1d(parse_activation("relu"), 0.0, FlowConfig(h=1e-3, T=10.0, stop_early=False))
    err = float(np.max(np.abs((1 - tr.states) - np.exp(-tr.times / 2))))
    return err <= 1e-4, f"max |(1-beta_t) - e^(-t/2)| = {err:.2e} <= 1e-4"


def check_03():
    errs = []
    for f in (1, 2, 3):
        spec = parse_activation(f"sine:{f}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # K=1 truncation is intended
            c1 = expand(spec, 1, default_rule(spec)).coeffs[1]
        exact = f * math.exp(-f * f / 2)
        errs.append(abs(c1 - exact) / exact)
    return max(errs) <= 1e-6, "rel err " + ", ".join(f"{e:.1e}" for e in errs) + " <= 1e-6"


def check_04():
    n2 = len(scan_1d(parse_activation("sine:2")).interior_minima(0, 1, exclude_global=1e-10))
    n1 = len(scan_1d(parse_activation("sine:1")).interior_minima(0, 1, exclude_global=1e-10))
    return n2 >= 1 and n1 == 0, f"sine:2 has {n2} bad minima (>=1), sine:1 has {n1} (0)"


def check_05():
    cf = expand(parse_activation("hermite:0,0,1,1")).correlation()
    dc = cf.deriv_coeffs
    coeff_err = max(abs(dc[1] - 2), abs(dc[2] - 3))
    risk_err = abs(float(sphere_risk(cf, -2 / 3)) - 50 / 27)
    end = float(flow_sphere_reduced(cf, -0.1).final)
    ok = coeff_err <= 1e-8 and risk_err <= 1e-10 and abs(end + 2 / 3) <= 1e-4
    return ok, f"coeff err {coeff_err:.1e}, risk err {risk_err:.1e}, a_T + 2/3 = {end + 2 / 3:.1e}"


def check_06(workers=1):
    t0 = time.perf_counter()
    rep = run_probability_study("counterexample", None, d=50, trials=2000, seed=6, workers=workers)
    dt = time.perf_counter() - t0
    tol = 3 * math.sqrt(0.25 / 2000)
    ok = abs(rep.fraction - 0.5) <= tol and dt < 60
    return ok, f"fraction {rep.fraction:.4f} within 0.5 +- {tol:.4f}, {dt:.1f}s < 60s"


def check_07():
    rule = gauss_hermite(400)
    q = {name: expand(parse_activation(name), 40, rule).correlation().q_sigma(1.0)
         for name in ("relu", "silu", "gelu")}
    ok = abs(q["relu"]) <= 2e-3 and q["silu"] > 0 and q["gelu"] > 0
    return ok, f"|q(1)| relu {abs(q['relu']):.2e} (<= 2e-3), silu {q['silu']:.4f} (>0), gelu {q['gelu']:.4f} (>0)"


def check_08(workers=1):
    rep = run_probability_study("high_prob", "silu", d=20, trials=500, delta=0.5, seed=8, workers=workers)
    conv = rep.details["converged"] / rep.trials
    bound = rep.theoretical_bound
    se = math.sqrt(conv * (1 - conv) / rep.trials)
    viol = rep.details["envelope_violations"]
    ok = conv >= bound - 3 * se and viol == 0
    return ok, (f"converged {conv:.3f} (>= {bound:.4f} - 3se), envelope violations {viol}/"
                f"{rep.details['converged']} (0); with (1-a0) factor: {rep.details['scaled_envelope_violations']}")


def _fd_risk_grad(spec, w, ws, h=1e-4):
    def risk(v):
        s = np.linalg.norm(v)
        return offsphere_risk(spec, s, float(np.clip(v @ ws / s, -1, 1)))

    g = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (risk(w + e) - risk(w - e)) / (2 * h)
    return g


def check_09():
    rng = np.random.default_rng(9)
    d, Q = 8, 2.0
    ws = teacher(d)
    worst = 0.0
    for name in ("silu", "gelu"):
        spec = parse_activation(name)
        g = rng.standard_normal((20, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        W = ws + Q * (rng.random(20) ** (1 / d))[:, None] * g
        G = population_gradient_batch(spec, W, ws)
        for w, gq in zip(W, G):
            gf = _fd_risk_grad(spec, w, ws)
            worst = max(worst, float(np.linalg.norm(gq - gf) / np.linalg.norm(gf)))
    return worst <= 1e-5, f"max relative gradient error {worst:.2e} <= 1e-5"


MC_POOL = ("relu", "silu", "gelu", "tanh", "sigmoid", "sine:1", "swish:2", "identity")


def check_10():
    rng = np.random.default_rng(10)
    d, n = 10, 1_000_000
    X = rng.standard_normal((n, d))
    ws = teacher(d)
    worst = 0.0
    for _ in range(10):
        spec = parse_activation(MC_POOL[rng.integers(len(MC_POOL))])
        a = rng.uniform(-1, 1)
        u = rng.standard_normal(d)
        u[0] = 0
        u /= np.linalg.norm(u)
        w = a * ws + math.sqrt(1 - a * a) * u
        loss = 0.5 * (spec._v(X @ w) - spec._v(X[:, 0])) ** 2
        se = loss.std(ddof=1) / math.sqrt(n)
        closed = float(sphere_risk(expand(spec, 128).correlation(), a))
        worst = max(worst, abs(closed - loss.mean()) / se)
    return worst <= 4, f"max |closed - MC| / SE = {worst:.2f} <= 4"


def check_11():
    t0 = time.perf_counter()
    spec = parse_activation("silu")
    d = 10
    ws = teacher(d)
    ns = [2**k for k in range(9, 15)]
    gaps = []
    for n in ns:
        vals = []
        for s in range(10):
            ctx = EmpiricalContext(GaussianDataset.generate(n, d, trial_seed(11, s)), spec, ws, 1.0)
            vals.append(sup_gap(ctx, 100, seed=s).grad_gap)
        gaps.append(np.mean(vals))
    slope = float(np.polyfit(np.log(ns), np.log(gaps), 1)[0])
    dt = time.perf_counter() - t0
    return -0.65 <= slope <= -0.35 and dt < 300, f"slope {slope:.3f} in [-0.65, -0.35], {dt:.0f}s < 300s"


def check_12():
    worst = math.inf
    ok = True
    for delta in np.linspace(0.1, math.pi, 10):
        rc = region_integral_check(1.0, float(delta))
        ok &= rc.numeric_inf >= rc.paper_lb - 1e-9
        worst = min(worst, rc.numeric_inf - rc.paper_lb)
    return ok, f"min (numeric inf - bound) = {worst:.3e} >= -1e-9"


def check_13(workers=1):
    rep = run_probability_study("theorem1", "silu", d=10, trials=500, seed=13, workers=workers)
    mono = rep.details["monotone"]
    conv = rep.details["converged"]
    return rep.passed, (f"fraction {rep.fraction:.3f} >= {rep.theoretical_bound:.4f} - 3*{rep.std_error:.3f}; "
                        f"monotone {mono}/{rep.details['init_event']}, converged {conv}")


def check_14():
    bad = geometry_lemma_check(d=10, pairs=10_000, seed=14)
    return bad == 0, f"{bad} exceptions in 10^4 pairs"


def _empirical_ctx(n, d, seed):
    return EmpiricalContext(GaussianDataset.generate(n, d, seed), parse_activation("silu"), teacher(d), 1.0)


def _sphere_start(d, seed, a_min=-0.5):
    w = sphere_init(d, seed)
    if w[0] < a_min:
        w[0] = -w[0]
    return w


def check_15():
    d = 10
    ctx = _empirical_ctx(100_000, d, trial_seed(15, 0))
    zero_err = float(empirical_flow_zero_init(ctx).extras["distance"][-1])
    floor = noise_floor(empirical_flow_sphere(ctx, _sphere_start(d, trial_seed(15, 1))))
    fixed = FlowConfig(h=0.05, T=10.0, stop_early=False)
    ns = (100, 1_000, 10_000)
    med_zero, med_sphere = [], []
    for n in ns:
        ez, es = [], []
        for s in range(10):
            c = _empirical_ctx(n, d, trial_seed(150, s))
            ez.append(empirical_flow_zero_init(c, fixed).extras["distance"][-1])
            es.append(1 - empirical_flow_sphere(c, _sphere_start(d, trial_seed(151, s)), fixed).extras["a"][-1])
        med_zero.append(float(np.median(ez)))
        med_sphere.append(float(np.median(es)))
    mono = all(np.diff(med_zero) <= 0) and all(np.diff(med_sphere) <= 0)
    ok = zero_err <= 0.05 and floor <= 0.02 and mono
    return ok, (f"zero-init error {zero_err:.2e} <= 0.05, sphere floor {floor:.2e} <= 0.02; "
                f"medians over n={ns}: zero {['%.2e' % m for m in med_zero]}, "
                f"sphere {['%.2e' % m for m in med_sphere]} non-increasing")


def check_16():
    law = init_law_check(d=10, draws=10_000, seed=16)
    tail = init_law_check(d=20, draws=10_000, seed=160, delta=0.3)
    ok = law.ks_pass and tail.tail_pass
    return ok, (f"KS {law.ks:.4f} <= 0.02; P(a0 < -0.3) = {tail.tail_fraction:.4f} <= "
                f"{tail.tail_bound:.4f} + 3*{tail.tail_se:.4f} (exact {tail.tail_exact:.4f})")


CHECKS = {
    1: ("ReLU 1-D landscape", check_01),
    2: ("ReLU zero-init flow", check_02),
    3: ("Sine Hermite coefficient", check_03),
    4: ("Sine landscapes", check_04),
    5: ("Counterexample exactness", check_05),
    6: ("Counterexample probability", check_06),
    7: ("q_sigma margins", check_07),
    8: ("High-probability convergence", check_08),
    9: ("Gradient oracle", check_09),
    10: ("Monte-Carlo risk consistency", check_10),
    11: ("Sup-gap scaling", check_11),
    12: ("Region integral", check_12),
    13: ("Gaussian-init probability", check_13),
    14: ("Geometry lemma", check_14),
    15: ("Empirical GD end-to-end", check_15),
    16: ("Initialisation law", check_16),
}
_PARALLEL = {6, 8, 13}


def run_check(number: int, workers: int = 1) -> CheckResult:
    title, fn = CHECKS[number]
    t0 = time.perf_counter()
    try:
        ok, detail = fn(workers=workers) if number in _PARALLEL else fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    return CheckResult(number, title, bool(ok), detail, time.perf_counter() - t0)


def run_all(numbers=None, workers: int = 1, echo=None) -> list:
    out = []
    for k in numbers or sorted(CHECKS):
        res = run_check(k, workers)
        if echo:
            echo(res.line())
        out.append(res)
    return out


def format_table(results) -> str:
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
