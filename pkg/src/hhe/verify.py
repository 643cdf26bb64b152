"""Acceptance checks, runnable as ``hhe verify`` or from the test suite.

Each block returns a list of :class:`Check`. A check passes when
``|got - expected| <= tol`` unless it carries its own comparison.
"""

from __future__ import annotations

import math
import random
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass

import numpy as np

from . import _oracles
from .asymptotics import (
    dz_dp_near_one,
    final_size,
    summarize,
    sweep,
    variance_terms,
    z_hom,
    z_star_threshold,
)
from .contact_models import (
    Constant,
    Exponential,
    Gamma,
    IndependentBinomial,
    IndependentPoisson,
    JointTable,
    MixedPoisson,
    log_convexity_report,
    swap,
)
from .gontcharoff import emanating_pgf, scaled_gont, susceptibility_pmf
from .simulator import PopulationSpec, run_batch, run_until_majors, simulate_households
from .stats import Fraction, classify_and_estimate

SEED = 20240601


@dataclass
class Check:
    block: str
    name: str
    expected: object
    got: object
    tol: float | None
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        tol = "" if self.tol is None else f" tol={self.tol:g}"
        return f"{flag} [{self.block}] {self.name}: expected={_fmt(self.expected)} got={_fmt(self.got)}{tol}" + (
            f" ({self.detail})" if self.detail else ""
        )


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _close(block, name, expected, got, tol, detail=""):
    ok = got is not None and abs(got - expected) <= tol
    return Check(block, name, expected, got, tol, bool(ok), detail)


def _flag(block, name, ok, got=None, expected=True, detail=""):
    return Check(block, name, expected, got if got is not None else bool(ok), None, bool(ok), detail)


REFERENCE = {
    "Constant(1,1)": (Constant(1, 1), (1.0, 0.7968, 0.7386)),
    "Binomial(2,1/2;2,1/2)": (IndependentBinomial(2, 0.5, 2, 0.5), (0.8238, 0.6817, 1.0854)),
    "Poisson(1,1)": (IndependentPoisson(1.0, 1.0), (0.6181, 0.6181, 1.4201)),
    "MixedPoisson Gamma(2,2)": (MixedPoisson(1.0, 1.0, Gamma(2.0, 2.0)), (0.4391, 0.5725, 1.8378)),
    "MixedPoisson Exp(1)": (MixedPoisson(1.0, 1.0, Exponential(1.0)), (0.3247, 0.5368, 2.2347)),
    "MixedPoisson Gamma(1/2,1/2)": (MixedPoisson(1.0, 1.0, Gamma(0.5, 0.5)), (0.2060, 0.4829, 2.9959)),
}

# finite-N rows used by the simulation blocks: N -> (pi, z, sigma)
POISSON_FINITE = {2000: (0.6169, 0.6170, 1.4359)}
REFERENCE_N10000 = {
    "Constant(1,1)": (None, (0.7968, 0.7967, 0.7968), (0.7367, 0.7335, 0.7399)),
    "Binomial(2,1/2;2,1/2)": ((0.8238, 0.8215, 0.8262), (0.6816, 0.6815, 0.6817), (1.0852, 1.0805, 1.0900)),
    "Poisson(1,1)": ((0.6179, 0.6149, 0.6209), (0.6179, 0.6178, 0.6180), (1.4196, 1.4134, 1.4259)),
    "MixedPoisson Gamma(2,2)": ((0.4350, 0.4319, 0.4381), (0.5722, 0.5721, 0.5723), (1.8461, 1.8381, 1.8542)),
    "MixedPoisson Exp(1)": ((0.3274, 0.3245, 0.3303), (0.5363, 0.5362, 0.5365), (2.2453, 2.2355, 2.2552)),
    "MixedPoisson Gamma(1/2,1/2)": ((0.2044, 0.2019, 0.2069), (0.4819, 0.4818, 0.4821), (3.0495, 3.0362, 3.0629)),
}
# KS distances at h = 2 from 10^5 major runs: N -> D
KS_POISSON = {250: 0.0414, 2000: 0.0154}
KS_H2_N10000 = {
    "Constant(1,1)": 0.0083,
    "Binomial(2,1/2;2,1/2)": 0.0048,
    "Poisson(1,1)": 0.0076,
    "MixedPoisson Gamma(2,2)": 0.0102,
    "MixedPoisson Exp(1)": 0.0110,
    "MixedPoisson Gamma(1/2,1/2)": 0.0134,
}


def check_reference(scale: float = 1.0) -> list[Check]:
    out = []
    t0 = time.perf_counter()
    for name, (model, (pi, z, sigma)) in REFERENCE.items():
        s = summarize(model, 2, 0.0, 1)
        out.append(_close("reference", f"{name} pi", pi, s.pi, 5e-4 * scale))
        out.append(_close("reference", f"{name} z", z, s.z, 5e-4 * scale))
        out.append(_close("reference", f"{name} sigma", sigma, s.sigma, 5e-4 * scale))
    elapsed = time.perf_counter() - t0
    out.append(Check("reference", "runtime seconds", "< 5", elapsed, None, elapsed < 5.0))
    return out


def check_counterexamples(scale: float = 1.0) -> list[Check]:
    m = Constant(2, 1)
    tol = 1e-3 * scale
    return [
        _close("counterexamples", "Constant(2,1) z(h=2,p=0)", 0.980, final_size(m, 2, 0.0)[0], tol),
        _close("counterexamples", "Constant(2,1) z(h=3,p=0)", 0.961, final_size(m, 3, 0.0)[0], tol),
        _close("counterexamples", "Constant(2,1) z(h=2,p=1)", 0.941, final_size(m, 2, 1.0)[0], tol),
    ]


def check_monotonicity(scale: float = 1.0) -> list[Check]:
    tol = 1e-9 * scale
    hs = range(2, 7)
    ps = [i / 10 for i in range(11)]
    out = []
    for name, (model, _) in REFERENCE.items():
        _, rep = sweep(model, hs, ps, 1, tol=tol)
        ok = rep["pi"]["nondecreasing_in_h"] and rep["pi"]["nondecreasing_in_p"]
        out.append(_flag("monotonicity", f"{name} pi nondecreasing in h and p", ok))
        if isinstance(model, (IndependentPoisson, MixedPoisson)):
            convex = log_convexity_report(model)["convex"]
            zok = rep["z"]["nondecreasing_in_h"] and rep["z"]["nondecreasing_in_p"]
            out.append(_flag("monotonicity", f"{name} z nondecreasing in h and p", zok and convex,
                             detail=f"log-convex={convex}"))
        if isinstance(model, Constant):
            by_h = rep["z"]["in_p_by_h"]
            non = {h: not by_h[str(h)] for h in range(3, 7)}
            out.append(_flag("monotonicity", "Constant(1,1) z non-monotone in p at h=3..6",
                             all(non.values()), got=non))
    return out


def check_swap_slope(scale: float = 1.0) -> list[Check]:
    out = []
    zs = z_star_threshold(1.0, 0.0)
    # z depends on X_G only through its mean, so mu_G = 1/2 uses X_G ~ Bernoulli(1/2)
    models = {
        0.5: ("X_G~Bern(1/2), X_L=1", JointTable(((0, 1, 0.5), (1, 1, 0.5)))),
        2.0: ("Constant(2,1)", Constant(2, 1)),
    }
    for mu_g, (name, model) in models.items():
        alpha = mu_g + 1.0
        expect_up = z_hom(alpha) < zs
        for h in (2, 3):
            d = dz_dp_near_one(model, h, step=0.01)
            ok = d > 0 if expect_up else d < 0
            out.append(Check("swap_slope", f"{name} h={h} sign z(1)-z(0.99)",
                             "+" if expect_up else "-", d, None, ok,
                             f"z_hom({alpha:g})={z_hom(alpha):.4f}, z*={zs:.4f}"))
    return out


def check_large_households(scale: float = 1.0) -> list[Check]:
    model = IndependentPoisson(1.0, 1.0)
    zh = z_hom(2.0)
    hs = (2, 5, 10, 20, 40)
    dist = [abs(final_size(model, h, 0.0)[0] - zh) for h in hs]
    dec = all(b < a for a, b in zip(dist, dist[1:]))
    return [
        _flag("large_households", "|z(h,0) - z_hom(2)| strictly decreasing over h=2,5,10,20,40", dec,
              got=[round(d, 6) for d in dist]),
        Check("large_households", "|z(40,0) - z_hom(2)|", "< 0.01", dist[-1], 0.01 * scale, dist[-1] < 0.01 * scale),
    ]


def _mc_sigma2(model, h, tau, b, n, seed):
    r, g, y = simulate_households(model, h, tau, n, seed=seed)
    w = r + b * (g - y).astype(float)
    d = w - w.mean()
    var = float(np.mean(d**2)) * n / (n - 1)
    m4 = float(np.mean(d**4))
    se = math.sqrt(max(m4 - var**2, 0.0) / n)
    return var / h, se / h


def check_sigma2(scale: float = 1.0, n: int = 10**6) -> list[Check]:
    out = []
    t0 = time.perf_counter()
    for i, (name, (model, _)) in enumerate(REFERENCE.items()):
        vt = variance_terms(model, 2, 0.0)
        rel = abs(vt.sigma2 - vt.sigma2_alt) / max(1.0, abs(vt.sigma2))
        out.append(Check("sigma2", f"{name} two closed forms agree (relative)", 0.0, rel, 1e-8 * scale,
                         rel <= 1e-8 * scale))
        tau = vt.moments.t
        mc, se = _mc_sigma2(model, 2, tau, vt.b, n, SEED + i)
        out.append(_close("sigma2", f"{name} Monte Carlo household form, 3 SE", vt.sigma2, mc,
                          3.0 * se * scale, f"n={n}, SE={se:.2g}"))
    elapsed = time.perf_counter() - t0
    out.append(Check("sigma2", "runtime seconds", "< 30", elapsed, None, elapsed < 30.0))
    return out


ORACLE_MODELS = {
    "Constant(1,2)": Constant(1, 2),
    "Binomial(2,0.3;2,0.6)": IndependentBinomial(2, 0.3, 2, 0.6),
    "JointTable": JointTable(((0, 0, 0.2), (1, 1, 0.3), (2, 2, 0.25), (0, 2, 0.25))),
    "swap(JointTable,0.35)": swap(JointTable(((0, 1, 0.4), (3, 2, 0.35), (1, 0, 0.25))), 0.35),
}


def check_oracles(scale: float = 1.0) -> list[Check]:
    out = []
    svals = (0.0, 0.25, 0.5, 0.8, 1.0)
    for name, model in ORACLE_MODELS.items():
        for h in (1, 2, 3, 4):
            for wr in (True, False):
                if not wr and h < 3:
                    continue
                mode = "with" if wr else "without"
                s_exact, c_exact = _oracles.household_enumeration(model, h, wr)
                pmf = susceptibility_pmf(model, h, mode).probs
                err_s = max(abs(a - b) for a, b in zip(s_exact, pmf))
                err_c = max(
                    abs(sum(p * s**k for k, p in c_exact.items()) - emanating_pgf(model, h, mode, s))
                    for s in svals
                )
                err = max(err_s, err_c)
                out.append(Check("oracles", f"{name} h={h} {mode} replacement: S pmf and f_C vs enumeration",
                                 0.0, err, 1e-12 * scale, err <= 1e-12 * scale))
    rng = random.Random(SEED)
    worst = 0.0
    for h in range(2, 13):
        for _ in range(5):
            x = rng.uniform(-1.0, 1.0)
            nodes = [rng.uniform(0.0, 1.0) for _ in range(h)]
            exact = _oracles.rational_gont(x, nodes, h - 1)
            got = scaled_gont(x, nodes, h - 1)
            for i, (e, g) in enumerate(zip(exact, got)):
                e = float(e) * math.factorial(i)
                worst = max(worst, abs(g - e) / max(abs(e), 1e-300))
    out.append(Check("oracles", "Gontcharoff recursion vs exact rationals, h<=12 (max relative error)",
                     0.0, worst, 1e-10 * scale, worst <= 1e-10 * scale))
    return out


def check_simulation(scale: float = 1.0) -> list[Check]:
    pi0, z0, _ = POISSON_FINITE[2000]
    spec = PopulationSpec(n=1000, h=2, model=IndependentPoisson(1.0, 1.0), m=1, seed=SEED)
    t0 = time.perf_counter()
    batch = run_batch(spec, 10_000, threads=1)
    elapsed = time.perf_counter() - t0
    s = classify_and_estimate(batch, spec.N, Fraction(0.2), h=2)
    return [
        _close("simulation", "Poisson(1,1) N=2000 z_hat", z0, s.z_hat, 0.01 * scale),
        _close("simulation", "Poisson(1,1) N=2000 pi_hat", pi0, s.pi_hat, 0.02 * scale),
        Check("simulation", "runtime seconds (single thread, 10^4 runs)", "< 60", elapsed, None, elapsed < 60.0),
    ]


def _ks_at(model, h, N, n_major, asym, seed, threads=None):
    spec = PopulationSpec(n=N // h, h=h, model=model, m=1, seed=seed)
    batch = run_until_majors(spec, n_major, Fraction(0.2), threads=threads)
    s = classify_and_estimate(batch, spec.N, Fraction(0.2), h=h, asymptotic=(asym.z, asym.sigma2))
    return s


def check_ks(scale: float = 1.0) -> list[Check]:
    model = IndependentPoisson(1.0, 1.0)
    asym = summarize(model, 2, 0.0, 1)
    d = {N: _ks_at(model, 2, N, 10_000, asym, SEED + N).ks_D for N in KS_POISSON}
    out = [Check("ks", "Poisson(1,1) h=2: D(N=250) > D(N=2000)", ">", [d[250], d[2000]], None, d[250] > d[2000])]
    f = 3.0 * scale
    for N, ref in KS_POISSON.items():
        out.append(Check("ks", f"Poisson(1,1) h=2 N={N} D within factor 3 of reference", ref, d[N], f,
                         ref / f <= d[N] <= ref * f))
    return out


def check_full(scale: float = 1.0) -> list[Check]:
    """Reference N=10,000 cells and KS values, 10^5 major runs per model."""
    out = []
    for i, (name, (model, _)) in enumerate(REFERENCE.items()):
        asym = summarize(model, 2, 0.0, 1)
        s = _ks_at(model, 2, 10_000, 100_000, asym, SEED + 7919 * (i + 1))
        pi_ref, z_ref, sig_ref = REFERENCE_N10000[name]
        for label, ref, got, ci in (
            ("pi_hat", pi_ref, s.pi_hat, s.pi_ci),
            ("z_hat", z_ref, s.z_hat, s.z_ci),
            ("sigma_hat", sig_ref, s.sigma_hat, s.sigma_ci),
        ):
            if ref is None:
                continue
            # both estimates carry sampling error; combine the two 95% half-widths
            half = math.hypot((ref[2] - ref[1]) / 2.0, (ci[1] - ci[0]) / 2.0) * 1.5 * scale
            out.append(_close("full", f"{name} N=10000 {label}", ref[0], got, half))
        ref = KS_H2_N10000[name]
        out.append(Check("full", f"{name} N=10000 KS D within factor 3", ref, s.ks_D, 3.0 * scale,
                         ref / (3.0 * scale) <= s.ks_D <= ref * 3.0 * scale))
    return out


BLOCKS: dict[str, Callable[..., list[Check]]] = {
    "reference": check_reference,
    "counterexamples": check_counterexamples,
    "monotonicity": check_monotonicity,
    "swap_slope": check_swap_slope,
    "large_households": check_large_households,
    "sigma2": check_sigma2,
    "oracles": check_oracles,
    "simulation": check_simulation,
    "ks": check_ks,
}
FULL_BLOCKS = {"full": check_full}


def run_checks(only=None, full: bool = False, tol_scale: float = 1.0) -> list[Check]:
    """Run the named blocks (all default blocks if ``only`` is empty)."""
    known = {**BLOCKS, **FULL_BLOCKS}
    names = list(only) if only else list(BLOCKS) + (list(FULL_BLOCKS) if full else [])
    unknown = [n for n in names if n not in known]
    if unknown:
        raise KeyError(f"unknown check block(s): {', '.join(unknown)}; choose from {', '.join(known)}")
    checks = []
    for n in names:
        checks.extend(known[n](tol_scale))
    return checks
