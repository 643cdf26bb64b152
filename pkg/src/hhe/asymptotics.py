"""Large-population limits for the household epidemic with local-to-global swapping.

All functions take the base contact model plus the swap probability p and
apply the swap analytically before doing anything else.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .contact_models import ContactModel, swap
from .gontcharoff import (
    Mode,
    NumericalInstability,
    emanating_pgf,
    household_moments,
    susceptibility_pmf,
)

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 100_000
ROOT_TOL = 1e-12
Z_GRID_STEP = 1e-3
CRITICAL_TOL = 1e-9
SIGMA_AGREEMENT = 1e-8


@dataclass(frozen=True)
class AsymptoticSummary:
    h: int
    p: float
    m: int
    r_star: float
    rho: float
    pi: float
    z: float
    tau: float
    sigma2: float | None
    converged: bool = True
    unstable: bool = False

    @property
    def sigma(self) -> float | None:
        return None if self.sigma2 is None else math.sqrt(self.sigma2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma"] = self.sigma
        return d


def effective_mu_g(model: ContactModel, p: float) -> float:
    m = model.moments()
    return m.mu_g + p * m.mu_l


def r_star(model: ContactModel, h: int, p: float = 0.0, local_mode: Mode | str = Mode.WITH) -> float:
    """Household reproduction number mu_G E[S] after the swap."""
    sm = swap(model, p)
    return sm.moments().mu_g * susceptibility_pmf(sm, h, local_mode).mean()


def outbreak_probability(
    model: ContactModel,
    h: int,
    p: float = 0.0,
    m: int = 1,
    local_mode: Mode | str = Mode.WITH,
) -> tuple[float, float, bool]:
    """Return ``(rho, pi, converged)`` where rho is the smallest fixed point of f_C.

    Functional iteration from 0 increases monotonically to the smallest
    root; it stops when successive iterates differ by less than 1e-12.
    """
    if m < 1:
        raise ValueError("need at least one initial infective")
    sm = swap(model, p)
    if r_star(model, h, p, local_mode) <= 1.0 + CRITICAL_TOL:
        # f_C is convex with f_C'(1) <= 1, so 1 is the only fixed point in [0, 1];
        # at criticality iteration would also crawl towards 1 at rate 1/k
        return 1.0, 0.0, True
    rho, converged = 0.0, False
    for _ in range(FIXED_POINT_MAX_ITER):
        nxt = emanating_pgf(sm, h, local_mode, rho)
        if abs(nxt - rho) < FIXED_POINT_TOL:
            rho, converged = nxt, True
            break
        rho = nxt
    rho = min(max(rho, 0.0), 1.0)
    return rho, 1.0 - rho**m, converged


def _bisect(f, lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Bisection for a sign change with f(lo) > 0 >= f(hi)."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = f(mid)
        if fm > 0:
            lo = mid
        else:
            hi = mid
    z = lo if abs(f(lo)) <= abs(f(hi)) else hi
    if abs(f(z)) >= tol:
        raise NumericalInstability(f"bisection residual {f(z)!r} above {tol}")
    return z


def _largest_root(g, step: float = Z_GRID_STEP) -> float:
    """Largest root in (0, 1] of g, where g(1) <= 0 and g > 0 just above 0."""
    n = int(round(1.0 / step))
    grid = np.arange(n, 0, -1) * step
    vals = g(grid)
    pos = np.nonzero(vals > 0)[0]
    if len(pos):
        k = pos[0]
        lo = float(grid[k])
        hi = 1.0 if k == 0 else float(grid[k - 1])
    else:
        hi, lo = step, step / 2
        while g(lo) <= 0:
            hi, lo = lo, lo / 2
            if lo < 1e-300:
                raise NumericalInstability("no positive bracket for the final-size root")
    if g(hi) > 0:
        # g(1) > 0 only if f_S(e^-mu) < 0, i.e. never
        raise NumericalInstability("final-size root bracket failed at z = 1")
    return _bisect(lambda z: float(g(z)), lo, hi)


def final_size(
    model: ContactModel, h: int, p: float = 0.0, local_mode: Mode | str = Mode.WITH
) -> tuple[float, float]:
    """Return ``(z, tau)``: the largest root of z = 1 - f_S(exp(-mu_G z)) and tau = mu_G z."""
    sm = swap(model, p)
    pmf = susceptibility_pmf(sm, h, local_mode)
    mu = sm.moments().mu_g
    if mu * pmf.mean() <= 1.0 + FIXED_POINT_TOL:
        return 0.0, 0.0

    def g(z):
        return 1.0 - pmf.pgf(np.exp(-mu * np.asarray(z))) - z

    z = _largest_root(g)
    return z, mu * z


@dataclass(frozen=True)
class VarianceTerms:
    sigma2: float
    sigma2_alt: float
    b: float
    moments: object = field(repr=False)


def variance_terms(
    model: ContactModel, h: int, p: float = 0.0, local_mode: Mode | str = Mode.WITH
) -> VarianceTerms:
    """sigma^2 from var(R), cov(R, G), plus the pairwise-covariance form as a cross-check.

    The second form rebuilds cov(chi_11, chi_12) and cov(chi_11, X_G,12) for
    a pair of housemates directly from E[S~(S~-1)] and E[S~ G~].
    """
    sm = swap(model, p)
    mom = sm.moments()
    mu, vg = mom.mu_g, mom.var_g
    z, tau = final_size(model, h, p, local_mode)
    if z == 0.0 or abs(r_star(model, h, p, local_mode) - 1.0) < CRITICAL_TOL:
        raise ValueError("variance is only defined for supercritical models (R_* > 1)")
    hm = household_moments(sm, h, local_mode, tau)
    nu, dnu = hm.nu_r, hm.dnu_r
    b = dnu / (1.0 - mu * dnu)
    k = 1.0 + b * mu
    sigma2 = (
        k**2 * hm.var_r + b**2 * h * nu * (vg - mu) + 2.0 * b * k * (hm.cov_rg - mu * hm.var_r)
    ) / h

    alt = k**2 * nu * (1.0 - nu) + b**2 * nu * (vg - mu)
    if h >= 2:
        pairs = h * (h - 1)
        both_escape = hm.fact2_s / pairs
        both_infected = 1.0 - 2.0 * (1.0 - nu) + both_escape
        cov_chi = both_infected - nu**2
        # E[(1 - chi_1) chi_2 X_G2] = mu nu - E[chi_1 chi_2 X_G2]
        cov_chi_xg = mu * nu - mu * both_infected - hm.cross_sg / pairs
        alt += (h - 1) * (k**2 * cov_chi + 2.0 * b * k * cov_chi_xg)
    return VarianceTerms(sigma2=sigma2, sigma2_alt=alt, b=b, moments=hm)


def clt_variance(model: ContactModel, h: int, p: float = 0.0, local_mode: Mode | str = Mode.WITH) -> float:
    """Asymptotic variance sigma^2 of sqrt(N) times the major-outbreak final fraction."""
    vt = variance_terms(model, h, p, local_mode)
    if abs(vt.sigma2 - vt.sigma2_alt) > SIGMA_AGREEMENT * max(1.0, abs(vt.sigma2)):
        raise NumericalInstability(
            f"variance forms disagree: {vt.sigma2!r} vs {vt.sigma2_alt!r}"
        )
    if vt.moments.unstable:
        raise NumericalInstability("household moments clamped beyond tolerance")
    return vt.sigma2


def summarize(
    model: ContactModel,
    h: int,
    p: float = 0.0,
    m: int = 1,
    local_mode: Mode | str = Mode.WITH,
) -> AsymptoticSummary:
    rs = r_star(model, h, p, local_mode)
    rho, pi, converged = outbreak_probability(model, h, p, m, local_mode)
    z, tau = final_size(model, h, p, local_mode)
    unstable = susceptibility_pmf(swap(model, p), h, local_mode).unstable
    sigma2 = None
    if z > 0.0 and abs(rs - 1.0) >= CRITICAL_TOL:
        try:
            sigma2 = clt_variance(model, h, p, local_mode)
        except NumericalInstability:
            unstable = True
            sigma2 = variance_terms(model, h, p, local_mode).sigma2
    return AsymptoticSummary(
        h=h, p=p, m=m, r_star=rs, rho=rho, pi=pi, z=z, tau=tau, sigma2=sigma2,
        converged=converged, unstable=unstable,
    )


def z_hom(alpha: float) -> float:
    """Final size of a homogeneously mixing epidemic: root of 1 - z = exp(-alpha z)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha <= 1.0:
        return 0.0
    return _largest_root(lambda z: 1.0 - np.exp(-alpha * np.asarray(z)) - z)


def z_star_threshold(mu_l: float, sigma_l2: float) -> float:
    """Threshold 1 - (mu_L - sigma_L^2) / (3 mu_L^2) deciding the sign of dz/dp near p = 1.

    z^(h,p) increases near p = 1 when z_hom(mu_G + mu_L) is below it and
    decreases when above. Only meaningful for sigma_L^2 < mu_L.
    """
    if mu_l <= 0:
        raise ValueError("mu_L must be positive")
    if sigma_l2 >= mu_l:
        warnings.warn("sigma_L^2 >= mu_L: threshold is degenerate (z increases near p = 1)", stacklevel=2)
    return 1.0 - (mu_l - sigma_l2) / (3.0 * mu_l**2)


def dz_dp_near_one(
    model: ContactModel, h: int, step: float = 0.01, local_mode: Mode | str = Mode.WITH
) -> float:
    """One-sided difference z^(h,1) - z^(h,1-step)."""
    return final_size(model, h, 1.0, local_mode)[0] - final_size(model, h, 1.0 - step, local_mode)[0]


@dataclass(frozen=True)
class SweepRow:
    h: int
    p: float
    r_star: float
    rho: float
    pi: float
    z: float
    tau: float
    sigma: float | None


CSV_COLUMNS = ("h", "p", "r_star", "rho", "pi", "z", "tau", "sigma")


def _nondecreasing(values, tol: float) -> bool:
    vals = [v for v in values if v is not None]
    return all(b >= a - tol for a, b in zip(vals, vals[1:]))


def sweep(
    model: ContactModel,
    h_values,
    p_grid,
    m: int = 1,
    local_mode: Mode | str = Mode.WITH,
    tol: float = 1e-9,
) -> tuple[list[SweepRow], dict]:
    """Evaluate the summary on an (h, p) grid and report monotonicity.

    The report holds, for pi, z and sigma, whether the quantity is
    nondecreasing in h at every p and in p at every h, with per-slice
    detail, plus the largest distance of z from z_hom(mu_G + mu_L) at the
    largest h.
    """
    h_values = sorted(int(h) for h in h_values)
    p_grid = sorted(float(p) for p in p_grid)
    if not h_values or not p_grid:
        raise ValueError("sweep grids must be nonempty")
    rows = []
    table: dict[tuple[int, float], SweepRow] = {}
    for h in h_values:
        for p in p_grid:
            s = summarize(model, h, p, m, local_mode)
            row = SweepRow(h, p, s.r_star, s.rho, s.pi, s.z, s.tau, s.sigma)
            rows.append(row)
            table[h, p] = row

    report: dict = {}
    for q in ("pi", "z", "sigma"):
        in_h = {p: _nondecreasing([getattr(table[h, p], q) for h in h_values], tol) for p in p_grid}
        in_p = {h: _nondecreasing([getattr(table[h, p], q) for p in p_grid], tol) for h in h_values}
        report[q] = {
            "nondecreasing_in_h": all(in_h.values()),
            "nondecreasing_in_p": all(in_p.values()),
            "in_h_by_p": {str(p): v for p, v in in_h.items()},
            "in_p_by_h": {str(h): v for h, v in in_p.items()},
        }
    mom = model.moments()
    zh = z_hom(mom.mu_g + mom.mu_l)
    hmax = h_values[-1]
    report["z_hom"] = zh
    report["max_abs_z_minus_z_hom_at_max_h"] = max(abs(table[hmax, p].z - zh) for p in p_grid)
    return rows, report
