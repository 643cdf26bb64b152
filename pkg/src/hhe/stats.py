"""Estimators and goodness-of-fit for batches of simulated final sizes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist

import mpmath
import numpy as np

Z95 = 1.96
WH_MIN_DOF = 1000


@dataclass(frozen=True)
class Fraction:
    """Major outbreak: final fraction infected at least ``z_cut``."""

    z_cut: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.z_cut < 1.0:
            raise ValueError("z_cut must lie in (0, 1)")

    def is_major(self, Z, V, N, h):
        return np.asarray(Z) / N >= self.z_cut


@dataclass(frozen=True)
class Households:
    """Major outbreak: at least floor(log n) households hit."""

    def is_major(self, Z, V, N, h):
        k = math.floor(math.log(N // h))
        return np.asarray(V) >= k


MajorCutoff = Fraction | Households


def parse_cutoff(text: str) -> MajorCutoff:
    """Parse ``frac:0.2`` or ``households:log``."""
    kind, _, arg = text.partition(":")
    if kind == "frac":
        return Fraction(float(arg or 0.2))
    if kind == "households" and arg in ("", "log"):
        return Households()
    raise ValueError(f"bad cutoff {text!r}; expected frac:<z> or households:log")


@dataclass(frozen=True)
class BatchSummary:
    n_total: int
    n_major: int
    pi_hat: float
    pi_ci: tuple[float, float]
    z_hat: float | None = None
    z_ci: tuple[float, float] | None = None
    sigma_hat: float | None = None
    sigma_ci: tuple[float, float] | None = None
    ks_D: float | None = None
    note: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("pi_ci", "z_ci", "sigma_ci"):
            if d[k] is not None:
                d[k] = list(d[k])
        if d["note"] is None:
            del d["note"]
        return d


def normal_cdf(x: float, mean: float = 0.0, var: float = 1.0) -> float:
    if var <= 0:
        raise ValueError("variance must be positive")
    return 0.5 * math.erfc(-(x - mean) / math.sqrt(2.0 * var))


def chi2_quantile(q: float, dof: int) -> float:
    """Wilson-Hilferty approximation; relative error well under 1e-3 once dof >= 1000.

    Below that the regularized incomplete gamma is inverted numerically, since
    the cube approximation can go negative for small dof.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if dof < 1:
        raise ValueError("dof must be at least 1")
    if dof < WH_MIN_DOF:
        return _chi2_quantile_exact(q, dof)
    zq = NormalDist().inv_cdf(q)
    c = 2.0 / (9.0 * dof)
    return dof * (1.0 - c + zq * math.sqrt(c)) ** 3


def _chi2_quantile_exact(q: float, dof: int) -> float:
    k = mpmath.mpf(dof) / 2
    lo, hi = 0.0, dof + 20.0 * math.sqrt(2.0 * dof) + 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mpmath.gammainc(k, 0, mid / 2, regularized=True) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * hi:
            break
    return 0.5 * (lo + hi)


def _pairwise_mean_var(x: np.ndarray) -> tuple[float, float]:
    # np.sum uses pairwise summation, so results do not drift with ordering
    mean = float(np.sum(x) / len(x))
    var = float(np.sum((x - mean) ** 2) / (len(x) - 1)) if len(x) > 1 else 0.0
    return mean, var


def ks_statistic(samples, z: float, sigma2: float, N: int) -> float:
    """sup |F_n - F| against N(z, sigma2 / N), evaluated at the sample points."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    sd = math.sqrt(sigma2 / N)
    f = np.array([0.5 * math.erfc(-(v - z) / (sd * math.sqrt(2.0))) for v in x])
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def classify_and_estimate(
    outcomes,
    N: int,
    cutoff: MajorCutoff = Fraction(),
    h: int = 1,
    asymptotic: tuple[float, float] | None = None,
) -> BatchSummary:
    """Major-outbreak probability, and mean and scaled sd of the major final fractions.

    ``outcomes`` is an OutcomeBatch or any sequence of EpidemicOutcome.
    With ``asymptotic=(z, sigma2)`` the KS distance of the major fractions
    to N(z, sigma2 / N) is included.
    """
    if isinstance(getattr(outcomes, "Z", None), np.ndarray):
        Z, V = outcomes.Z, outcomes.V
    else:
        Z = np.array([o.Z for o in outcomes])
        V = np.array([o.V for o in outcomes])
    n = len(Z)
    if n == 0:
        raise ValueError("no outcomes")
    major = cutoff.is_major(Z, V, N, h)
    k = int(np.count_nonzero(major))
    pi = k / n
    half = Z95 * math.sqrt(pi * (1.0 - pi) / n)
    base = dict(n_total=n, n_major=k, pi_hat=pi, pi_ci=(pi - half, pi + half))
    if k == 0:
        return BatchSummary(**base, note="no-major-outbreaks")
    frac = Z[major] / N
    zh, var = _pairwise_mean_var(frac)
    sd = math.sqrt(var)
    zhalf = Z95 * sd / math.sqrt(k)
    extra = dict(z_hat=zh, z_ci=(zh - zhalf, zh + zhalf))
    if k >= 2:
        sig = math.sqrt(N) * sd
        q1, q2 = chi2_quantile(0.025, k - 1), chi2_quantile(0.975, k - 1)
        extra.update(sigma_hat=sig, sigma_ci=(sig * math.sqrt((k - 1) / q2), sig * math.sqrt((k - 1) / q1)))
    if asymptotic is not None and asymptotic[1]:
        extra["ks_D"] = ks_statistic(frac, asymptotic[0], asymptotic[1], N)
    return BatchSummary(**base, **extra)
