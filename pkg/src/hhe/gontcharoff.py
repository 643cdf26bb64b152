"""Gontcharoff-polynomial transforms of the within-household epidemic.

The recursions are run on the scaled polynomials ``g_i = i! G_i`` which
satisfy ``sum_i C(n, i) u_i^(n-i) g_i = x^n``; this keeps every term
O(1) and turns the falling factorials of the textbook form into binomial
coefficients. Inner sums use ``math.fsum``.

The alternating sums lose roughly one digit per two orders of the
recursion, so above ``PRECISE_FROM`` the recursions (not the pgf
evaluations feeding them, which are well conditioned) run in mpmath with
extra working digits. Household size is limited to ``MAX_HOUSEHOLD``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .contact_models import ContactModel

MAX_HOUSEHOLD = 50
PRECISE_FROM = 16
PMF_CLAMP = 1e-12
VAR_CLAMP = 1e-9


class Mode(str, enum.Enum):
    """How an infective picks the targets of its local contacts."""

    WITH = "with"
    WITHOUT = "without"

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("-", "_")
        if v in ("with", "with_replacement"):
            return cls.WITH
        if v in ("without", "without_replacement"):
            return cls.WITHOUT
        raise ValueError(f"unknown sampling mode {value!r}")


class NumericalInstability(ArithmeticError):
    pass


def _check_h(h: int) -> None:
    if h < 1:
        raise ValueError("household size must be at least 1")
    if h > MAX_HOUSEHOLD:
        raise ValueError(f"household size {h} exceeds the supported maximum {MAX_HOUSEHOLD}")


@lru_cache(maxsize=None)
def _mp_context(digits: int) -> mpmath.ctx_mp.MPContext:
    # one context per precision, never mutated afterwards
    ctx = mpmath.MPContext()
    ctx.dps = digits
    return ctx


class _Arith:
    """Float arithmetic with fsum, or an mpmath context for long recursions."""

    def __init__(self, order: int, precise: bool | None = None):
        if precise is None:
            precise = order >= PRECISE_FROM
        self.ctx = _mp_context(20 + order) if precise else None

    def num(self, x):
        return float(x) if self.ctx is None else self.ctx.mpf(x)

    def fsum(self, terms):
        return math.fsum(terms) if self.ctx is None else self.ctx.fsum(terms)


def _gont(x, nodes, n_max: int, ar: _Arith) -> list:
    g = [ar.num(1)]
    for n in range(1, n_max + 1):
        acc = [x**n]
        c = 1  # C(n, i)
        for i in range(n):
            acc.append(-c * nodes[i] ** (n - i) * g[i])
            c = c * (n - i) // (i + 1)
        g.append(ar.fsum(acc))
    return g


def scaled_gont(x: float, nodes: Sequence[float], n_max: int, precise: bool | None = None) -> list[float]:
    """Return ``[i! G_i(x|U) for i in 0..n_max]``."""
    if n_max > len(nodes):
        raise ValueError(f"need {n_max} nodes for G_{n_max}, got {len(nodes)}")
    # keyed like the household recursions, where n_max = h - 1
    ar = _Arith(n_max + 1, precise)
    g = _gont(ar.num(x), [ar.num(u) for u in nodes[:n_max]], n_max, ar)
    return [float(v) for v in g]


def gont_polys(x: float, nodes: Sequence[float], n_max: int) -> list[float]:
    """Gontcharoff polynomials ``[G_0(x|U), ..., G_{n_max}(x|U)]``.

    ``nodes`` is the sequence u_0, u_1, ...; G_n depends on u_0..u_{n-1}.
    """
    return [v / math.factorial(i) for i, v in enumerate(scaled_gont(x, nodes, n_max))]


def _validate_mode(model: ContactModel, h: int, mode: Mode) -> None:
    if mode is Mode.WITHOUT:
        ml = model.max_local
        if ml is None or ml > h - 1:
            raise ValueError(
                "local contacts without replacement need X_L <= h - 1; "
                f"got support bound {ml} with h = {h}"
            )


def _without_weights(h: int, k: int, x: int) -> float:
    # (h-1-x)_[k] / (h-1)_[k]: probability that x distinct housemates miss a given k
    num = 1.0
    for j in range(k):
        num *= (h - 1 - x - j) / (h - 1 - j)
    return max(num, 0.0)


def escape_nodes(model: ContactModel, h: int, mode: Mode | str, s: float = 1.0) -> tuple[list[float], list[float]]:
    """Values ``q_k(s)`` and derivatives ``q_k'(s)`` for k = 0..h-1.

    q_k(s) = E[s^X_G 1{an infective misses a given set of k housemates}].
    """
    mode = Mode.parse(mode)
    _check_h(h)
    _validate_mode(model, h, mode)
    q, dq = [], []
    if mode is Mode.WITH or h == 1:
        for k in range(h):
            t = 1.0 if k == 0 else 1.0 - k / (h - 1)
            q.append(model.joint_pgf(s, t))
            dq.append(model.pgf_grad(s, t)[0])
        return q, dq
    slices = model.local_slices(s)
    for k in range(h):
        w = [_without_weights(h, k, x) for x, _, _ in slices]
        q.append(math.fsum(wi * a for wi, (_, a, _) in zip(w, slices)))
        dq.append(math.fsum(wi * da for wi, (_, _, da) in zip(w, slices)))
    return q, dq


@dataclass(frozen=True)
class SusceptibilityPmf:
    """probs[i - 1] = P(S = i) for i = 1..h."""

    probs: tuple[float, ...]
    unstable: bool = False

    @property
    def h(self) -> int:
        return len(self.probs)

    def pgf(self, s: float | np.ndarray):
        s = np.asarray(s, dtype=float)
        powers = s[..., None] ** np.arange(1, self.h + 1)
        return powers @ np.asarray(self.probs)

    def dpgf(self, s: float | np.ndarray):
        s = np.asarray(s, dtype=float)
        k = np.arange(1, self.h + 1)
        return (k * s[..., None] ** (k - 1)) @ np.asarray(self.probs)

    def mean(self) -> float:
        return math.fsum(i * p for i, p in enumerate(self.probs, start=1))


def _clean_pmf(raw: list[float]) -> tuple[tuple[float, ...], bool]:
    unstable = any(p < -PMF_CLAMP for p in raw)
    probs = [max(p, 0.0) for p in raw]
    total = math.fsum(probs)
    if abs(total - 1.0) > 1e-10:
        unstable = True
    return tuple(p / total for p in probs), unstable


@lru_cache(maxsize=512)
def _susceptibility_pmf(model: ContactModel, h: int, mode: Mode) -> SusceptibilityPmf:
    if h == 1:
        return SusceptibilityPmf((1.0,))
    ar = _Arith(h)
    q = [ar.num(v) for v in escape_nodes(model, h, mode)[0]]
    # P(S = i) = C(h-1, i-1) g_{i-1}(1 | E U) q_i^(h-i)
    a = _gont(ar.num(1), q[1:], h - 1, ar)
    raw = [
        float(math.comb(h - 1, i - 1) * a[i - 1] * (q[i] ** (h - i) if i < h else 1))
        for i in range(1, h + 1)
    ]
    probs, unstable = _clean_pmf(raw)
    return SusceptibilityPmf(probs, unstable)


def susceptibility_pmf(model: ContactModel, h: int, mode: Mode | str = Mode.WITH) -> SusceptibilityPmf:
    """Distribution of the susceptibility-set size S in a household of size h."""
    mode = Mode.parse(mode)
    _check_h(h)
    _validate_mode(model, h, mode)
    return _susceptibility_pmf(model, h, mode)


def emanating_pgf(model: ContactModel, h: int, mode: Mode | str, s: float) -> float:
    """pgf f_C(s) of the global contacts emanating from a single-introduction household epidemic."""
    mode = Mode.parse(mode)
    ar = _Arith(h)
    q = [ar.num(v) for v in escape_nodes(model, h, mode, s)[0]]
    g = _gont(ar.num(1), q, h - 1, ar)
    return float(ar.fsum(math.comb(h - 1, i) * q[i] ** (h - i) * g[i] for i in range(h)))


@dataclass(frozen=True)
class HouseholdMoments:
    """Moments of a household exposed to global infection pressure t.

    ``mean_s``, ``fact2_s`` and ``cross_sg`` are E[S~], E[S~(S~-1)] and
    E[S~ G~], where S~ counts members escaping infection and G~ the global
    contacts emanating from those infected.
    """

    h: int
    t: float
    mean_s: float
    fact2_s: float
    cross_sg: float
    mu_g: float
    nu_r: float
    dnu_r: float
    var_r: float
    cov_rg: float
    unstable: bool = False

    @property
    def mean_r(self) -> float:
        return self.h - self.mean_s

    @property
    def mean_g(self) -> float:
        return self.h * self.mu_g * self.nu_r


def household_moments(model: ContactModel, h: int, mode: Mode | str, t: float) -> HouseholdMoments:
    """Exact E[S~], E[S~_[2]], E[S~ G~] and the derived R/G moments at exposure t.

    Each member independently escapes global infection with probability
    exp(-t); R = h - S~ is the number infected and G the global contacts
    they make.
    """
    mode = Mode.parse(mode)
    _check_h(h)
    if t < 0:
        raise ValueError("exposure must be nonnegative")
    ar = _Arith(h)
    pi = ar.num(math.exp(-t))
    qf, dqf = escape_nodes(model, h, mode)
    q = [ar.num(v) for v in qf] + [ar.num(0)]  # q_h only ever appears with exponent 0
    dq = [ar.num(v) for v in dqf]
    one = ar.num(1)

    def qp(i, e):
        return one if e == 0 else q[i] ** e

    g1 = _gont(one, q[1:h], h - 1, ar)
    mean_s = ar.fsum(math.comb(h, i) * i * qp(i, h - i) * pi**i * g1[i - 1] for i in range(1, h + 1))
    if h >= 2:
        g2 = _gont(one, q[2:h], h - 2, ar)
        fact2 = ar.fsum(
            math.comb(h, i) * i * (i - 1) * qp(i, h - i) * pi**i * g2[i - 2] for i in range(2, h + 1)
        )
    else:
        fact2 = ar.num(0)

    # alpha_i = G_i(1 | E U(s2)) and its s2-derivative at s2 = 1, scaled by i!
    a, da = [one], [ar.num(0)]
    for n in range(1, h):
        acc, dacc = [one], []
        c = 1
        for i in range(n):
            acc.append(-c * qp(i + 1, n - i) * a[i])
            dacc.append(c * (n - i) * dq[i + 1] * qp(i + 1, n - i - 1) * a[i])
            if i >= 1:
                dacc.append(c * qp(i + 1, n - i) * da[i])
            c = c * (n - i) // (i + 1)
        a.append(ar.fsum(acc))
        da.append(-ar.fsum(dacc))
    terms = [math.comb(h, i) * i * qp(i, h - i) * pi**i * da[i - 1] for i in range(1, h + 1)]
    terms += [
        math.comb(h, i) * i * (h - i) * dq[i] * qp(i, h - i - 1) * pi**i * a[i - 1] for i in range(1, h)
    ]
    cross = float(ar.fsum(terms))
    var_r = float(fact2 + mean_s - mean_s**2)
    mean_s, fact2 = float(mean_s), float(fact2)

    mu_g = model.moments().mu_g
    pmf = susceptibility_pmf(model, h, mode)
    unstable = pmf.unstable
    nu_r = 1.0 - mean_s / h
    if nu_r < 0.0 or nu_r > 1.0:
        unstable |= min(abs(nu_r), abs(nu_r - 1.0)) > 1e-9
        nu_r = min(max(nu_r, 0.0), 1.0)
    dnu_r = math.fsum(i * p * math.exp(-i * t) for i, p in enumerate(pmf.probs, start=1))
    if var_r < 0.0:
        unstable |= var_r < -VAR_CLAMP
        var_r = 0.0
    # cov(R, G) = -cov(S~, G~), with E[G~] = h mu_G nu_R
    cov_rg = -(cross - mean_s * h * mu_g * nu_r)
    return HouseholdMoments(
        h=h,
        t=t,
        mean_s=mean_s,
        fact2_s=fact2,
        cross_sg=cross,
        mu_g=mu_g,
        nu_r=nu_r,
        dnu_r=dnu_r,
        var_r=var_r,
        cov_rg=cov_rg,
        unstable=unstable,
    )
