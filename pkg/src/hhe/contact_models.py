"""Bivariate contact laws (X_G, X_L) for household epidemics.

Every model exposes the joint pgf ``E[s1^X_G s2^X_L]`` and its gradient in
closed form, exact first and second moments, and an exact sampler. Models
with finite local support additionally expose ``local_slices``, the
decomposition of the s1-marginal by the value of X_L, which is what the
without-replacement household recursions need.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "ContactModel",
    "Constant",
    "IndependentPoisson",
    "IndependentBinomial",
    "MixedPoisson",
    "Gamma",
    "Exponential",
    "PointMass",
    "JointTable",
    "SwappedModel",
    "Moments",
    "swap",
    "joint_pgf",
    "local_pgf",
    "weighted_local_pgf",
    "moments",
    "sample",
    "log_convexity_report",
    "model_from_dict",
    "model_to_dict",
    "load_model",
]


def _pow(x: float, k: int) -> float:
    # 0.0 ** 0 == 1.0 in Python, which is the convention every pgf here needs.
    return x**k


def _dpow(x: float, k: int) -> float:
    """d/dx of x**k, with the k = 0 case pinned to zero."""
    if k == 0:
        return 0.0
    return k * x ** (k - 1)


@dataclass(frozen=True)
class Moments:
    mu_g: float
    mu_l: float
    var_g: float
    var_l: float
    cov_gl: float

    def __iter__(self):
        return iter((self.mu_g, self.mu_l, self.var_g, self.var_l, self.cov_gl))


class ContactModel:
    """Base class for the law of (X_G, X_L).

    Subclasses implement ``joint_pgf``, ``pgf_grad``, ``moments`` and
    ``sample``. ``max_local`` is the largest value X_L can take (``None``
    when unbounded).
    """

    max_local: int | None = None

    def joint_pgf(self, s1: float, s2: float) -> float:
        raise NotImplementedError

    def pgf_grad(self, s1: float, s2: float) -> tuple[float, float]:
        """Partial derivatives of the joint pgf with respect to s1 and s2."""
        raise NotImplementedError

    def moments(self) -> Moments:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> tuple[int, int]:
        g, l = self.sample_many(rng, 1)
        return int(g[0]), int(l[0])

    def sample_many(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def local_slices(self, s: float) -> list[tuple[int, float, float]]:
        """Triples ``(x, E[s^X_G; X_L = x], d/ds of the same)`` over the local support.

        Only available when X_L has finite support.
        """
        raise ValueError(f"{type(self).__name__} has unbounded local support")

    # convenience views
    def local_pgf(self, t: float) -> float:
        return self.joint_pgf(1.0, t)

    def weighted_local_pgf(self, t: float) -> float:
        return self.pgf_grad(1.0, t)[0]

    def swap(self, p: float) -> ContactModel:
        return swap(self, p)


@dataclass(frozen=True)
class Constant(ContactModel):
    g: int
    l: int

    def __post_init__(self):
        if self.g < 0 or self.l < 0:
            raise ValueError("contact counts must be nonnegative")
        if int(self.g) != self.g or int(self.l) != self.l:
            raise ValueError("contact counts must be integers")
        object.__setattr__(self, "g", int(self.g))
        object.__setattr__(self, "l", int(self.l))

    @property
    def max_local(self) -> int:
        return self.l

    def joint_pgf(self, s1, s2):
        return _pow(s1, self.g) * _pow(s2, self.l)

    def pgf_grad(self, s1, s2):
        return (_dpow(s1, self.g) * _pow(s2, self.l), _pow(s1, self.g) * _dpow(s2, self.l))

    def moments(self):
        return Moments(float(self.g), float(self.l), 0.0, 0.0, 0.0)

    def sample_many(self, rng, size):
        return np.full(size, self.g, dtype=np.int64), np.full(size, self.l, dtype=np.int64)

    def local_slices(self, s):
        return [(self.l, _pow(s, self.g), _dpow(s, self.g))]


@dataclass(frozen=True)
class IndependentPoisson(ContactModel):
    lambda_g: float
    lambda_l: float

    def __post_init__(self):
        if self.lambda_g < 0 or self.lambda_l < 0:
            raise ValueError("Poisson rates must be nonnegative")

    @property
    def max_local(self) -> int | None:
        return 0 if self.lambda_l == 0 else None

    def joint_pgf(self, s1, s2):
        return math.exp(self.lambda_g * (s1 - 1.0) + self.lambda_l * (s2 - 1.0))

    def pgf_grad(self, s1, s2):
        f = self.joint_pgf(s1, s2)
        return self.lambda_g * f, self.lambda_l * f

    def moments(self):
        return Moments(self.lambda_g, self.lambda_l, self.lambda_g, self.lambda_l, 0.0)

    def sample_many(self, rng, size):
        return rng.poisson(self.lambda_g, size), rng.poisson(self.lambda_l, size)

    def local_slices(self, s):
        if self.lambda_l != 0:
            return super().local_slices(s)
        f = math.exp(self.lambda_g * (s - 1.0))
        return [(0, f, self.lambda_g * f)]


@dataclass(frozen=True)
class IndependentBinomial(ContactModel):
    n_g: int
    q_g: float
    n_l: int
    q_l: float

    def __post_init__(self):
        if self.n_g < 0 or self.n_l < 0:
            raise ValueError("binomial sizes must be nonnegative")
        if not (0.0 <= self.q_g <= 1.0 and 0.0 <= self.q_l <= 1.0):
            raise ValueError("binomial probabilities must lie in [0, 1]")

    @property
    def max_local(self) -> int:
        return self.n_l

    def _fg(self, s):
        return _pow(1.0 - self.q_g + self.q_g * s, self.n_g)

    def _dfg(self, s):
        return self.q_g * _dpow(1.0 - self.q_g + self.q_g * s, self.n_g)

    def joint_pgf(self, s1, s2):
        return self._fg(s1) * _pow(1.0 - self.q_l + self.q_l * s2, self.n_l)

    def pgf_grad(self, s1, s2):
        bl = 1.0 - self.q_l + self.q_l * s2
        return (
            self._dfg(s1) * _pow(bl, self.n_l),
            self._fg(s1) * self.q_l * _dpow(bl, self.n_l),
        )

    def moments(self):
        return Moments(
            self.n_g * self.q_g,
            self.n_l * self.q_l,
            self.n_g * self.q_g * (1.0 - self.q_g),
            self.n_l * self.q_l * (1.0 - self.q_l),
            0.0,
        )

    def sample_many(self, rng, size):
        return rng.binomial(self.n_g, self.q_g, size), rng.binomial(self.n_l, self.q_l, size)

    def local_slices(self, s):
        fg, dfg = self._fg(s), self._dfg(s)
        out = []
        for x in range(self.n_l + 1):
            w = math.comb(self.n_l, x) * _pow(self.q_l, x) * _pow(1.0 - self.q_l, self.n_l - x)
            out.append((x, w * fg, w * dfg))
        return out


@dataclass(frozen=True)
class Gamma:
    """Gamma mixing law with (shape, rate) parameters; mean shape/rate."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("Gamma shape and rate must be positive")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate**2

    def mgf(self, u: float) -> float:
        return (1.0 - u / self.rate) ** (-self.shape)

    def dmgf(self, u: float) -> float:
        return self.shape / self.rate * (1.0 - u / self.rate) ** (-self.shape - 1.0)

    def draw(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)


def Exponential(rate: float) -> Gamma:
    return Gamma(1.0, rate)


@dataclass(frozen=True)
class PointMass:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("point-mass value must be nonnegative")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def var(self) -> float:
        return 0.0

    def mgf(self, u: float) -> float:
        return math.exp(self.value * u)

    def dmgf(self, u: float) -> float:
        return self.value * math.exp(self.value * u)

    def draw(self, rng, size):
        return np.full(size, self.value)


@dataclass(frozen=True)
class MixedPoisson(ContactModel):
    """X_G | I ~ Po(beta_g I) and X_L | I ~ Po(beta_l I), sharing one draw of I."""

    beta_g: float
    beta_l: float
    mixing: Gamma | PointMass

    def __post_init__(self):
        if self.beta_g < 0 or self.beta_l < 0:
            raise ValueError("contact rates must be nonnegative")

    @property
    def max_local(self) -> int | None:
        return 0 if self.beta_l == 0 or self.mixing.mean == 0 else None

    def _u(self, s1, s2):
        # u <= 0 on the unit square, so the Gamma mgf is finite there
        return self.beta_g * (s1 - 1.0) + self.beta_l * (s2 - 1.0)

    def joint_pgf(self, s1, s2):
        return self.mixing.mgf(self._u(s1, s2))

    def pgf_grad(self, s1, s2):
        d = self.mixing.dmgf(self._u(s1, s2))
        return self.beta_g * d, self.beta_l * d

    def moments(self):
        m, v = self.mixing.mean, self.mixing.var
        return Moments(
            self.beta_g * m,
            self.beta_l * m,
            self.beta_g * m + self.beta_g**2 * v,
            self.beta_l * m + self.beta_l**2 * v,
            self.beta_g * self.beta_l * v,
        )

    def sample_many(self, rng, size):
        i = self.mixing.draw(rng, size)
        return rng.poisson(self.beta_g * i), rng.poisson(self.beta_l * i)

    def local_slices(self, s):
        if self.max_local != 0:
            return super().local_slices(s)
        return [(0, self.joint_pgf(s, 1.0), self.pgf_grad(s, 1.0)[0])]


@dataclass(frozen=True)
class JointTable(ContactModel):
    """Finite joint pmf given as ``(x_g, x_l, prob)`` atoms."""

    entries: tuple[tuple[int, int, float], ...]
    _xg: np.ndarray = field(init=False, repr=False, compare=False)
    _xl: np.ndarray = field(init=False, repr=False, compare=False)
    _p: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((int(g), int(l), float(p)) for g, l, p in self.entries)
        if not entries:
            raise ValueError("joint table must have at least one atom")
        for g, l, p in entries:
            if g < 0 or l < 0:
                raise ValueError("joint table support must be nonnegative integers")
            if not 0.0 <= p <= 1.0:
                raise ValueError("joint table probabilities must lie in [0, 1]")
        total = math.fsum(p for _, _, p in entries)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"joint table probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_xg", np.array([e[0] for e in entries], dtype=np.int64))
        object.__setattr__(self, "_xl", np.array([e[1] for e in entries], dtype=np.int64))
        object.__setattr__(self, "_p", np.array([e[2] for e in entries]))

    @property
    def max_local(self) -> int:
        return int(self._xl.max())

    def joint_pgf(self, s1, s2):
        return math.fsum(p * _pow(s1, g) * _pow(s2, l) for g, l, p in self.entries)

    def pgf_grad(self, s1, s2):
        return (
            math.fsum(p * _dpow(s1, g) * _pow(s2, l) for g, l, p in self.entries),
            math.fsum(p * _pow(s1, g) * _dpow(s2, l) for g, l, p in self.entries),
        )

    def moments(self):
        xg, xl, p = self._xg, self._xl, self._p
        mg, ml = float(p @ xg), float(p @ xl)
        return Moments(
            mg,
            ml,
            float(p @ (xg - mg) ** 2),
            float(p @ (xl - ml) ** 2),
            float(p @ ((xg - mg) * (xl - ml))),
        )

    def sample_many(self, rng, size):
        idx = rng.choice(len(self.entries), size=size, p=self._p / self._p.sum())
        return self._xg[idx], self._xl[idx]

    def local_slices(self, s):
        acc: dict[int, list[float]] = {}
        for g, l, p in self.entries:
            acc.setdefault(l, [0.0, 0.0])
            acc[l][0] += p * _pow(s, g)
            acc[l][1] += p * _dpow(s, g)
        return [(x, v, dv) for x, (v, dv) in sorted(acc.items())]


@dataclass(frozen=True)
class SwappedModel(ContactModel):
    """Law after each local contact independently turns global with probability p.

    Evaluated analytically: f'(s1, s2) = f(s1, p s1 + (1 - p) s2).
    """

    base: ContactModel
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("swap probability must lie in [0, 1]")

    @property
    def max_local(self) -> int | None:
        if self.p == 1.0:
            return 0
        return self.base.max_local

    def _t(self, s1, s2):
        return self.p * s1 + (1.0 - self.p) * s2

    def joint_pgf(self, s1, s2):
        return self.base.joint_pgf(s1, self._t(s1, s2))

    def pgf_grad(self, s1, s2):
        d1, d2 = self.base.pgf_grad(s1, self._t(s1, s2))
        return d1 + self.p * d2, (1.0 - self.p) * d2

    def moments(self):
        mg, ml, vg, vl, c = self.base.moments()
        p = self.p
        return Moments(
            mg + p * ml,
            (1.0 - p) * ml,
            vg + 2.0 * p * c + p * p * vl + p * (1.0 - p) * ml,
            (1.0 - p) ** 2 * vl + p * (1.0 - p) * ml,
            (1.0 - p) * (c + p * vl - p * ml),
        )

    def sample_many(self, rng, size):
        g, l = self.base.sample_many(rng, size)
        y = rng.binomial(l, self.p)
        return g + y, l - y

    def local_slices(self, s):
        p = self.p
        acc: dict[int, list[float]] = {}
        for x, a, da in self.base.local_slices(s):
            for y in range(x + 1):
                k = math.comb(x, y) * _pow(1.0 - p, y) * _pow(p, x - y)
                if k == 0.0:
                    continue
                acc.setdefault(y, [0.0, 0.0])
                acc[y][0] += a * k * _pow(s, x - y)
                acc[y][1] += k * (da * _pow(s, x - y) + a * _dpow(s, x - y))
        return [(y, v, dv) for y, (v, dv) in sorted(acc.items())]


def swap(model: ContactModel, p: float) -> ContactModel:
    """Apply the local-to-global swap; p = 0 returns the model unchanged."""
    if p == 0.0:
        return model
    return SwappedModel(model, p)


def joint_pgf(model: ContactModel, s1: float, s2: float) -> float:
    return model.joint_pgf(s1, s2)


def local_pgf(model: ContactModel, t: float) -> float:
    return model.joint_pgf(1.0, t)


def weighted_local_pgf(model: ContactModel, t: float) -> float:
    """E[X_G t^X_L], the s1-partial of the joint pgf at (1, t)."""
    return model.pgf_grad(1.0, t)[0]


def moments(model: ContactModel) -> Moments:
    return model.moments()


def sample(model: ContactModel, rng: np.random.Generator) -> tuple[int, int]:
    return model.sample(rng)


def log_convexity_report(model: ContactModel, grid_size: int = 201, delta: float = 1e-6) -> dict:
    """Check convexity of log f_{X_L} by second differences on [delta, 1].

    Report only: a positive answer is what the final-size monotonicity
    results in h and p require.
    """
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    s = np.linspace(delta, 1.0, grid_size)
    with np.errstate(divide="ignore"):
        lf = np.log([model.joint_pgf(1.0, float(x)) for x in s])
    d2 = lf[2:] - 2.0 * lf[1:-1] + lf[:-2]
    if not np.all(np.isfinite(d2)):
        # log f = -inf at the low end: treat as non-convex only if it bends down
        d2 = np.where(np.isfinite(d2), d2, -np.inf)
    m = float(d2.min())
    return {"convex": bool(m >= -1e-9), "min_second_diff": m}


# JSON model specs


def _mixing_from_dict(d: dict) -> Gamma | PointMass:
    if len(d) != 1:
        raise ValueError(f"mixing spec must have exactly one key, got {sorted(d)}")
    (name, par), = d.items()
    if name == "gamma":
        return Gamma(float(par["shape"]), float(par["rate"]))
    if name in ("exponential", "exp"):
        return Exponential(float(par["rate"]))
    if name in ("point", "point_mass"):
        return PointMass(float(par["value"]))
    raise ValueError(f"unknown mixing law {name!r}")


def model_from_dict(d: dict[str, Any]) -> ContactModel:
    """Build a model from its JSON description (see README for the schema)."""
    try:
        kind = d["type"]
        if kind == "constant":
            m: ContactModel = Constant(int(d["g"]), int(d["l"]))
        elif kind == "poisson":
            m = IndependentPoisson(float(d["lambda_g"]), float(d["lambda_l"]))
        elif kind == "binomial":
            m = IndependentBinomial(int(d["n_g"]), float(d["q_g"]), int(d["n_l"]), float(d["q_l"]))
        elif kind == "mixed_poisson":
            m = MixedPoisson(float(d["beta_g"]), float(d["beta_l"]), _mixing_from_dict(d["mixing"]))
        elif kind == "joint_table":
            m = JointTable(tuple((int(g), int(l), float(p)) for g, l, p in d["pmf"]))
        else:
            raise ValueError(f"unknown model type {kind!r}")
    except KeyError as e:
        raise ValueError(f"model spec missing field {e}") from None
    if "swap_p" in d:
        m = SwappedModel(m, float(d["swap_p"]))
    return m


def model_to_dict(model: ContactModel) -> dict[str, Any]:
    if isinstance(model, SwappedModel):
        d = model_to_dict(model.base)
        if "swap_p" in d:
            raise ValueError("nested swaps have no JSON form")
        d["swap_p"] = model.p
        return d
    if isinstance(model, Constant):
        return {"type": "constant", "g": model.g, "l": model.l}
    if isinstance(model, IndependentPoisson):
        return {"type": "poisson", "lambda_g": model.lambda_g, "lambda_l": model.lambda_l}
    if isinstance(model, IndependentBinomial):
        return {"type": "binomial", "n_g": model.n_g, "q_g": model.q_g, "n_l": model.n_l, "q_l": model.q_l}
    if isinstance(model, MixedPoisson):
        mix = model.mixing
        if isinstance(mix, Gamma):
            md = {"gamma": {"shape": mix.shape, "rate": mix.rate}}
        else:
            md = {"point": {"value": mix.value}}
        return {"type": "mixed_poisson", "beta_g": model.beta_g, "beta_l": model.beta_l, "mixing": md}
    if isinstance(model, JointTable):
        return {"type": "joint_table", "pmf": [list(e) for e in model.entries]}
    raise TypeError(f"no JSON form for {type(model).__name__}")


def load_model(path: str) -> ContactModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
