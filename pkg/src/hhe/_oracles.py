"""Independent reference computations used by the test suite and ``hhe verify``.

None of these share code with the production recursions: they enumerate
contact realizations directly or work in exact rational arithmetic.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from fractions import Fraction

from .contact_models import (
    Constant,
    ContactModel,
    IndependentBinomial,
    JointTable,
    SwappedModel,
)


def rational_gont(x, nodes, n_max: int) -> list[Fraction]:
    """G_0..G_{n_max} in exact arithmetic, straight from the defining identity."""
    x = Fraction(x)
    u = [Fraction(v) for v in nodes]
    G: list[Fraction] = []
    for n in range(n_max + 1):
        rest = sum(
            (math.perm(n, i) * u[i] ** (n - i) * G[i] for i in range(n)),
            Fraction(0),
        )
        G.append((x**n - rest) / math.factorial(n))
    return G


def atoms(model: ContactModel) -> list[tuple[int, int, float]]:
    """Finite joint pmf of (X_G, X_L) as (g, l, prob) atoms."""
    if isinstance(model, Constant):
        return [(model.g, model.l, 1.0)]
    if isinstance(model, JointTable):
        return list(model.entries)
    if isinstance(model, IndependentBinomial):
        out = []
        for g in range(model.n_g + 1):
            pg = math.comb(model.n_g, g) * model.q_g**g * (1 - model.q_g) ** (model.n_g - g)
            for l in range(model.n_l + 1):
                pl = math.comb(model.n_l, l) * model.q_l**l * (1 - model.q_l) ** (model.n_l - l)
                out.append((g, l, pg * pl))
        return out
    if isinstance(model, SwappedModel):
        out = []
        p = model.p
        for g, l, pr in atoms(model.base):
            for y in range(l + 1):
                w = math.comb(l, y) * p**y * (1 - p) ** (l - y)
                out.append((g + y, l - y, pr * w))
        return out
    raise TypeError(f"{type(model).__name__} has no finite atom list")


def _target_sets(others: list[int], k: int, with_replacement: bool):
    """(prob, frozenset) for the distinct individuals hit by k contacts among ``others``."""
    acc: dict[frozenset, float] = defaultdict(float)
    if k == 0:
        acc[frozenset()] = 1.0
    elif not others:
        acc[frozenset()] = 1.0
    elif with_replacement:
        w = 1.0 / len(others) ** k
        for seq in itertools.product(others, repeat=k):
            acc[frozenset(seq)] += w
    else:
        k = min(k, len(others))
        combos = list(itertools.combinations(others, k))
        for c in combos:
            acc[frozenset(c)] += 1.0 / len(combos)
    return [(pr, s) for s, pr in acc.items()]


def _individual_outcomes(model, h, j, with_replacement):
    acc: dict[tuple[int, frozenset], float] = defaultdict(float)
    others = [k for k in range(h) if k != j]
    for g, l, pr in atoms(model):
        if pr == 0.0:
            continue
        for w, tgt in _target_sets(others, l, with_replacement):
            acc[g, tgt] += pr * w
    return [(pr, g, tgt) for (g, tgt), pr in acc.items()]


def _reach(edges, start):
    seen = set(start)
    stack = list(start)
    while stack:
        i = stack.pop()
        for j in edges[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def household_enumeration(model: ContactModel, h: int, with_replacement: bool = True):
    """Exact pmfs of S (susceptibility-set size of member 0) and C (global contacts
    from an epidemic started by member 0), by enumerating every local-contact digraph.

    Returns ``(s_pmf, c_pmf)`` with s_pmf[i-1] = P(S = i) and c_pmf a dict.
    """
    per = [_individual_outcomes(model, h, j, with_replacement) for j in range(h)]
    s_pmf = [0.0] * h
    c_pmf: dict[int, float] = defaultdict(float)
    for combo in itertools.product(*per):
        pr = math.prod(c[0] for c in combo)
        if pr == 0.0:
            continue
        edges = [c[2] for c in combo]
        rev = [[k for k in range(h) if j in edges[k]] for j in range(h)]
        s_pmf[len(_reach(rev, [0])) - 1] += pr
        infected = _reach(edges, [0])
        c_pmf[sum(combo[k][1] for k in infected)] += pr
    return s_pmf, dict(c_pmf)


def population_final_size_pmf(model: ContactModel, n: int, h: int, p: float = 0.0, m: int = 1,
                              local_wr: bool = True, global_wr: bool = True) -> dict[int, float]:
    """Exact law of the final size Z in a tiny population (N = n h of a handful)."""
    if p:
        model = SwappedModel(model, p)
    big_n = n * h
    per = []
    for i in range(big_n):
        hh = i // h
        mates = [hh * h + k for k in range(h) if hh * h + k != i]
        everyone = list(range(big_n)) if global_wr else [k for k in range(big_n) if k != i]
        acc: dict[frozenset, float] = defaultdict(float)
        for g, l, pr in atoms(model):
            if pr == 0.0:
                continue
            for wl, tl in _target_sets(mates, l, local_wr):
                for wg, tg in _target_sets(everyone, g, global_wr):
                    acc[tl | tg] += pr * wl * wg
        per.append(list(acc.items()))
    starts = list(itertools.combinations(range(big_n), m))
    out: dict[int, float] = defaultdict(float)
    for combo in itertools.product(*per):
        pr = math.prod(c[1] for c in combo)
        if pr == 0.0:
            continue
        edges = [c[0] for c in combo]
        for s in starts:
            out[len(_reach(edges, s))] += pr / len(starts)
    return dict(out)
