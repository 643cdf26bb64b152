import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hhe.contact_models import (
    Constant,
    Exponential,
    Gamma,
    IndependentBinomial,
    IndependentPoisson,
    JointTable,
    MixedPoisson,
    PointMass,
    SwappedModel,
    joint_pgf,
    local_pgf,
    log_convexity_report,
    model_from_dict,
    model_to_dict,
    moments,
    swap,
    weighted_local_pgf,
)

CATALOG = [
    Constant(1, 1),
    Constant(2, 0),
    IndependentPoisson(1.0, 1.0),
    IndependentPoisson(0.7, 2.3),
    IndependentBinomial(2, 0.5, 2, 0.5),
    IndependentBinomial(3, 0.2, 4, 0.7),
    MixedPoisson(1.0, 1.0, Gamma(2.0, 2.0)),
    MixedPoisson(1.0, 1.0, Exponential(1.0)),
    MixedPoisson(1.0, 1.0, Gamma(0.5, 0.5)),
    MixedPoisson(0.4, 1.7, PointMass(1.3)),
    JointTable(((0, 0, 0.2), (1, 1, 0.3), (2, 2, 0.25), (0, 2, 0.25))),
    JointTable(((3, 0, 0.5), (0, 3, 0.5))),
]
GRID = np.linspace(0.0, 1.0, 11)


def _num_moments(model):
    """Moments from finite differences of the pgf at (1, 1)."""
    e = 1e-4
    f = model.joint_pgf
    d1 = (f(1, 1) - f(1 - e, 1)) / e
    d2 = (f(1, 1) - f(1, 1 - e)) / e
    return d1, d2


class TestExamples:
    def test_constant_pgf(self):
        assert joint_pgf(Constant(1, 1), 0.5, 0.5) == 0.25

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_normalized(self, model):
        assert abs(joint_pgf(model, 1.0, 1.0) - 1.0) <= 1e-12

    def test_gamma_mixed_at_origin(self):
        # u = -2 and (1 - u / 2)^-2 = 1/4
        assert joint_pgf(MixedPoisson(1, 1, Gamma(2, 2)), 0.0, 0.0) == pytest.approx(0.25, abs=1e-15)

    def test_local_pgf_poisson(self):
        assert local_pgf(IndependentPoisson(1, 1), 0.0) == pytest.approx(math.exp(-1), abs=1e-15)

    def test_weighted_constant(self):
        assert weighted_local_pgf(Constant(2, 1), 0.5) == pytest.approx(1.0, abs=1e-15)

    def test_weighted_poisson(self):
        assert weighted_local_pgf(IndependentPoisson(1, 1), 0.5) == pytest.approx(math.exp(-0.5), abs=1e-15)

    def test_moments_constant(self):
        assert tuple(moments(Constant(1, 1))) == (1, 1, 0, 0, 0)

    def test_moments_exp_mixing(self):
        assert moments(MixedPoisson(1, 1, Exponential(1))).var_g == pytest.approx(2.0)

    def test_moments_swapped_poisson(self):
        assert moments(swap(IndependentPoisson(1, 1), 0.5)).var_g == pytest.approx(1.5)

    def test_constant_rejects_fractional_counts(self):
        with pytest.raises(ValueError):
            Constant(0.5, 1)

    def test_table_must_sum_to_one(self):
        with pytest.raises(ValueError):
            JointTable(((0, 0, 0.5), (1, 1, 0.4)))


class TestInvariants:
    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_monotone_on_grid(self, model):
        vals = np.array([[model.joint_pgf(a, b) for b in GRID] for a in GRID])
        assert np.all(np.diff(vals, axis=0) >= -1e-15)
        assert np.all(np.diff(vals, axis=1) >= -1e-15)
        assert np.all((vals >= 0) & (vals <= 1 + 1e-15))

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_local_pgf_is_slice(self, model):
        for t in GRID:
            assert local_pgf(model, t) == model.joint_pgf(1.0, t)

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_weighted_at_one_is_mean(self, model):
        assert abs(weighted_local_pgf(model, 1.0) - model.moments().mu_g) <= 1e-10

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_weighted_matches_numeric_partial(self, model):
        e = 1e-6
        for t in (0.0, 0.3, 0.8):
            num = (model.joint_pgf(1.0, t) - model.joint_pgf(1.0 - e, t)) / e
            assert weighted_local_pgf(model, t) == pytest.approx(num, rel=1e-4, abs=1e-6)

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_means_match_pgf_derivative(self, model):
        d1, d2 = _num_moments(model)
        m = model.moments()
        assert m.mu_g == pytest.approx(d1, rel=1e-3, abs=1e-4)
        assert m.mu_l == pytest.approx(d2, rel=1e-3, abs=1e-4)

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_swap_zero_is_identity(self, model):
        s = swap(model, 0.0)
        for a in GRID:
            for b in GRID:
                assert abs(s.joint_pgf(a, b) - model.joint_pgf(a, b)) <= 1e-12

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_swap_one_kills_local(self, model):
        assert swap(model, 1.0).moments().mu_l == 0.0

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_swap_preserves_total_mean(self, model):
        m = model.moments()
        for p in np.linspace(0, 1, 11):
            s = swap(model, p).moments()
            assert s.mu_g == pytest.approx(m.mu_g + p * m.mu_l, abs=1e-12)
            assert s.mu_g + s.mu_l == pytest.approx(m.mu_g + m.mu_l, abs=1e-12)

    @pytest.mark.parametrize("model", CATALOG, ids=repr)
    def test_swap_pgf_substitution(self, model):
        p = 0.37
        s = swap(model, p)
        for a in GRID:
            for b in GRID:
                assert s.joint_pgf(a, b) == pytest.approx(model.joint_pgf(a, p * a + (1 - p) * b), abs=1e-14)


def _table_second_moments(entries):
    g = np.array([e[0] for e in entries], float)
    l = np.array([e[1] for e in entries], float)
    p = np.array([e[2] for e in entries], float)
    mg, ml = p @ g, p @ l
    return mg, ml, p @ (g - mg) ** 2, p @ (l - ml) ** 2, p @ ((g - mg) * (l - ml))


@st.composite
def tables(draw):
    k = draw(st.integers(1, 5))
    atoms = [(draw(st.integers(0, 4)), draw(st.integers(0, 4))) for _ in range(k)]
    w = [draw(st.floats(0.05, 1.0)) for _ in range(k)]
    tot = sum(w)
    probs = [x / tot for x in w]
    probs[-1] = 1.0 - sum(probs[:-1])
    return tuple((g, l, p) for (g, l), p in zip(atoms, probs))


@settings(max_examples=60, deadline=None)
@given(tables(), st.floats(0.0, 1.0))
def test_swapped_moments_match_enumeration(entries, p):
    # exact law of the swapped pair: Y ~ Bin(l, p) moves from local to global
    out = []
    for g, l, pr in entries:
        for y in range(l + 1):
            out.append((g + y, l - y, pr * math.comb(l, y) * p**y * (1 - p) ** (l - y)))
    expect = _table_second_moments(out)
    got = tuple(swap(JointTable(entries), p).moments())
    assert got == pytest.approx(expect, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(tables())
def test_table_moments(entries):
    assert tuple(JointTable(entries).moments()) == pytest.approx(_table_second_moments(entries), abs=1e-12)


class TestSampling:
    def test_constant(self):
        rng = np.random.default_rng(0)
        assert all(Constant(1, 1).sample(rng) == (1, 1) for _ in range(20))

    def test_degenerate_table(self):
        rng = np.random.default_rng(0)
        assert all(JointTable(((0, 0, 1.0),)).sample(rng) == (0, 0) for _ in range(20))

    def test_poisson_mean(self):
        rng = np.random.default_rng(1)
        g, l = IndependentPoisson(1.0, 1.0).sample_many(rng, 10**6)
        se = math.sqrt(1.0 / 10**6)
        assert abs(g.mean() - 1) < 3 * se and abs(l.mean() - 1) < 3 * se

    def test_table_pmf(self):
        entries = ((0, 0, 0.1), (1, 2, 0.25), (2, 1, 0.4), (3, 3, 0.25))
        rng = np.random.default_rng(2)
        n = 10**6
        g, l = JointTable(entries).sample_many(rng, n)
        for x, y, p in entries:
            freq = np.mean((g == x) & (l == y))
            assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / n)

    @pytest.mark.parametrize("model", [m for m in CATALOG if not isinstance(m, Constant)], ids=repr)
    def test_sample_moments(self, model):
        rng = np.random.default_rng(3)
        n = 400_000
        g, l = model.sample_many(rng, n)
        m = model.moments()
        assert abs(g.mean() - m.mu_g) < 5 * math.sqrt(m.var_g / n) + 1e-12
        assert abs(l.mean() - m.mu_l) < 5 * math.sqrt(m.var_l / n) + 1e-12
        assert np.cov(g, l)[0, 1] == pytest.approx(m.cov_gl, abs=0.05 * (1 + m.var_g + m.var_l))

    def test_swapped_sampler_moments(self):
        rng = np.random.default_rng(4)
        s = swap(MixedPoisson(1.0, 1.0, Exponential(1.0)), 0.4)
        g, l = s.sample_many(rng, 400_000)
        m = s.moments()
        assert g.var() == pytest.approx(m.var_g, rel=0.03)
        assert np.cov(g, l)[0, 1] == pytest.approx(m.cov_gl, rel=0.05)


class TestLogConvexity:
    def test_poisson_convex(self):
        assert log_convexity_report(IndependentPoisson(1, 1))["convex"]

    def test_constant_not_convex(self):
        assert not log_convexity_report(Constant(1, 1))["convex"]

    def test_exp_mixing_convex(self):
        assert log_convexity_report(MixedPoisson(1, 1, Exponential(1)))["convex"]

    def test_binomial_not_convex(self):
        assert not log_convexity_report(IndependentBinomial(2, 0.5, 2, 0.5))["convex"]


class TestJson:
    @pytest.mark.parametrize(
        "spec",
        [
            {"type": "poisson", "lambda_g": 1, "lambda_l": 1},
            {"type": "binomial", "n_g": 2, "q_g": 0.5, "n_l": 2, "q_l": 0.5},
            {"type": "constant", "g": 1, "l": 1},
            {"type": "mixed_poisson", "beta_g": 1, "beta_l": 1, "mixing": {"gamma": {"shape": 2, "rate": 2}}},
            {"type": "joint_table", "pmf": [[0, 1, 0.5], [2, 0, 0.5]]},
            {"type": "poisson", "lambda_g": 1, "lambda_l": 1, "swap_p": 0.3},
        ],
    )
    def test_round_trip(self, spec):
        m = model_from_dict(json.loads(json.dumps(spec)))
        again = model_from_dict(model_to_dict(m))
        assert again == m
        if "swap_p" in spec:
            assert isinstance(m, SwappedModel) and m.p == 0.3

    def test_exponential_alias(self):
        m = model_from_dict({"type": "mixed_poisson", "beta_g": 1, "beta_l": 1, "mixing": {"exponential": {"rate": 1}}})
        assert m.mixing == Gamma(1.0, 1.0)

    @pytest.mark.parametrize(
        "spec",
        [{"type": "nope"}, {"type": "poisson", "lambda_g": 1}, {"type": "poisson", "lambda_g": -1, "lambda_l": 1}],
    )
    def test_bad_specs(self, spec):
        with pytest.raises(ValueError):
            model_from_dict(spec)
