import io
import math

import numpy as np
import pytest

from hhe import _oracles
from hhe.contact_models import (
    Constant,
    Exponential,
    Gamma,
    IndependentBinomial,
    IndependentPoisson,
    JointTable,
    MixedPoisson,
    PointMass,
    swap,
)
from hhe.simulator import (
    OutcomeBatch,
    PopulationSpec,
    encode_model,
    run_batch,
    run_epidemic,
    run_until_majors,
    sample_contacts,
    write_runs_csv,
)
from hhe.stats import Fraction

TABLE = JointTable(((0, 0, 0.2), (1, 1, 0.3), (2, 2, 0.25), (0, 2, 0.25)))


def _pmf(batch, N):
    return np.bincount(batch.Z, minlength=N + 1) / len(batch)


class TestExamples:
    def test_no_contacts(self):
        b = run_batch(PopulationSpec(n=7, h=3, model=Constant(0, 0)), 50)
        assert np.all(b.Z == 1) and np.all(b.V == 1)

    def test_housemate_always_hit(self):
        b = run_batch(PopulationSpec(n=9, h=2, model=Constant(0, 1)), 50)
        assert np.all(b.Z == 2) and np.all(b.V == 1)

    def test_population_exhausted(self):
        b = run_batch(PopulationSpec(n=1, h=2, model=Constant(5, 1)), 50)
        assert np.all(b.Z == 2) and np.all(b.V == 1)


class TestInvariants:
    @pytest.mark.parametrize(
        "spec",
        [
            PopulationSpec(n=50, h=3, model=IndependentPoisson(1, 1), seed=1),
            PopulationSpec(n=40, h=4, model=MixedPoisson(1, 2, Gamma(0.5, 0.5)), m=3, p=0.3, seed=2),
            PopulationSpec(n=30, h=5, model=TABLE, local_mode="without", global_mode="without", seed=3),
            PopulationSpec(n=100, h=1, model=IndependentBinomial(3, 0.5, 2, 0.5), seed=4),
        ],
        ids=lambda s: f"n{s.n}h{s.h}",
    )
    def test_bounds(self, spec):
        b = run_batch(spec, 2000)
        assert np.all(b.Z >= spec.m) and np.all(b.Z <= spec.N)
        assert np.all(b.V <= b.Z) and np.all(b.Z <= spec.h * b.V)
        assert np.all(b.V <= spec.n)
        assert np.all(b.global_contacts >= 0)

    def test_global_without_replacement_caps_contacts(self):
        b = run_batch(PopulationSpec(n=2, h=2, model=Constant(9, 0), global_mode="without"), 20)
        # every infective sends exactly N - 1 contacts
        assert np.all(b.global_contacts == b.Z * 3)
        assert np.all(b.Z == 4)


class TestDeterminism:
    spec = PopulationSpec(n=300, h=3, model=MixedPoisson(1, 1, Exponential(1)), p=0.2, seed=99)

    def test_same_seed_same_batch(self):
        assert run_batch(self.spec, 500) == run_batch(self.spec, 500)

    def test_thread_count_irrelevant(self):
        assert run_batch(self.spec, 500, threads=1) == run_batch(self.spec, 500, threads=4)

    def test_single_run_matches_batch(self):
        b = run_batch(self.spec, 1)
        assert b[0] == run_epidemic(self.spec, 0)

    def test_runs_are_indexed(self):
        full = run_batch(self.spec, 40)
        tail = run_batch(self.spec, 15, start=25)
        assert tail == full[25:]
        assert run_epidemic(self.spec, 31) == full[31]

    def test_seed_changes_output(self):
        other = PopulationSpec(**{**self.spec.__dict__, "seed": 100})
        assert run_batch(self.spec, 200) != run_batch(other, 200)

    def test_csv_is_reproducible(self):
        out = []
        for _ in range(2):
            fh = io.StringIO()
            write_runs_csv(run_batch(self.spec, 100), fh)
            out.append(fh.getvalue())
        assert out[0] == out[1]
        assert out[0].splitlines()[0] == "run,Z,V,global_contacts"


class TestLaw:
    @pytest.mark.parametrize(
        "model,n,h,p,m,lw,gw",
        [
            (TABLE, 2, 2, 0.0, 1, True, True),
            (TABLE, 2, 2, 0.4, 1, True, False),
            (Constant(1, 1), 2, 2, 0.5, 1, True, True),
            (IndependentBinomial(2, 0.3, 1, 0.6), 2, 2, 0.0, 2, True, True),
            (JointTable(((0, 1, 0.4), (2, 1, 0.35), (1, 0, 0.25))), 2, 2, 0.0, 1, False, False),
            (TABLE, 2, 1, 0.0, 1, True, True),
        ],
    )
    def test_brute_force_pmf(self, model, n, h, p, m, lw, gw):
        exact = _oracles.population_final_size_pmf(model, n, h, p, m, lw, gw)
        spec = PopulationSpec(n=n, h=h, model=model, m=m, p=p,
                              local_mode="with" if lw else "without",
                              global_mode="with" if gw else "without", seed=11)
        runs = 10**6
        emp = _pmf(run_batch(spec, runs), spec.N)
        for z in range(spec.N + 1):
            pz = exact.get(z, 0.0)
            assert abs(emp[z] - pz) <= 4 * math.sqrt(pz * (1 - pz) / runs) + 1e-12, z

    def test_full_swap_is_homogeneous(self):
        n_runs = 10**5
        a = run_batch(PopulationSpec(n=20, h=2, model=Constant(1, 1), p=1.0, seed=5), n_runs)
        b = run_batch(PopulationSpec(n=20, h=2, model=Constant(2, 0), p=0.0, seed=6), n_runs)
        pa, pb = _pmf(a, 40), _pmf(b, 40)
        tv = 0.5 * np.abs(pa - pb).sum()
        pbar = (pa + pb) / 2
        se = 0.5 * np.sum(np.sqrt(2 * pbar * (1 - pbar) / n_runs))
        assert tv <= 4 * se
        se_mean = math.sqrt((a.Z.var() + b.Z.var()) / n_runs)
        assert abs(a.Z.mean() - b.Z.mean()) <= 4 * se_mean

    def test_single_member_households_skip_local_draws(self):
        # identical streams if and only if no random numbers go to local contacts
        a = run_batch(PopulationSpec(n=500, h=1, model=Constant(1, 0), seed=8), 300)
        b = run_batch(PopulationSpec(n=500, h=1, model=Constant(1, 7), seed=8), 300)
        assert a == b

    def test_poisson_table_value(self):
        spec = PopulationSpec(n=250, h=2, model=IndependentPoisson(1, 1), seed=12)
        b = run_batch(spec, 20_000)
        major = b.Z / spec.N >= 0.2
        pi = major.mean()
        # finite-N value at N = 500 and its sampling error at 10^5 runs
        assert abs(pi - 0.6053) <= 3 * math.hypot(math.sqrt(pi * (1 - pi) / 20_000), 0.0015)


class TestEngineSamplers:
    def test_first_draw_of_each_stream_is_uniform(self):
        # ten equally likely atoms decided by the first uniform of each stream
        tab = JointTable(tuple((k, 0, 0.1) for k in range(10)))
        g, _ = sample_contacts(tab, 200_000, seed=1)
        counts = np.bincount(g, minlength=10)
        chi2 = float(np.sum((counts - 20_000) ** 2 / 20_000))
        assert chi2 < 35.0  # 0.9999 quantile of chi^2_9 is about 33.7

    @pytest.mark.parametrize(
        "model",
        [
            IndependentPoisson(0.8, 2.5),
            IndependentPoisson(45.0, 3.0),
            IndependentBinomial(5, 0.3, 7, 0.9),
            MixedPoisson(1.0, 1.0, Gamma(0.5, 0.5)),
            MixedPoisson(2.0, 0.5, Gamma(3.0, 1.5)),
            MixedPoisson(40.0, 1.0, Exponential(1.0)),
            MixedPoisson(1.5, 0.5, PointMass(2.0)),
            TABLE,
            swap(IndependentPoisson(1.0, 2.0), 0.3),
        ],
        ids=repr,
    )
    def test_moments(self, model):
        n = 400_000
        g, l = sample_contacts(model, n, seed=2)
        m = model.moments()
        for x, mu, var in ((g, m.mu_g, m.var_g), (l, m.mu_l, m.var_l)):
            assert abs(x.mean() - mu) <= 5 * math.sqrt(var / n) + 1e-12
            if var > 0:
                assert x.var() == pytest.approx(var, rel=0.05)
        if m.var_g > 0 and m.var_l > 0:
            assert np.cov(g, l)[0, 1] == pytest.approx(m.cov_gl, abs=0.05 * math.sqrt(m.var_g * m.var_l) + 0.01)

    def test_nested_swaps_compose(self):
        enc = encode_model(swap(swap(IndependentPoisson(1, 1), 0.3), 0.5), p=0.2)
        assert enc.p == pytest.approx(1 - 0.7 * 0.5 * 0.8)

    def test_large_poisson_is_split(self):
        g, _ = sample_contacts(IndependentPoisson(200.0, 0.0), 100_000, seed=9)
        assert g.mean() == pytest.approx(200.0, abs=5 * math.sqrt(200 / 100_000))
        assert g.var() == pytest.approx(200.0, rel=0.03)


class TestUntilMajors:
    spec = PopulationSpec(n=200, h=2, model=IndependentPoisson(1, 1), seed=21)

    def test_stops_at_kth_major(self):
        b = run_until_majors(self.spec, 300, Fraction(0.2), chunk=128)
        major = b.Z / self.spec.N >= 0.2
        assert major.sum() == 300 and major[-1]

    def test_chunking_irrelevant(self):
        a = run_until_majors(self.spec, 250, Fraction(0.2), chunk=64, threads=1)
        b = run_until_majors(self.spec, 250, Fraction(0.2), chunk=1000, threads=3)
        assert a == b
        assert a == run_batch(self.spec, len(a))


class TestValidation:
    def test_bad_m(self):
        with pytest.raises(ValueError):
            PopulationSpec(n=2, h=2, model=Constant(1, 1), m=5)

    def test_bad_p(self):
        with pytest.raises(ValueError):
            PopulationSpec(n=2, h=2, model=Constant(1, 1), p=1.5)

    def test_without_replacement_needs_bounded_local(self):
        with pytest.raises(ValueError):
            PopulationSpec(n=2, h=3, model=IndependentPoisson(1, 1), local_mode="without")
        with pytest.raises(ValueError):
            PopulationSpec(n=2, h=2, model=Constant(1, 2), local_mode="without")

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            PopulationSpec(n=2, h=2, model=Constant(1, 1), local_mode="sometimes")

    def test_batch_type(self):
        b = run_batch(PopulationSpec(n=5, h=2, model=Constant(1, 1)), 3)
        assert isinstance(b, OutcomeBatch) and len(b) == 3 and b.N == 10
        assert b.fractions.shape == (3,)
