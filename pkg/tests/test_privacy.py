"""Noise mechanisms, per-iteration draws, and budget accounting."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfop import privacy, rng
from dfop.exceptions import DegenerateEncryptionError, ParameterError


def laplace_params(C=1.0):
    return privacy.LaplaceParams(scale_schedule=lambda k: 100.0 / k, C=C)


def uniform_params():
    return privacy.UniformParams(halfwidth_schedule=lambda k: 1.0 / (k + 1.0))


class TestSampleLaplace:
    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ParameterError):
            privacy.sample_laplace(0.0, rng.stream(0, 1))

    def test_moments_match_laplace(self):
        gen = rng.stream(3, 1)
        draws = np.array([privacy.sample_laplace(2.0, gen) for _ in range(20000)])
        # mean 0, variance 2 b^2 = 8
        assert abs(draws.mean()) < 0.1
        assert abs(draws.var() - 8.0) < 0.5

    def test_one_uniform_per_draw(self):
        # drawing consumes exactly one uniform: interleaving is predictable
        gen_a = rng.stream(5, 2)
        privacy.sample_laplace(1.0, gen_a)
        tail_a = gen_a.random(4)
        gen_b = rng.stream(5, 2)
        gen_b.uniform(-0.5, 0.5)
        tail_b = gen_b.random(4)
        np.testing.assert_array_equal(tail_a, tail_b)

    @given(st.floats(min_value=1e-3, max_value=1e3))
    def test_scale_only_rescales(self, b):
        x1 = privacy.sample_laplace(1.0, rng.stream(1, 1))
        xb = privacy.sample_laplace(b, rng.stream(1, 1))
        assert xb == pytest.approx(b * x1, rel=1e-12)


class TestLaplacePdf:
    def test_normalizes(self):
        xs = np.linspace(-60, 60, 200001)
        vals = np.array([privacy.laplace_pdf(x, 3.0) for x in xs])
        assert np.trapezoid(vals, xs) == pytest.approx(1.0, abs=1e-6)

    def test_log_ratio_bounded_by_shift_over_b(self):
        b = 2.0
        for x in np.linspace(-5, 5, 21):
            ratio = privacy.laplace_pdf(x, b) / privacy.laplace_pdf(x + 1.0, b)
            assert abs(math.log(ratio)) <= 1.0 / b + 1e-12


class TestIterationDraws:
    def test_pure_function_of_seed_and_k(self):
        lp, up = laplace_params(), uniform_params()
        a = privacy.iteration_draws(4, 7, lp, up, 0.5)
        b = privacy.iteration_draws(4, 7, lp, up, 0.5)
        assert (a.eta, a.gamma, a.use_additive) == (b.eta, b.gamma, b.use_additive)

    def test_defaults_without_mechanisms(self):
        d = privacy.iteration_draws(0, 1)
        assert d.eta == 0.0 and d.gamma == 0.0 and d.use_additive

    def test_gamma_respects_halfwidth(self):
        up = uniform_params()
        for k in range(1, 50):
            d = privacy.iteration_draws(11, k, None, up, 0.5)
            assert abs(d.gamma) <= up.halfwidth(k)

    def test_coin_frequency(self):
        lp, up = laplace_params(), uniform_params()
        hits = sum(
            privacy.iteration_draws(2, k, lp, up, 0.25).use_additive
            for k in range(1, 4001)
        )
        assert abs(hits / 4000.0 - 0.25) < 0.03


class TestEncryptOperators:
    def test_additive_shifts_by_gain_times_eta(self):
        lp = laplace_params(C=3.0)
        assert privacy.additive_encrypt(5.0, 2, lp, 0.5) == pytest.approx(6.5)

    def test_additive_shared_within_iteration(self):
        # the same eta applies to every point of the iteration, so
        # differences of encrypted values equal differences of h
        lp = laplace_params()
        d = privacy.iteration_draws(9, 3, lp)
        e1 = privacy.additive_encrypt(1.25, 3, lp, d.eta)
        e2 = privacy.additive_encrypt(-0.75, 3, lp, d.eta)
        assert e1 - e2 == pytest.approx(2.0, abs=1e-12)

    def test_multiplicative_value(self):
        out = privacy.multiplicative_encrypt(2.0, 1.0, 4, 0.1)
        assert out == pytest.approx(1.0 + 0.1 * 3.0)

    def test_multiplicative_rejects_zero_total(self):
        with pytest.raises(DegenerateEncryptionError):
            privacy.multiplicative_encrypt(1.0, -1.0, 4, 0.1)

    def test_mixed_follows_coin(self):
        lp, up = laplace_params(), uniform_params()
        mix = privacy.MixParams(laplace=lp, uniform=up, prob_additive=0.5)
        add = privacy.IterationDraws(eta=0.5, gamma=0.1, use_additive=True)
        mult = privacy.IterationDraws(eta=0.5, gamma=0.1, use_additive=False)
        va, ta = privacy.mixed_encrypt(2.0, 1.0, 3, mix, add)
        vb, tb = privacy.mixed_encrypt(2.0, 1.0, 3, mix, mult)
        assert ta == "A" and va == pytest.approx(1.5)
        assert tb == "B" and vb == pytest.approx(1.3)


class TestParamValidation:
    def test_laplace_gain_positive(self):
        with pytest.raises(ParameterError):
            privacy.LaplaceParams(scale_schedule=lambda k: 1.0, C=0.0)

    def test_laplace_scale_positive(self):
        lp = privacy.LaplaceParams(scale_schedule=lambda k: -1.0)
        with pytest.raises(ParameterError):
            lp.scale(1)

    def test_uniform_halfwidth_in_open_interval(self):
        up = privacy.UniformParams(halfwidth_schedule=lambda k: 1.0)
        with pytest.raises(ParameterError):
            up.halfwidth(1)

    def test_mix_probability_bounds(self):
        with pytest.raises(ParameterError):
            privacy.MixParams(
                laplace=laplace_params(), uniform=uniform_params(), prob_additive=1.5
            )


class TestBudgets:
    def test_global_sensitivity_max_successive_gap(self):
        assert privacy.global_sensitivity([1.0, 4.0, 2.0, 2.5]) == pytest.approx(3.0)

    def test_global_sensitivity_window_truncation(self):
        assert privacy.global_sensitivity([10.0, 1.0, 2.0, 2.5], m=3) == 1.0

    def test_global_sensitivity_needs_two(self):
        with pytest.raises(ParameterError):
            privacy.global_sensitivity([1.0])

    def test_budget_additive_formula(self):
        assert privacy.budget_additive(3.0, 100.0, 2.0) == pytest.approx(0.015)

    def test_budget_additive_validation(self):
        with pytest.raises(ParameterError):
            privacy.budget_additive(1.0, 0.0, 1.0)
        with pytest.raises(ParameterError):
            privacy.budget_additive(-1.0, 1.0, 1.0)

    def test_budget_multiplicative_max_log_ratio(self):
        eps = privacy.budget_multiplicative([1.0, math.e, math.e])
        assert eps == pytest.approx(1.0, abs=1e-12)

    def test_budget_multiplicative_rejects_zero(self):
        with pytest.raises(DegenerateEncryptionError):
            privacy.budget_multiplicative([1.0, 0.0, 2.0])

    def test_budget_mixed_sums(self):
        assert privacy.budget_mixed(0.25, 0.5) == 0.75
        with pytest.raises(ParameterError):
            privacy.budget_mixed(-0.1, 0.5)

    @given(
        st.lists(st.floats(min_value=-10, max_value=10), min_size=2, max_size=12)
    )
    def test_global_sensitivity_shift_invariant(self, values):
        shifted = [v + 5.0 for v in values]
        assert privacy.global_sensitivity(shifted) == pytest.approx(
            privacy.global_sensitivity(values), abs=1e-9
        )


class TestLedgerAndAudit:
    def test_ledger_append_only(self):
        ledger = privacy.BudgetLedger()
        rec = privacy.BudgetRecord(2, "A", 1.0, 10.0, 1.0, 0.1, 0.2, 0.3)
        ledger.append(rec)
        with pytest.raises(ParameterError):
            ledger.append(privacy.BudgetRecord(2, "A", 1.0, 10.0, 1.0, 0.1, 0.2, 0.3))

    def test_ledger_csv_roundtrip(self, tmp_path):
        ledger = privacy.BudgetLedger()
        ledger.append(privacy.BudgetRecord(2, "A", 1.0, 10.0, 1.0, 0.1, 0.2, 0.3))
        ledger.append(privacy.BudgetRecord(3, "B", 2.0, 5.0, 1.0, 0.4, 0.5, 0.9))
        path = tmp_path / "ledger.csv"
        ledger.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("k,mechanism,GS,b_k,C")
        assert len(lines) == 3

    def test_audit_budgets_records(self):
        lp = laplace_params(C=2.0)
        h = [1.0, 3.0, 2.0, 2.5]
        fh = [2.0, 4.0, 3.0, 3.5]
        ledger = privacy.audit_budgets(h, fh, ["A", "A", "B", "A"], lp, m=3)
        assert [rec.k for rec in ledger.records] == [2, 3, 4]
        rec = ledger.records[0]
        assert rec.gs == pytest.approx(2.0)
        assert rec.b_k == pytest.approx(50.0)
        assert rec.eps_additive == pytest.approx(2.0 / (50.0 * 2.0))
        assert rec.eps_multiplicative == pytest.approx(math.log(2.0))
        assert rec.eps_total == pytest.approx(rec.eps_additive + rec.eps_multiplicative)

    def test_audit_budgets_degenerate_window_is_infinite(self):
        lp = laplace_params()
        ledger = privacy.audit_budgets(
            [1.0, 2.0, 1.5], [1.0, 0.0, 2.0], ["A", "A", "A"], lp, m=3
        )
        assert math.isinf(ledger.records[0].eps_multiplicative)
