"""Harmonic construction: closed form, linear solve, conditions, Monte Carlo."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import harmonictails as ht

RATIO = 3.0 / 7.0  # q/p for the default up probability 0.7


def exact_f(i, alpha=2.0):
    f0 = alpha * (1 - RATIO) / (1 - alpha * RATIO)
    return 1.0 - RATIO**i + RATIO**i * f0


# ---------------------------------------------------------------------------
# closed form


def test_closed_form_values():
    assert ht.reflected_walk_harmonic_exact(2.0, 0.7, 0) == pytest.approx(8.0, abs=1e-14)
    assert ht.reflected_walk_harmonic_exact(2.0, 0.7, 1) == pytest.approx(4.0, abs=1e-14)
    for i in range(21):
        got = ht.reflected_walk_harmonic_exact(2.0, 0.7, i)
        assert got == pytest.approx(1.0 + 7.0 * RATIO**i, abs=1e-13)
    arr = ht.reflected_walk_harmonic_exact(2.0, 0.7, np.arange(5))
    assert isinstance(arr, np.ndarray)
    np.testing.assert_allclose(arr, [exact_f(i) for i in range(5)], rtol=1e-14)


def test_closed_form_critical_and_beyond():
    crit = 0.7 / 0.3
    vals = ht.reflected_walk_harmonic_exact(crit, 0.7, np.arange(6))
    np.testing.assert_allclose(vals, RATIO ** np.arange(6), rtol=1e-12)
    with pytest.raises(ht.NoPositiveHarmonicError):
        ht.reflected_walk_harmonic_exact(3.0, 0.7, 0)
    with pytest.raises(ht.UnsupportedInputError):
        ht.reflected_walk_harmonic_exact(2.0, 0.4, 0)
    with pytest.raises(ht.UnsupportedInputError):
        ht.reflected_walk_harmonic_exact(-1.0, 0.7, 0)


# ---------------------------------------------------------------------------
# linear solve


def test_solve_matches_closed_form(ex1_kernel):
    est = ht.build_solve(ex1_kernel, K=400)
    assert est.method == "linear-solve"
    assert est.residual is not None and est.residual <= 1e-9
    assert est.meta["doubling_disagreement"] is not None
    assert est.meta["doubling_disagreement"] <= 1e-6
    for i in range(21):
        assert est.value(i) == pytest.approx(exact_f(i), abs=1e-8)
    # pinned boundary extends the function above the truncation
    assert est.value(1000) == 1.0
    with pytest.raises(ht.StateRangeError):
        ht.build_solve(ex1_kernel, K=400, check_doubling=True).value(-1)


def test_solve_trichotomy():
    ok = ht.build_solve(ht.perturbed_reflected_walk(p=0.7, alpha=2.0).kernel(8), K=300)
    assert ok.value(0) == pytest.approx(8.0, abs=1e-8)

    with pytest.raises(ht.SolverFailure) as exc:
        ht.build_solve(ht.perturbed_reflected_walk(p=0.7, alpha=7.0 / 3.0).kernel(8), K=300)
    assert exc.value.reason in ("negative-values", "doubling", "non-finite")

    with pytest.raises(ht.SolverFailure) as exc:
        ht.build_solve(ht.perturbed_reflected_walk(p=0.7, alpha=3.0).kernel(8), K=300)
    assert exc.value.reason in ("negative-values", "doubling", "non-finite")


def test_solve_limit_contract(ex1_kernel):
    est = ht.build_solve(ex1_kernel, K=400)
    top_quarter = range(300, 401)
    assert max(abs(est.value(i) - 1.0) for i in top_quarter) <= 1e-3


def test_multi_perturbed_solve():
    fam = ht.multi_perturbed_walk((1.2, 1.5), p=0.7)
    est = ht.build_solve(fam.kernel(10), K=400)
    # product 1.8 below the critical 7/3: f(0) = A (1 - q/p) / (1 - A q/p)
    assert est.value(0) == pytest.approx(4.5, abs=1e-8)
    # the first rows are single weighted jumps, so f steps down by the weights
    assert est.value(1) == pytest.approx(4.5 / 1.2, abs=1e-8)
    assert est.value(2) == pytest.approx(4.5 / 1.2 / 1.5, abs=1e-8)
    assert abs(est.value(350) - 1.0) <= 1e-6

    strong = ht.multi_perturbed_walk((1.4, 1.5), p=0.7)  # product 2.1, still below
    est2 = ht.build_solve(strong.kernel(10), K=400)
    assert est2.value(0) == pytest.approx(2.1 * (1 - RATIO) / (1 - 2.1 * RATIO), abs=1e-7)

    with pytest.raises(ht.SolverFailure):
        ht.build_solve(ht.multi_perturbed_walk((1.6, 1.6), p=0.7).kernel(10), K=300)


def test_verify_harmonicity_of_exact_form(ex1_kernel):
    f = {i: exact_f(i) for i in range(80)}
    assert ht.verify_harmonicity(ex1_kernel, f, range(70)) <= 1e-12


# ---------------------------------------------------------------------------
# jump-law envelopes and return probabilities


def test_jump_minorant_and_majorant(ex1_kernel):
    minor = ht.jump_minorant(ex1_kernel)
    assert minor.lo == -1
    np.testing.assert_allclose(minor.pmf, [0.3, 0.0, 0.7], atol=1e-15)
    assert minor.mean == pytest.approx(0.4, abs=1e-14)
    assert ht.escape_probability(minor) == pytest.approx(0.4, abs=1e-12)

    tails, mean = ht.jump_down_majorant(ex1_kernel)
    np.testing.assert_allclose(tails, [0.3], atol=1e-15)
    assert mean == pytest.approx(0.3, abs=1e-14)


def test_escape_probability_no_drift():
    flat = ht.LatticeWalk(lo=-1, pmf=np.array([0.5, 0.0, 0.5]))
    assert ht.escape_probability(flat) == 0.0


def test_return_probability_oracles(ex1_kernel):
    P = ex1_kernel.embed()
    lo0, hi0 = ht.return_probability_bounds(P, 0, tol=1e-10)
    assert lo0 <= hi0
    assert hi0 - lo0 <= 1e-10
    assert lo0 == pytest.approx(3.0 / 7.0, abs=1e-9)
    assert hi0 == pytest.approx(3.0 / 7.0, abs=1e-9)

    lo1, hi1 = ht.return_probability_bounds(P, 1, tol=1e-10)
    assert hi1 == pytest.approx(0.6, abs=1e-9)


def test_return_probability_without_certificate(down_walk):
    killed = ht.walk_killed_at_negative(down_walk)
    P = killed.kernel(40).embed()
    assert ht.return_probability_bounds(P, 0) == (0.0, 1.0)


# ---------------------------------------------------------------------------
# sufficient conditions


def test_check_conditions_example1(ex1_kernel, ex1_family):
    rep = ht.check_conditions(ex1_kernel, family=ex1_family)
    assert rep.sum_abs_delta == pytest.approx(math.log(2.0), abs=1e-12)
    assert rep.delta_plus_sum == pytest.approx(math.log(2.0), abs=1e-12)
    np.testing.assert_allclose(rep.minorant.pmf, [0.3, 0.0, 0.7], atol=1e-15)
    assert rep.minorant_mean == pytest.approx(0.4, abs=1e-14)
    assert rep.escape_prob_lower == pytest.approx(0.4, abs=1e-12)
    assert rep.gamma_available == pytest.approx(math.log(5.0 / 3.0), abs=1e-12)
    assert rep.drift_eps == pytest.approx(0.4, abs=1e-14)
    assert rep.drift_M == 1
    assert rep.zeta_mean == pytest.approx(0.3, abs=1e-14)

    assert set(rep.return_prob_bounds) == {0}
    lo, hi = rep.return_prob_bounds[0]
    assert lo == pytest.approx(3.0 / 7.0, abs=1e-7)
    assert hi == pytest.approx(3.0 / 7.0, abs=1e-7)

    ((state, gamma), bound) = next(iter(rep.local_time_moment_bound.items()))
    assert state == 0
    assert gamma == pytest.approx(math.log(2.0))
    # geometric local time: E 2^{ell(0)} = 2 (1 - r) / (1 - 2 r) = 8 at r = 3/7
    assert bound == pytest.approx(8.0, abs=1e-6)

    assert rep.prop_2_5_holds
    assert rep.prop_2_7_holds
    assert rep.thm_2_4_applicable
    assert rep.notes == ()


def test_check_conditions_supercritical():
    fam = ht.perturbed_reflected_walk(p=0.7, alpha=3.0)
    rep = ht.check_conditions(fam.kernel(8), family=fam)
    # the walk structure is unchanged, but e^{delta+} r_0 = 3 * 3/7 > 1
    assert rep.prop_2_5_holds
    assert rep.prop_2_7_holds
    assert not rep.thm_2_4_applicable
    ((state, gamma), bound) = next(iter(rep.local_time_moment_bound.items()))
    assert state == 0
    assert gamma == pytest.approx(math.log(3.0))
    assert bound == math.inf


def test_check_conditions_negative_drift(down_walk):
    fam = ht.walk_killed_at_negative(down_walk)
    rep = ht.check_conditions(fam.kernel(40), family=fam)
    assert rep.minorant_mean == pytest.approx(-0.4, abs=1e-14)
    assert not rep.prop_2_5_holds
    assert not rep.prop_2_7_holds
    assert not rep.thm_2_4_applicable
    assert rep.return_prob_bounds == {}
    assert rep.escape_prob_lower == 0.0


def test_verdicts_direct():
    assert ht.minorant_verdict(0.4)
    assert not ht.minorant_verdict(0.0)
    assert not ht.minorant_verdict(-0.1)
    assert ht.drift_verdict(0.4, 0.3)
    assert not ht.drift_verdict(0.0, 0.3)
    assert not ht.drift_verdict(0.4, math.inf)
    assert not ht.limit_theorem_verdict(math.inf, 0.4, 0.1, [0.1])
    assert not ht.limit_theorem_verdict(1.0, 0.0, 0.1, [0.1])


@given(
    delta_plus=st.floats(0.0, 2.0),
    mean=st.floats(-1.0, 1.0),
    uppers=st.lists(st.floats(0.0, 1.0), max_size=6),
    shrink=st.floats(0.0, 1.0),
)
def test_limit_verdict_monotone_in_bounds(delta_plus, mean, uppers, shrink):
    base = ht.limit_theorem_verdict(delta_plus, mean, delta_plus, uppers)
    tighter = ht.limit_theorem_verdict(
        delta_plus, mean, delta_plus, [u * shrink for u in uppers]
    )
    # sharpening the return-probability uppers can only help
    assert tighter or not base


# ---------------------------------------------------------------------------
# Monte Carlo


def test_build_mc_matches_exact():
    fam = ht.perturbed_reflected_walk(p=0.7, alpha=1.2)
    kernel = fam.kernel(8)
    est = ht.build_mc(kernel, states=(0, 1, 2), n_paths=20_000, horizon=100_000, seed=5)
    assert est.method == "monte-carlo"
    assert est.meta["stop_level"] == 23
    assert not est.meta["horizon_warning"]
    for i in (0, 1, 2):
        err = abs(est.values[i] - exact_f(i, alpha=1.2))
        assert err <= 3.0 * est.std_errors[i]
        assert est.std_errors[i] <= 0.01


def test_build_mc_reproducible():
    fam = ht.perturbed_reflected_walk(p=0.7, alpha=1.2)
    kernel = fam.kernel(8)
    a = ht.build_mc(kernel, states=(0,), n_paths=2_000, horizon=10_000, seed=42)
    b = ht.build_mc(kernel, states=(0,), n_paths=2_000, horizon=10_000, seed=42)
    c = ht.build_mc(kernel, states=(0,), n_paths=2_000, horizon=10_000, seed=43)
    assert a.values == b.values
    assert a.std_errors == b.std_errors
    assert a.values != c.values


def test_build_mc_horizon_warning():
    fam = ht.perturbed_reflected_walk(p=0.7, alpha=1.2)
    est = ht.build_mc(fam.kernel(8), states=(0,), n_paths=500, horizon=3, seed=1)
    assert est.meta["horizon_warning"]
    assert est.meta["exhausted"][0] > 0


def test_build_mc_needs_drift_certificate(down_walk):
    killed = ht.walk_killed_at_negative(down_walk)
    with pytest.raises(ht.UnsupportedInputError):
        ht.build_mc(killed.kernel(40), states=(0,), n_paths=10, horizon=100, seed=0)


def test_local_time_moment_mc(ex1_kernel):
    est, se, cut = ht.local_time_moment_mc(
        ex1_kernel, i=0, gamma=math.log(2.0), n_paths=20_000, horizon=100_000, seed=11
    )
    assert cut == 0.0
    assert abs(est - 8.0) <= 3.0 * se

    one, zero_se, _ = ht.local_time_moment_mc(
        ex1_kernel, i=0, gamma=0.0, n_paths=500, horizon=10_000, seed=11
    )
    assert one == 1.0
    assert zero_se == 0.0


def test_expected_local_times_mc(ex1_kernel):
    out = ht.expected_local_times_mc(
        ex1_kernel, start=0, sites=(0, 1), n_paths=20_000, horizon=100_000, seed=3
    )
    m0, se0 = out[0]
    m1, se1 = out[1]
    # geometric visit counts: E ell(0) = 1/(1 - 3/7), E ell(1) = 1/(1 - 0.6)
    assert abs(m0 - 7.0 / 4.0) <= 3.0 * se0
    assert abs(m1 - 2.5) <= 3.0 * se1
    # convexity: exp(gamma E ell) is a lower bound for E exp(gamma ell) = 8
    assert math.exp(math.log(2.0) * (m0 + 3 * se0)) <= 8.0
