"""Matching protocols and their theoretical bound calculators."""

import math

import numpy as np
import pytest

from channelsim import dist, matching
from channelsim.randomness import CommonRandomness

SEED = "7e" * 32

PA = dist.gaussian(0.5, 0.7)
PB = dist.gaussian(-0.5, 0.7)
Q_WIDE = dist.gaussian(0, 100)
Q_NARROW = dist.gaussian(0, 1)


@pytest.fixture(scope="module")
def cr():
    return CommonRandomness(SEED)


def test_match_rs_identical_targets_always_match(cr):
    omega = dist.ratio_bound(PA, Q_WIDE)
    for trial in range(200):
        tr = matching.match_rs(cr, trial, PA, PA, Q_WIDE, omega)
        assert tr.matched and tr.k_a == tr.k_b and tr.y_a == tr.y_b


def test_match_rs_discrete_enumeration_oracle(cr):
    p_a = dist.discrete([(1, 0.8), (2, 0.2)])
    p_b = dist.discrete([(1, 0.4), (2, 0.6)])
    q = dist.discrete([(1, 0.5), (2, 0.5)])
    omega = max(dist.ratio_bound(p_a, q), dist.ratio_bound(p_b, q))
    # Enumerate joint accept/reject sequences: with a shared uniform, both
    # accept iff u <= min(a, b) and both reject iff u > max(a, b).
    values = [1.0, 2.0]
    qs = np.array([0.5, 0.5])
    acc_a = np.array([dist.density(p_a, v) for v in values]) / (omega * qs)
    acc_b = np.array([dist.density(p_b, v) for v in values]) / (omega * qs)
    both = float(np.sum(qs * np.minimum(acc_a, acc_b)))
    neither = float(np.sum(qs * (1 - np.maximum(acc_a, acc_b))))
    oracle = sum(both * neither ** (i - 1) for i in range(1, 1001))
    trials = 20000
    hits = sum(matching.match_rs(cr, t, p_a, p_b, q, omega).matched
               for t in range(trials))
    rate = hits / trials
    assert abs(rate - oracle) <= 3 * math.sqrt(oracle * (1 - oracle) / trials)


def test_match_rs_unconditional_rate_equals_tv_formula(cr):
    omega = max(dist.ratio_bound(PA, Q_WIDE), dist.ratio_bound(PB, Q_WIDE))
    tv = dist.divergences(PA, PB).tv
    expected = (1 - tv) / (1 + tv)
    trials = 20000
    rate = np.mean([matching.match_rs(cr, t, PA, PB, Q_WIDE, omega).matched
                    for t in range(trials)])
    assert abs(rate - expected) <= 3 * math.sqrt(expected * (1 - expected) / trials)


def test_ers_nocomm_batch_one_equals_rs(cr):
    omega_a = dist.ratio_bound(PA, Q_WIDE)
    omega_b = dist.ratio_bound(PB, Q_WIDE)
    assert omega_a == pytest.approx(omega_b)  # symmetric pair shares omega
    for trial in range(300):
        rs = matching.match_rs(cr, trial, PA, PB, Q_WIDE, max(omega_a, omega_b))
        ers = matching.match_ers_nocomm(cr, trial, PA, PB, Q_WIDE,
                                        omega_a, omega_b, 1)
        assert (rs.k_a, rs.k_b, rs.matched) == (ers.k_a, ers.k_b, ers.matched)


def test_batchcomm_single_slot_always_matches(cr):
    omega_a = dist.ratio_bound(PA, Q_WIDE)
    for trial in range(100):
        tr = matching.match_ers_batchcomm(cr, trial, PA, PB, Q_WIDE, omega_a, 1)
        assert tr.matched
        assert tr.comm_bits >= 1


def test_batchcomm_overhead_below_four_bits(cr):
    omega_a = dist.ratio_bound(PA, Q_WIDE)
    n_batch = 16  # >= omega ~ 12, so the unary batch index stays cheap
    assert n_batch >= omega_a - 4
    bits = [matching.match_ers_batchcomm(cr, t, PA, PB, Q_WIDE, omega_a,
                                         n_batch).comm_bits
            for t in range(3000)]
    assert float(np.mean(bits)) <= 4.0


def test_iml_trivial_cases(cr):
    for trial in range(100):
        assert matching.match_iml(cr, trial, PA, PB, Q_WIDE, 1).matched
        assert matching.match_iml(cr, trial, PA, PA, Q_WIDE, 16).matched


def test_iml_outputs_are_biased_small_batch(cr):
    ys = np.array([matching.match_iml(cr, t, PA, PB, Q_WIDE, 4).y_a
                   for t in range(4000)])
    assert abs(float(np.var(ys)) - 0.7) > 1.0  # nowhere near the target law


def test_pml_identical_targets_always_match(cr):
    omega = dist.ratio_bound(PA, Q_WIDE)
    for trial in range(100):
        assert matching.match_pml(cr, trial, PA, PA, Q_WIDE, omega).matched


def test_pml_conditional_bound(cr):
    omega = max(dist.ratio_bound(PA, Q_WIDE), dist.ratio_bound(PB, Q_WIDE))
    trials = 20000
    results = [matching.match_pml(cr, t, PA, PB, Q_WIDE, omega)
               for t in range(trials)]
    ys = np.array([r.y_a for r in results])
    matched = np.array([r.matched for r in results])
    for lo, hi, count, rate in matching.binned_conditional_rates(ys, matched, 10):
        grid = np.linspace(lo, hi, 64)
        bound = min(matching.bound_pml(PA, PB, y) for y in grid)
        assert rate >= bound - 3 * math.sqrt(bound * (1 - bound) / count)


def test_bound_coefficient_examples():
    coeff = matching.bound_coefficients(matching.BATCHCOMM, 1600, 16.0, 2.0, 2.0)
    assert coeff.mu1 == pytest.approx(0.03)
    inf_coeff = matching.bound_coefficients(matching.NOCOMM, 8, 2.0,
                                            math.inf, math.inf)
    assert math.isinf(inf_coeff.mu1) and math.isinf(inf_coeff.mu2)
    assert matching.matching_lower_bound(inf_coeff, 1.0) == 0.0
    assert matching.indicator_coeff(3, 7.0, 2) == 2.0
    assert matching.indicator_coeff(2, 7.0, 2) == 7.0
    with pytest.raises(ValueError):
        matching.bound_coefficients(matching.NOCOMM, 1, 2.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        matching.bound_coefficients("bogus", 8, 2.0, 1.0, 1.0)


def test_bound_coefficients_decay():
    omega = 1.9
    d2 = 2.1
    for kind in (matching.NOCOMM, matching.BATCHCOMM):
        for n in (8, 16, 64, 256):
            if n < 4 * omega:
                continue
            small = matching.bound_coefficients(kind, n, omega, d2, d2)
            half = matching.bound_coefficients(kind, 2 * n, omega, d2, d2)
            assert half.mu1 <= 0.75 * small.mu1
            assert half.mu2 <= 0.75 * small.mu2


def test_pointwise_bounds():
    assert matching.bound_rs(PA, PA, 0.3) == pytest.approx(1.0)
    assert matching.bound_pml(PA, PA, 0.3) == pytest.approx(0.5)
    assert matching.bound_iml(PA, PA, 0.3, 0.0) == pytest.approx(0.5)
    # density ratio P_B/P_A = 3 at y = -0.7 ln 3; with TV pinned to 0.4 the
    # sorting bound is min(1, 3)/1.4.
    y = -0.7 * math.log(3.0)
    assert dist.density(PB, y) / dist.density(PA, y) == pytest.approx(3.0)
    assert matching.bound_rs(PA, PB, y, tv=0.4) == pytest.approx(1 / 1.4)
    for y in np.linspace(-3, 3, 25):
        assert matching.bound_rs(PA, PB, y) >= 0.5 * matching.bound_pml(PA, PB, y) - 1e-12


def test_binned_rates_partition_the_sample():
    rng = np.random.default_rng(0)
    ys = rng.normal(size=5000)
    matched = rng.random(5000) < 0.5
    bins = matching.binned_conditional_rates(ys, matched, 20)
    assert sum(count for _, _, count, _ in bins) == 5000
    assert all(lo <= hi for lo, hi, _, _ in bins)


def test_iml_fails_goodness_of_fit_small_batch(cr):
    # Bias witness: ensemble/race outputs pass GoF (acceptance suite); the
    # importance-sampling output at small N visibly is not P_A.
    from scipy.stats import chisquare
    ys = np.array([matching.match_iml(cr, t, PA, PB, Q_WIDE, 8).y_a
                   for t in range(4000)])
    edges = dist.sample(PA, np.linspace(0, 1, 51)[1:-1])
    counts = np.bincount(np.searchsorted(edges, ys), minlength=50)
    assert chisquare(counts).pvalue < 1e-6
