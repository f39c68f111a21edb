"""Selection procedures: exactness, laws, and the shared-stream contracts."""

import math

import numpy as np
import pytest
from scipy.stats import chisquare

from channelsim import dist, samplers
from channelsim.randomness import CommonRandomness

SEED = "5a" * 32


@pytest.fixture(scope="module")
def cr():
    return CommonRandomness(SEED)


def gof_pvalue(values, spec, bins=50):
    """Chi-square goodness of fit against equal-probability quantile bins."""
    edges = dist.sample(spec, np.linspace(0, 1, bins + 1)[1:-1])
    counts = np.bincount(np.searchsorted(edges, values), minlength=bins)
    return chisquare(counts).pvalue


def test_rs_accepts_immediately_when_target_is_proposal(cr):
    q = dist.gaussian(0, 1)
    for trial in range(20):
        k, _ = samplers.rs_select(cr, trial, q, q, 1.0)
        assert k == 1


def test_rs_acceptance_rate_is_inverse_omega(cr):
    p, q = dist.gaussian(1, 0.05), dist.gaussian(0, 1)
    omega = dist.ratio_bound(p, q)
    n = 20000
    ks = np.array([samplers.rs_select(cr, t, p, q, omega)[0] for t in range(n)])
    sd = math.sqrt((1 - 1 / omega) / (1 / omega) ** 2)
    assert abs(float(np.mean(ks)) - omega) <= 3 * sd / math.sqrt(n)


def test_rs_index_law_is_geometric(cr):
    p = dist.discrete([(1, 0.8), (2, 0.2)])
    q = dist.discrete([(1, 0.5), (2, 0.5)])
    omega = dist.ratio_bound(p, q)
    n = 30000
    ks = np.array([samplers.rs_select(cr, t, p, q, omega)[0] for t in range(n)])
    accept = 1.0 / omega
    kmax = 12
    pmf = accept * (1 - accept) ** np.arange(kmax)  # exact geometric oracle
    expected = np.append(pmf, (1 - accept) ** kmax) * n
    counts = np.bincount(np.minimum(ks - 1, kmax), minlength=kmax + 1)
    assert chisquare(counts, expected).pvalue > 0.001


def test_rs_non_termination_guard(cr):
    p, q = dist.gaussian(1, 0.01), dist.gaussian(0, 1)
    omega = dist.ratio_bound(p, q)
    with pytest.raises(samplers.NonTerminationError):
        for trial in range(50):
            samplers.rs_select(cr, trial, p, q, omega, max_proposals=1)


def test_gumbel_select_examples():
    assert samplers.gumbel_select([1, 0, 0], [9.0, 0.1, 0.1])[0] == 1
    assert samplers.gumbel_select([1, 1, 1], [3.0, 1.0, 2.0])[0] == 2
    k, score = samplers.gumbel_select([2.0, 2.0], [1.0, 1.0])
    assert k == 1 and score == 0.5  # ties break to the smallest index
    with pytest.raises(ValueError):
        samplers.gumbel_select([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        samplers.gumbel_select([-1.0, 1.0], [1.0, 1.0])


def test_gumbel_marginal_matches_normalized_weights():
    rng = np.random.default_rng(23)
    weights = np.array([0.2, 0.5, 0.3])
    n = 30000
    exps = rng.exponential(size=(n, 3))
    picks = np.array([samplers.gumbel_select(weights, e)[0] for e in exps])
    for j in range(3):
        freq = float(np.mean(picks == j + 1))
        se = math.sqrt(weights[j] * (1 - weights[j]) / n)
        assert abs(freq - weights[j]) <= 3 * se


def test_ers_reduces_to_rs_at_batch_one(cr):
    p, q = dist.gaussian(0.5, 0.7), dist.gaussian(0, 100)
    omega = dist.ratio_bound(p, q)
    for trial in range(1000):
        k_rs, y_rs = samplers.rs_select(cr, trial, p, q, omega)
        sel = samplers.ers_select(cr, trial, p, q, omega, 1)
        assert sel.k == k_rs
        assert samplers.selected_value(cr, trial, sel, q, 1) == y_rs


def test_ers_selection_invariants(cr):
    p, q = dist.gaussian(1, 0.001), dist.gaussian(0, 1)
    omega = dist.ratio_bound(p, q)
    n_batch = 32
    for trial in range(200):
        sel = samplers.ers_select(cr, trial, p, q, omega, n_batch)
        assert sel.k == n_batch * (sel.k1 - 1) + sel.k2
        assert 1 <= sel.k2 <= n_batch
        assert np.all(sel.batch_weights <= omega)
        assert sel.z_hat == pytest.approx(float(np.sum(sel.batch_weights)))
        assert sel.z_bar == pytest.approx(
            sel.z_hat - sel.batch_weights[sel.k2 - 1] + omega)
        assert 0.0 < sel.z_hat / sel.z_bar <= 1.0
        assert sel.n_proposals_consumed == sel.k1 * n_batch


def test_ers_batch_acceptance_rate_and_runtime(cr):
    p, q = dist.gaussian(1, 0.05), dist.gaussian(0, 1)
    omega = dist.ratio_bound(p, q)
    n_batch = 8
    trials = 20000
    sels = [samplers.ers_select(cr, t, p, q, omega, n_batch) for t in range(trials)]
    batches = np.array([s.k1 for s in sels], dtype=float)
    accept_rate = trials / float(np.sum(batches))
    lower = n_batch / (n_batch - 1 + omega)
    assert lower - 0.01 <= accept_rate <= 1.0
    proposals = np.array([s.n_proposals_consumed for s in sels], dtype=float)
    mean, se = float(np.mean(proposals)), float(np.std(proposals) / math.sqrt(trials))
    assert mean <= n_batch - 1 + omega + 3 * se


def test_ers_exactness_narrow_target(cr):
    p, q = dist.gaussian(1, 0.001), dist.gaussian(0, 1)
    omega = dist.ratio_bound(p, q)
    ys = np.array([samplers.selected_value(
        cr, t, samplers.ers_select(cr, t, p, q, omega, 32), q, 32)
        for t in range(20000)])
    assert gof_pvalue(ys, p) > 0.001


def test_ers_bounding_violation_detected(cr):
    p, q = dist.gaussian(1, 0.05), dist.gaussian(0, 1)
    with pytest.raises(ValueError):
        for trial in range(100):
            samplers.ers_select(cr, trial, p, q, 1.5, 8)


def test_delta_estimate_identity_case():
    q = dist.gaussian(0, 1)
    est = samplers.estimate_delta_x(q, q, dist.ratio_bound(q, q), 1, 2000, SEED)
    assert est.delta_x == 1.0
    assert est.std_err == 0.0


def test_delta_estimate_lower_bound():
    p, q = dist.gaussian(1, 0.01), dist.gaussian(0, 1)
    omega = dist.ratio_bound(p, q)
    est = samplers.estimate_delta_x(p, q, omega, 32, 20000, SEED)
    assert est.delta_lower == pytest.approx(32 / (31 + omega))
    assert est.delta_lower == pytest.approx(0.6727, abs=2e-4)
    assert est.delta_x >= est.delta_lower - 3 * est.std_err
    again = samplers.estimate_delta_x(p, q, omega, 32, 20000, SEED)
    assert again.delta_x == est.delta_x


def test_channel_scale_clamped_to_one():
    q = dist.gaussian(0, 1)
    p = dist.gaussian(1, 0.05)
    omega = dist.ratio_bound(p, q)
    assert samplers.channel_scale(q, q, 1.0, 1) == 1.0
    scale = samplers.channel_scale(p, q, omega, 8)
    assert 0.0 < scale <= 1.0


def test_pml_first_arrival_wins_when_target_is_proposal(cr):
    q = dist.gaussian(0, 1)
    for trial in range(50):
        k, _ = samplers.pml_select(cr, trial, q, q, 1.0)
        assert k == 1


def test_pml_exactness(cr):
    p, q = dist.gaussian(0.5, 0.7), dist.gaussian(0, 100)
    omega = dist.ratio_bound(p, q)
    ys = np.array([samplers.pml_select(cr, t, p, q, omega)[1]
                   for t in range(20000)])
    assert gof_pvalue(ys, p) > 0.001


def test_pml_race_matches_bruteforce_argmin(cr):
    """The pruned race equals an exhaustive argmin over a long horizon."""
    p, q = dist.gaussian(0.5, 0.7), dist.gaussian(0, 4)
    omega = dist.ratio_bound(p, q)
    for trial in range(300):
        k, y = samplers.pml_select(cr, trial, p, q, omega)
        horizon = 4 * int(math.ceil(omega)) + 4 * k
        times = np.cumsum(cr.exponentials(trial, 1, horizon))
        ys = cr.proposals(trial, 1, horizon, q)
        scores = times * dist.density(q, ys) / dist.density(p, ys)
        assert int(np.argmin(scores)) + 1 == k
        assert ys[k - 1] == y


@pytest.mark.parametrize("k_param,expected", [(1, 0.5), (4, 0.2)])
def test_grs_example_conditional_rate(cr, k_param, expected):
    trials = 20000
    n_a1 = n_match = 0
    for t in range(trials):
        y_a, y_b = samplers.grs_example_trial(k_param, cr, t)
        if y_a == 1.0:
            n_a1 += 1
            n_match += y_a == y_b
    rate = n_match / n_a1
    assert abs(rate - expected) <= 3 * math.sqrt(expected * (1 - expected) / n_a1)
    # Greedy output is still a faithful sample: Pr(Y_A = 1) = (k+1)/(2k+1).
    marginal = (k_param + 1) / (2 * k_param + 1)
    assert abs(n_a1 / trials - marginal) <= 3 * math.sqrt(
        marginal * (1 - marginal) / trials)


@pytest.mark.parametrize("k_param", [1, 4, 16])
def test_pml_example_always_matches_on_shared_atom(cr, k_param):
    for t in range(4000):
        y_a, y_b = samplers.pml_example_trial(k_param, cr, t)
        if y_a == 1.0:
            assert y_b == 1.0


def test_pml_example_matches_exhaustive_argmin(cr):
    k_param = 4
    weights = np.full(k_param + 1, 1.0 / (2 * k_param + 1))
    weights[0] = (k_param + 1) / (2 * k_param + 1)
    for t in range(300):
        y_a, y_b = samplers.pml_example_trial(k_param, cr, t)
        exps = cr.exponentials(t, 1, k_param + 1)
        j = int(np.argmin(exps / weights)) + 1  # exhaustive oracle
        assert y_a == (1.0 if j == 1 else float(j))
        assert y_b == (1.0 if j == 1 else float(j + k_param))


def test_grs_example_distributions_shape():
    pa, pb, q = samplers.grs_example_distributions(2)
    assert len(pa.atoms) == len(pb.atoms) == len(q.atoms) == 5
    assert dict(pa.atoms)[1.0] == pytest.approx(3 / 5)
    assert dict(pb.atoms)[2.0] == 0.0 and dict(pa.atoms)[4.0] == 0.0
