"""Distribution layer: densities, sampling, ratio bounds, divergences."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erfinv, ndtr
from scipy.stats import norm

from channelsim import dist

STD_NORMAL_LOG2_AT_0 = math.log2(1.0 / math.sqrt(2.0 * math.pi))


def test_gaussian_log_density_at_mode():
    assert dist.log_density(dist.gaussian(0, 1), 0.0) == pytest.approx(
        STD_NORMAL_LOG2_AT_0, abs=1e-12)
    assert STD_NORMAL_LOG2_AT_0 == pytest.approx(-1.3257, abs=5e-5)


def test_discrete_log_density():
    spec = dist.discrete([(1, 0.5), (2, 0.5)])
    assert dist.log_density(spec, 1.0) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(ValueError):
        dist.log_density(spec, 1.5)


def test_truncated_log_density_matches_quadrature_normalizer():
    spec = dist.truncated_gaussian(0, 1, -2, 2)
    z_oracle, _ = quad(lambda y: math.exp(-y * y / 2) / math.sqrt(2 * math.pi),
                       -2, 2, epsabs=1e-13)
    expected = STD_NORMAL_LOG2_AT_0 - math.log2(z_oracle)
    assert dist.log_density(spec, 0.0) == pytest.approx(expected, abs=1e-10)
    total, _ = quad(lambda y: dist.density(spec, y), -2, 2, epsabs=1e-10)
    assert total == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        dist.log_density(spec, 2.5)


def test_sample_examples():
    assert dist.sample(dist.gaussian(0, 1), 0.5) == 0.0
    assert dist.sample(dist.discrete([(1, 0.25), (2, 0.75)]), 0.1) == 1.0
    u = float(ndtr(1.0))
    oracle = 1.0 + 0.1 * math.sqrt(2.0) * erfinv(2.0 * u - 1.0)
    assert dist.sample(dist.gaussian(1, 0.01), u) == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(1.1, abs=1e-9)


def test_sample_deterministic_and_monotone():
    spec = dist.truncated_gaussian(0.3, 2.0, -1.0, 4.0)
    us = np.linspace(0.01, 0.99, 101)
    ys = dist.sample(spec, us)
    assert np.array_equal(ys, dist.sample(spec, us))
    assert np.all(np.diff(ys) > 0)
    assert ys.min() >= -1.0 and ys.max() <= 4.0


def test_ratio_bound_identity_and_closed_form():
    q = dist.gaussian(0, 1)
    assert dist.ratio_bound(q, q) == 1.0
    p = dist.gaussian(1, 0.01)
    omega = dist.ratio_bound(p, q)
    ys = np.linspace(-10, 10, 400001)
    grid_oracle = float(np.max(dist.density(p, ys) / dist.density(q, ys)))
    assert omega == pytest.approx(grid_oracle, rel=1e-7)
    assert omega == pytest.approx(16.5707, abs=2e-4)
    assert omega >= grid_oracle  # the safety margin keeps the bound valid


def test_ratio_bound_unbounded_directions():
    with pytest.raises(dist.UnboundedRatioError):
        dist.ratio_bound(dist.gaussian(0, 2), dist.gaussian(0, 1))
    with pytest.raises(dist.UnboundedRatioError):
        dist.ratio_bound(dist.gaussian(1, 1), dist.gaussian(0, 1))
    with pytest.raises(dist.UnboundedRatioError):
        dist.ratio_bound(dist.gaussian(0, 1),
                         dist.truncated_gaussian(0, 1, -2, 2))


def test_ratio_bound_truncated_target():
    p = dist.truncated_gaussian(0, 1, -2, 2)
    q = dist.gaussian(0, 1)
    omega = dist.ratio_bound(p, q)
    ys = np.linspace(-2, 2, 100001)
    oracle = float(np.max(dist.density(p, ys) / dist.density(q, ys)))
    assert omega == pytest.approx(oracle, rel=1e-6)


def test_bounding_condition_on_grid():
    rng = np.random.default_rng(7)
    for _ in range(100):
        var_p = rng.uniform(0.05, 0.9)
        p = dist.gaussian(rng.normal(), var_p)
        q = dist.gaussian(rng.normal(), var_p + rng.uniform(0.1, 2.0))
        omega = dist.ratio_bound(p, q)
        wide = max(p.std, q.std)
        ys = np.linspace(min(p.mean, q.mean) - 10 * wide,
                         max(p.mean, q.mean) + 10 * wide, 100000)
        assert np.all(dist.density(p, ys) <= omega * dist.density(q, ys))


def test_divergences_identity():
    rep = dist.divergences(dist.gaussian(0.3, 1.2), dist.gaussian(0.3, 1.2))
    assert rep.kl_bits == pytest.approx(0.0, abs=1e-12)
    assert rep.tv == pytest.approx(0.0, abs=1e-9)
    assert rep.d2 == pytest.approx(1.0, abs=1e-12)
    assert rep.omega == 1.0


def test_kl_closed_form_vs_quadrature():
    p, q = dist.gaussian(1, 0.01), dist.gaussian(0, 1)
    rep = dist.divergences(p, q)
    oracle, _ = quad(lambda y: dist.density(p, y) * (dist.log_density(p, y)
                                                     - dist.log_density(q, y)),
                     -9, 11, epsabs=1e-12)
    assert rep.kl_bits == pytest.approx(oracle, abs=1e-6)
    assert rep.kl_bits == pytest.approx(3.329, abs=5e-4)


def test_d2_divergence_cases():
    # 2 * 0.7 < 100: the inverse-moment integral diverges.
    rep = dist.divergences(dist.gaussian(0.5, 0.7), dist.gaussian(0, 100))
    assert math.isinf(rep.d2)
    # Partial integrals of Q^2/P keep growing: quadrature oracle for divergence.
    p, q = dist.gaussian(0.5, 0.7), dist.gaussian(0, 100)
    partial = [quad(lambda y: dist.density(q, y) ** 2 / dist.density(p, y),
                    -w, w, epsabs=1e-12)[0] for w in (10, 20, 30)]
    assert partial[1] > 10 * partial[0] and partial[2] > 10 * partial[1]
    # Finite case against quadrature.
    p, q = dist.gaussian(0.5, 0.7), dist.gaussian(0, 1)
    rep = dist.divergences(p, q)
    oracle, _ = quad(lambda y: dist.density(q, y) ** 2 / dist.density(p, y),
                     -12, 12, epsabs=1e-12)
    assert rep.d2 == pytest.approx(oracle, rel=1e-9)


def test_d2_at_least_one_when_finite():
    rng = np.random.default_rng(11)
    found = 0
    while found < 100:
        var_p = rng.uniform(0.2, 2.0)
        var_q = rng.uniform(0.2, 2.0)
        if not 2 * var_p > var_q:
            continue
        rep = dist.divergences(dist.gaussian(rng.normal(), var_p),
                               dist.gaussian(rng.normal(), var_q))
        assert rep.d2 >= 1.0 - 1e-12
        found += 1


def test_tv_properties():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = dist.gaussian(rng.normal(), rng.uniform(0.1, 3.0))
        q = dist.gaussian(rng.normal(), rng.uniform(0.1, 3.0))
        tv_pq = dist.divergences(p, q).tv
        tv_qp = dist.divergences(q, p).tv
        assert 0.0 <= tv_pq <= 1.0
        assert tv_pq == pytest.approx(tv_qp, abs=1e-7)
    assert dist.divergences(p, p).tv == pytest.approx(0.0, abs=1e-10)


def test_information_density():
    p, q = dist.gaussian(1, 0.01), dist.gaussian(0, 1)
    assert dist.information_density(p, p, 0.97) == 0.0
    oracle = (norm(1, 0.1).logpdf(1.0) - norm(0, 1).logpdf(1.0)) / math.log(2)
    assert dist.information_density(p, q, 1.0) == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(4.0433, abs=1e-4)
    # At the ratio maximizer the information density equals log2 omega
    # (modulo the safety margin on omega).
    y_star = (p.mean * q.variance - q.mean * p.variance) / (q.variance - p.variance)
    assert dist.information_density(p, q, y_star) == pytest.approx(
        math.log2(dist.ratio_bound(p, q)), abs=1e-8)
    with pytest.raises(ValueError):
        dist.information_density(p, dist.discrete([(0.0, 1.0)]), 0.5)


def test_discrete_divergences():
    p = dist.discrete([(1, 0.8), (2, 0.2)])
    q = dist.discrete([(1, 0.5), (2, 0.5)])
    rep = dist.divergences(p, q)
    assert rep.tv == pytest.approx(0.3, abs=1e-12)
    assert rep.kl_bits == pytest.approx(0.8 * math.log2(1.6) + 0.2 * math.log2(0.4),
                                        abs=1e-12)
    assert rep.d2 == pytest.approx(0.5 ** 2 / 0.8 + 0.5 ** 2 / 0.2, abs=1e-12)
    assert rep.omega == pytest.approx(1.6, rel=1e-8)


def test_config_roundtrip():
    specs = [dist.gaussian(0.5, 0.7),
             dist.truncated_gaussian(0, 1, -2, 2),
             dist.discrete([(1, 0.25), (2, 0.75)])]
    for spec in specs:
        assert dist.from_config(dist.to_config(spec)) == spec
    with pytest.raises(ValueError):
        dist.from_config("kind=gaussian mean=0 var=1 tail=3")
    with pytest.raises(ValueError):
        dist.from_config("kind=cauchy loc=0")


def test_spec_validation():
    with pytest.raises(ValueError):
        dist.gaussian(0, -1)
    with pytest.raises(ValueError):
        dist.truncated_gaussian(0, 1, 2, -2)
    with pytest.raises(ValueError):
        dist.discrete([(1, 0.5), (2, 0.6)])


def test_densities_normalize_under_quadrature():
    for spec in (dist.gaussian(0, 1), dist.gaussian(-2, 0.3),
                 dist.truncated_gaussian(0.5, 1.5, -1, 3)):
        lo = spec.lo if spec.kind == dist.TRUNCATED else spec.mean - 10 * spec.std
        hi = spec.hi if spec.kind == dist.TRUNCATED else spec.mean + 10 * spec.std
        total, _ = quad(lambda y: dist.density(spec, y), lo, hi, epsabs=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)
