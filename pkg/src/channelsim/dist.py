"""Parametric 1-D distributions and the divergence scalars built on them.

Everything downstream (selection rules, codecs, matching bounds) consumes
distributions through this module: exact log-densities in bits, deterministic
inverse-CDF sampling, the ratio bound ``omega = max_y P(y)/Q(y)``, and the
divergence report (KL, total variation, the inverse-moment ``d2``).

Three families are supported: Gaussian, truncated Gaussian, and finite
discrete.  All reported quantities use base-2 logarithms; internal math uses
natural logs where convenient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, ndtri

LOG2E = 1.0 / math.log(2.0)
LOG2_2PI = math.log2(2.0 * math.pi)

GAUSSIAN = "gaussian"
TRUNCATED = "truncated-gaussian"
DISCRETE = "discrete"

#: Relative inflation applied to analytically computed ratio bounds so the
#: bounding condition P(y) <= omega * Q(y) also holds in floating point.
OMEGA_MARGIN = 1e-9

#: Absolute tolerance for the quadrature of divergence integrals.
QUAD_TOL = 1e-10


class UnboundedRatioError(ValueError):
    """Raised when max_y P(y)/Q(y) is infinite.

    ``direction`` records which tail (or atom) makes the ratio diverge.
    """

    def __init__(self, message, direction=""):
        super().__init__(message)
        self.direction = direction


@dataclass(frozen=True)
class DistributionSpec:
    """A parametric 1-D distribution.

    ``mean``/``variance`` are the parameters of the (possibly truncated)
    Gaussian; for the discrete kind they hold the implied moments of the
    atom set, which is stored sorted by value.
    """

    kind: str
    mean: float = 0.0
    variance: float = 1.0
    lo: float = -math.inf
    hi: float = math.inf
    atoms: tuple = ()

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, TRUNCATED, DISCRETE):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == DISCRETE:
            if not self.atoms:
                raise ValueError("discrete spec needs at least one atom")
            total = math.fsum(p for _, p in self.atoms)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"atom probabilities sum to {total}, not 1")
            if any(p < 0 for _, p in self.atoms):
                raise ValueError("atom probabilities must be non-negative")
        else:
            if not self.variance > 0:
                raise ValueError("variance must be positive")
            if self.kind == TRUNCATED and not self.lo < self.hi:
                raise ValueError("truncated support needs lo < hi")

    @property
    def std(self):
        return math.sqrt(self.variance)


def gaussian(mean, variance):
    return DistributionSpec(GAUSSIAN, float(mean), float(variance))


def truncated_gaussian(mean, variance, lo, hi):
    return DistributionSpec(TRUNCATED, float(mean), float(variance), float(lo), float(hi))


def discrete(atoms):
    """Discrete spec from (value, probability) pairs; atoms are sorted by value."""
    atoms = tuple(sorted((float(v), float(p)) for v, p in atoms))
    mean = math.fsum(v * p for v, p in atoms)
    var = math.fsum((v - mean) ** 2 * p for v, p in atoms)
    return DistributionSpec(DISCRETE, mean, var, atoms=atoms)


def _trunc_z(spec):
    """Probability mass of the untruncated Gaussian inside [lo, hi]."""
    s = spec.std
    return float(ndtr((spec.hi - spec.mean) / s) - ndtr((spec.lo - spec.mean) / s))


def log_density(spec, y):
    """Log base-2 density (or pmf) at ``y``.  ``y`` may be a scalar or array.

    Raises ValueError when ``y`` falls outside the support (truncated
    Gaussian outside [lo, hi], discrete off-atom).
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if spec.kind == DISCRETE:
        out = _discrete_log2_pmf(spec, y_arr, strict=True)
    elif spec.kind == TRUNCATED:
        if np.any((y_arr < spec.lo) | (y_arr > spec.hi)):
            raise ValueError(f"y outside truncated support [{spec.lo}, {spec.hi}]")
        out = _gauss_log2_pdf(spec, y_arr) - math.log2(_trunc_z(spec))
    else:
        out = _gauss_log2_pdf(spec, y_arr)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def _gauss_log2_pdf(spec, y):
    z2 = (y - spec.mean) ** 2 / spec.variance
    return -0.5 * LOG2E * z2 - 0.5 * (LOG2_2PI + math.log2(spec.variance))


def _discrete_log2_pmf(spec, y, strict):
    values = np.array([v for v, _ in spec.atoms])
    probs = np.array([p for _, p in spec.atoms])
    idx = np.searchsorted(values, y)
    idx = np.clip(idx, 0, len(values) - 1)
    hit = values[idx] == y
    if strict and not np.all(hit):
        raise ValueError("y is not an atom of the discrete distribution")
    with np.errstate(divide="ignore"):
        out = np.where(hit, np.log2(np.maximum(probs[idx], 0.0)), -np.inf)
    return out


def density(spec, y):
    """Density/pmf at ``y``; zero (not an error) outside the support."""
    y_arr = np.asarray(y, dtype=np.float64)
    if spec.kind == DISCRETE:
        out = np.exp2(_discrete_log2_pmf(spec, y_arr, strict=False))
    elif spec.kind == TRUNCATED:
        inside = (y_arr >= spec.lo) & (y_arr <= spec.hi)
        out = np.where(inside, np.exp2(_gauss_log2_pdf(spec, y_arr)) / _trunc_z(spec), 0.0)
    else:
        out = np.exp2(_gauss_log2_pdf(spec, y_arr))
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def ratio(target, proposal, y):
    """target(y)/proposal(y), vectorized; zero where the target has no mass."""
    if target.kind == GAUSSIAN and proposal.kind == GAUSSIAN:
        return np.exp2(_gauss_log2_pdf(target, np.asarray(y, dtype=np.float64))
                       - _gauss_log2_pdf(proposal, np.asarray(y, dtype=np.float64)))
    num = density(target, y)
    den = density(proposal, y)
    return num / den


def log_ratio(target, proposal, y):
    """log2(target(y)/proposal(y)); -inf where the target has no mass.

    Narrow targets drive far-away ratios below the smallest float, so the
    ensemble selectors work with this form and rescale by the batch maximum.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if target.kind == GAUSSIAN and proposal.kind == GAUSSIAN:
        return _gauss_log2_pdf(target, y_arr) - _gauss_log2_pdf(proposal, y_arr)
    with np.errstate(divide="ignore"):
        return np.log2(density(target, y_arr)) - np.log2(density(proposal, y_arr))


def sample(spec, u):
    """Inverse-CDF transform of ``u`` in (0, 1); bit-identical for equal inputs."""
    u_arr = np.asarray(u, dtype=np.float64)
    if spec.kind == GAUSSIAN:
        out = spec.mean + spec.std * ndtri(u_arr)
    elif spec.kind == TRUNCATED:
        s = spec.std
        a = ndtr((spec.lo - spec.mean) / s)
        b = ndtr((spec.hi - spec.mean) / s)
        out = spec.mean + s * ndtri(a + u_arr * (b - a))
    else:
        values = np.array([v for v, _ in spec.atoms])
        cum = np.cumsum([p for _, p in spec.atoms])
        out = values[np.searchsorted(cum, u_arr, side="left")]
    return float(out) if np.isscalar(u) or u_arr.ndim == 0 else out


def _gauss_pair_log_ratio_max(p, q):
    """Closed-form sup log2(P/Q) for a Gaussian pair with var_P < var_Q."""
    dv = q.variance - p.variance
    peak = 0.5 * math.log2(q.variance / p.variance) \
        + LOG2E * (p.mean - q.mean) ** 2 / (2.0 * dv)
    return peak


def _grid_refine_max(log_ratio, lo, hi, points=4096):
    ys = np.linspace(lo, hi, points)
    vals = log_ratio(ys)
    i = int(np.argmax(vals))
    a = ys[max(i - 1, 0)]
    b = ys[min(i + 1, points - 1)]
    res = minimize_scalar(lambda t: -log_ratio(t), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12})
    return max(float(vals[i]), float(-res.fun))


def ratio_bound(target, proposal):
    """omega = max_y target(y)/proposal(y), inflated by a 1e-9 relative margin.

    Raises UnboundedRatioError when the ratio diverges (e.g. a heavier-tailed
    target).  Identical specs return exactly 1.0.
    """
    p, q = target, proposal
    if p == q:
        return 1.0
    if p.kind == DISCRETE or q.kind == DISCRETE:
        if p.kind != DISCRETE or q.kind != DISCRETE:
            raise UnboundedRatioError(
                "discrete/continuous ratio is unbounded", direction="kind mismatch")
        qmap = dict(q.atoms)
        worst = 0.0
        for v, pp in p.atoms:
            if pp == 0.0:
                continue
            qq = qmap.get(v, 0.0)
            if qq == 0.0:
                raise UnboundedRatioError(
                    f"target atom {v} has no proposal mass", direction=f"atom {v}")
            worst = max(worst, pp / qq)
        return worst * (1.0 + OMEGA_MARGIN)

    if q.kind == TRUNCATED:
        p_lo = p.lo if p.kind == TRUNCATED else -math.inf
        p_hi = p.hi if p.kind == TRUNCATED else math.inf
        if p_lo < q.lo or p_hi > q.hi:
            raise UnboundedRatioError(
                "target support exceeds truncated proposal support",
                direction="support")

    if p.kind == GAUSSIAN and q.kind == GAUSSIAN:
        if p.variance > q.variance:
            raise UnboundedRatioError(
                "target is heavier-tailed than the proposal",
                direction="tails")
        if p.variance == q.variance:
            if p.mean == q.mean:
                return 1.0
            raise UnboundedRatioError(
                "equal variances with different means give an unbounded ratio",
                direction="tail toward the target mean")
        return 2.0 ** _gauss_pair_log_ratio_max(p, q) * (1.0 + OMEGA_MARGIN)

    # Remaining cases have a truncated target and/or proposal: the maximum
    # lives on the (compact) intersection of the supports.
    lo = max(p.lo if p.kind == TRUNCATED else q.lo,
             q.lo if q.kind == TRUNCATED else p.lo)
    hi = min(p.hi if p.kind == TRUNCATED else q.hi,
             q.hi if q.kind == TRUNCATED else p.hi)

    def log_ratio(y):
        y = np.asarray(y, dtype=np.float64)
        num = _gauss_log2_pdf(p, y) - (math.log2(_trunc_z(p)) if p.kind == TRUNCATED else 0.0)
        den = _gauss_log2_pdf(q, y) - (math.log2(_trunc_z(q)) if q.kind == TRUNCATED else 0.0)
        return num - den

    if p.kind == GAUSSIAN and p.variance >= q.variance:
        # Unbounded unless the proposal support is compact, which it is here
        # only when q is truncated; q truncated was handled by the support
        # check above, so reaching this means q is Gaussian.
        raise UnboundedRatioError(
            "target is heavier-tailed than the proposal", direction="tails")
    peak = _grid_refine_max(log_ratio, lo, hi)
    return 2.0 ** peak * (1.0 + OMEGA_MARGIN)


@dataclass(frozen=True)
class DivergenceReport:
    """KL (bits), total variation, d2 = E_Q[Q/P], and the ratio bound omega.

    Unbounded quantities are reported as math.inf rather than raised.
    """

    kl_bits: float
    tv: float
    d2: float
    omega: float


def _quad_window(p, q):
    los, his = [], []
    for s in (p, q):
        if s.kind == TRUNCATED:
            los.append(s.lo)
            his.append(s.hi)
        else:
            los.append(s.mean - 10.0 * s.std)
            his.append(s.mean + 10.0 * s.std)
    return min(los), max(his)


def _kl_bits(p, q):
    if p.kind == GAUSSIAN and q.kind == GAUSSIAN:
        nats = math.log(q.std / p.std) \
            + (p.variance + (p.mean - q.mean) ** 2) / (2.0 * q.variance) - 0.5
        return nats * LOG2E
    if p.kind == DISCRETE and q.kind == DISCRETE:
        qmap = dict(q.atoms)
        total = 0.0
        for v, pp in p.atoms:
            if pp == 0.0:
                continue
            qq = qmap.get(v, 0.0)
            if qq == 0.0:
                return math.inf
            total += pp * math.log2(pp / qq)
        return total
    if (p.kind == DISCRETE) != (q.kind == DISCRETE):
        return math.inf
    if q.kind == TRUNCATED and p.kind != TRUNCATED:
        return math.inf
    if p.kind == TRUNCATED and q.kind == TRUNCATED and (p.lo < q.lo or p.hi > q.hi):
        return math.inf
    lo, hi = _quad_window(p, p)

    def integrand(y):
        py = density(p, y)
        return 0.0 if py == 0.0 else py * (log_density(p, y) - log_density(q, y))

    val, _ = quad(integrand, lo, hi, epsabs=QUAD_TOL, limit=200)
    return val


def _tv(p, q):
    if p.kind == DISCRETE and q.kind == DISCRETE:
        values = sorted({v for v, _ in p.atoms} | {v for v, _ in q.atoms})
        pmap, qmap = dict(p.atoms), dict(q.atoms)
        return 0.5 * math.fsum(abs(pmap.get(v, 0.0) - qmap.get(v, 0.0)) for v in values)
    if (p.kind == DISCRETE) != (q.kind == DISCRETE):
        return 1.0
    lo, hi = _quad_window(p, q)
    val, _ = quad(lambda y: abs(density(p, y) - density(q, y)), lo, hi,
                  epsabs=QUAD_TOL, limit=400,
                  points=[p.mean, q.mean] if hi - lo < math.inf else None)
    return 0.5 * val


def _d2(q, p):
    """E_{Y~q}[q(Y)/p(Y)]; inf when the second moment integral diverges."""
    if q.kind == DISCRETE and p.kind == DISCRETE:
        pmap = dict(p.atoms)
        total = 0.0
        for v, qq in q.atoms:
            if qq == 0.0:
                continue
            pp = pmap.get(v, 0.0)
            if pp == 0.0:
                return math.inf
            total += qq * qq / pp
        return total
    if (q.kind == DISCRETE) != (p.kind == DISCRETE):
        return math.inf
    if q.kind == GAUSSIAN and p.kind == GAUSSIAN:
        if not 2.0 * p.variance > q.variance:
            return math.inf
        tau, s = q.variance, p.variance
        a = 1.0 / tau - 1.0 / (2.0 * s)
        b = 2.0 * q.mean / tau - p.mean / s
        c = -q.mean ** 2 / tau + p.mean ** 2 / (2.0 * s)
        return math.sqrt(s / (2.0 * tau * tau * a)) * math.exp(b * b / (4.0 * a) + c)
    if p.kind == TRUNCATED and q.kind == GAUSSIAN:
        return math.inf  # q has mass outside p's support
    if p.kind == TRUNCATED and q.kind == TRUNCATED and (q.lo < p.lo or q.hi > p.hi):
        return math.inf
    lo, hi = _quad_window(q, q)

    def integrand(y):
        qy = density(q, y)
        if qy == 0.0:
            return 0.0
        return qy * qy / density(p, y)

    val, _ = quad(integrand, lo, hi, epsabs=QUAD_TOL, limit=200)
    return val


def divergences(p, q):
    """DivergenceReport for the pair (P, Q); infinities are values, not errors."""
    try:
        omega = ratio_bound(p, q)
    except UnboundedRatioError:
        omega = math.inf
    return DivergenceReport(kl_bits=_kl_bits(p, q), tv=_tv(p, q), d2=_d2(q, p),
                            omega=omega)


def information_density(p_cond, p_marg, y):
    """log2 p_cond(y) - log2 p_marg(y); errors when the marginal has no mass."""
    marg = log_density(p_marg, y)
    if np.any(np.isneginf(marg)):
        raise ValueError("marginal density is zero at y")
    return log_density(p_cond, y) - marg


# ---------------------------------------------------------------------------
# Flat key=value serialization used by the CLI config format.

def to_config(spec):
    if spec.kind == GAUSSIAN:
        return f"kind=gaussian mean={spec.mean!r} var={spec.variance!r}"
    if spec.kind == TRUNCATED:
        return (f"kind=truncated-gaussian mean={spec.mean!r} var={spec.variance!r} "
                f"lo={spec.lo!r} hi={spec.hi!r}")
    atoms = ",".join(f"{v!r}:{p!r}" for v, p in spec.atoms)
    return f"kind=discrete atoms={atoms}"


def from_config(text):
    """Parse the flat ``kind=... mean=... var=...`` form; unknown keys reject."""
    fields = {}
    for token in text.split():
        if "=" not in token:
            raise ValueError(f"malformed distribution token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    kind = fields.pop("kind", None)
    if kind == "gaussian":
        allowed = {"mean", "var"}
        _check_keys(fields, allowed)
        return gaussian(float(fields.get("mean", 0.0)), float(fields.get("var", 1.0)))
    if kind == "truncated-gaussian":
        _check_keys(fields, {"mean", "var", "lo", "hi"})
        return truncated_gaussian(float(fields.get("mean", 0.0)),
                                  float(fields.get("var", 1.0)),
                                  float(fields["lo"]), float(fields["hi"]))
    if kind == "discrete":
        _check_keys(fields, {"atoms"})
        atoms = []
        for pair in fields["atoms"].split(","):
            v, p = pair.split(":")
            atoms.append((float(v), float(p)))
        return discrete(atoms)
    raise ValueError(f"unknown distribution kind {kind!r}")


def _check_keys(fields, allowed):
    extra = set(fields) - allowed
    if extra:
        raise ValueError(f"unknown distribution keys {sorted(extra)}")
