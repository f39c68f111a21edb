"""Lossy compression with decoder-side information over the shared stream.

The encoder sees a source block x (i.i.d. truncated Gaussian), ensemble-
selects a batch/slot whose proposal tuple is distributed as the product
target N(x_t, sigma2_yprime_given_x), and transmits the batch index (unary)
plus one hash of the selected slot.  The decoder keeps the transmitted
batch, removes slots whose hash disagrees, and Gumbel-selects under its
posterior weights built from the side information x' = x + noise.  Joint
compression treats an n-tuple as one super-symbol: the hash alphabet is
``hash_alphabet ** n_joint`` and the batch overhead amortizes over n.

With feedback enabled the hash carries the low bits of the slot index
instead of random bits; one acknowledgement round then pins the slot
exactly (zero residual mismatch) at 1 or 1 + log2(N/V) extra bits.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from . import dist
from .randomness import CommonRandomness
from .samplers import NonTerminationError, global_index, gumbel_select

MAX_BATCHES = 10 ** 6

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class WzConfig:
    """Experiment configuration for the side-information protocol.

    ``hash_alphabet`` is the per-sample alphabet; a block of ``n_joint``
    samples carries one hash from [1 .. hash_alphabet**n_joint].
    """

    sigma2_yprime_given_x: float
    hash_alphabet: int
    n_batch: int
    n_joint: int = 1
    eps: float = 0.1
    sigma2_x: float = 1.0
    lo: float = -2.0
    hi: float = 2.0
    sigma2_xprime_given_x: float = 0.01
    feedback: bool = False

    def __post_init__(self):
        if min(self.sigma2_yprime_given_x, self.sigma2_x,
               self.sigma2_xprime_given_x) <= 0:
            raise ValueError("all variances must be positive")
        if self.hash_alphabet < 1 or self.n_batch < 1 or self.n_joint < 1:
            raise ValueError("hash_alphabet, n_batch and n_joint must be >= 1")
        if self.feedback:
            vb = self.block_alphabet
            if vb & (vb - 1) or self.n_batch & (self.n_batch - 1):
                raise ValueError("feedback needs power-of-two N and block alphabet")
            if vb > self.n_batch:
                raise ValueError("feedback needs block alphabet <= N")

    @property
    def sigma2_yprime(self):
        return self.sigma2_x + self.sigma2_yprime_given_x

    @property
    def sigma2_xprime(self):
        return self.sigma2_x + self.sigma2_xprime_given_x

    @property
    def block_alphabet(self):
        return int(self.hash_alphabet) ** int(self.n_joint)

    @property
    def proposal(self):
        return dist.gaussian(0.0, self.sigma2_yprime)

    @property
    def source(self):
        return dist.truncated_gaussian(0.0, self.sigma2_x, self.lo, self.hi)


def target_spec(x, cfg):
    """Encoder target N(x, sigma2_yprime_given_x) for one sample."""
    return dist.gaussian(float(x), cfg.sigma2_yprime_given_x)


def posterior_spec(x_prime, cfg):
    """Decoder posterior from the untruncated-source formula:
    N(x' * s2x / s2x', s2y' - s2x^2 / s2x')."""
    mean = float(x_prime) * cfg.sigma2_x / cfg.sigma2_xprime
    var = cfg.sigma2_yprime - cfg.sigma2_x ** 2 / cfg.sigma2_xprime
    if var <= 0:
        raise ValueError(f"posterior variance {var} is not positive")
    return dist.gaussian(mean, var)


def omega_for_x(x, cfg):
    """Per-sample ratio bound max_y N(y; x, s)/N(y; 0, v), vectorized in x."""
    s = cfg.sigma2_yprime_given_x
    v = cfg.sigma2_yprime
    return np.sqrt(v / s) * np.exp(np.square(x) / (2.0 * (v - s))) * (1.0 + 1e-9)


def per_sample_omega(cfg, points=2048):
    """Global per-sample bound: the maximum of omega_for_x over the truncated
    source support (grid + endpoint refinement; the max sits at the edge)."""
    xs = np.linspace(cfg.lo, cfg.hi, points)
    return float(np.max(omega_for_x(xs, cfg)))


def block_omega(cfg):
    """Bounding constant for the n_joint-tuple product target."""
    return per_sample_omega(cfg) ** cfg.n_joint


def _log2_gauss(y, mean, var):
    return -0.5 * LOG2E * (y - mean) ** 2 / var - 0.5 * math.log2(2.0 * math.pi * var)


def _block_log_weights(ys, means, variances, q_var):
    """log2 of prod_t target_t(y_t)/Q(y_t) for ys shaped (n_joint, N)."""
    out = np.zeros(ys.shape[1])
    for t in range(ys.shape[0]):
        out += _log2_gauss(ys[t], means[t], variances[t]) - _log2_gauss(ys[t], 0.0, q_var)
    return out


@dataclass(frozen=True)
class WzEncoding:
    """Encoder output for one block: indices, hash, and the batch overhead."""

    k: int
    k1: int
    k2: int
    hash_value: int
    batch_bits: int
    y_block: np.ndarray
    omega_x: float


def _encoder_core(cr, trial, x_block, cfg, max_batches=MAX_BATCHES):
    """Run ensemble selection for the product target; returns the accepted
    batch's slot data so decoders can reuse it."""
    n, big_n = cfg.n_joint, cfg.n_batch
    x_block = np.asarray(x_block, dtype=np.float64)
    if x_block.shape != (n,):
        raise ValueError(f"x block must have length n_joint={n}")
    omega_x = float(np.prod(omega_for_x(x_block, cfg)))
    log2_omega_x = math.log2(omega_x)
    variances = np.full(n, cfg.sigma2_yprime_given_x)
    q_var = cfg.sigma2_yprime
    us = cr.batch_uniforms(trial, 64)
    ys = np.empty((n, big_n))
    for i in range(1, max_batches + 1):
        if i > us.size:
            us = cr.batch_uniforms(trial, 2 * us.size)
        for t in range(n):
            ys[t] = cr.proposals(trial, i, big_n, cfg.proposal, component=t)
        log_lam = _block_log_weights(ys, x_block, variances, q_var)
        top = float(np.max(log_lam))
        if top > log2_omega_x + 1e-9:
            raise ValueError("block bounding condition violated")
        scaled = np.exp2(log_lam - top)
        exps = cr.exponentials(trial, i, big_n)
        cand, _ = gumbel_select(scaled, exps)
        z_hat_s = float(np.sum(scaled))
        with np.errstate(over="ignore"):
            z_bar_s = z_hat_s - float(scaled[cand - 1]) \
                + omega_x * float(np.exp2(np.float64(-top)))
        if us[i - 1] <= z_hat_s / z_bar_s:
            return i, cand, ys.copy(), exps, omega_x
    raise NonTerminationError(f"encoder exceeded {max_batches} batches")


def _hash_for_slots(cr, trial, k1, cfg):
    """Hash values of every slot in a batch under the block alphabet.

    Feedback mode derives the hash from the slot index's low bits so that
    MSB feedback uniquely pins the index; otherwise the hash is one shared
    uniform draw per slot.
    """
    vb = cfg.block_alphabet
    if cfg.feedback:
        return (np.arange(cfg.n_batch, dtype=np.int64) % vb) + 1
    return cr.hashes(trial, k1, cfg.n_batch, vb)


def wz_encode(cr, trial, x_block, cfg):
    """Select (K1, K2) for the block and emit the hash plus unary batch bits."""
    k1, k2, ys, _, omega_x = _encoder_core(cr, trial, x_block, cfg)
    hash_value = int(_hash_for_slots(cr, trial, k1, cfg)[k2 - 1])
    return WzEncoding(k=global_index(cfg.n_batch, k1, k2), k1=k1, k2=k2,
                      hash_value=hash_value, batch_bits=k1,
                      y_block=ys[:, k2 - 1].copy(), omega_x=omega_x)


def wz_decode(cr, trial, x_prime_block, hash_value, k1, cfg):
    """Filter the transmitted batch by hash, Gumbel-select under posterior
    weights.  Returns (k2_b, y_block_b, decode_failed); a decode failure
    (empty filtered batch) falls back to the highest unfiltered weight and
    counts as a mismatch upstream."""
    n, big_n = cfg.n_joint, cfg.n_batch
    x_prime_block = np.asarray(x_prime_block, dtype=np.float64)
    ys = np.empty((n, big_n))
    for t in range(n):
        ys[t] = cr.proposals(trial, k1, big_n, cfg.proposal, component=t)
    post = [posterior_spec(xp, cfg) for xp in x_prime_block]
    log_w = _block_log_weights(ys, np.array([p.mean for p in post]),
                               np.array([p.variance for p in post]),
                               cfg.sigma2_yprime)
    weights = np.exp2(log_w)
    keep = _hash_for_slots(cr, trial, k1, cfg) == hash_value
    exps = cr.exponentials(trial, k1, big_n)
    filtered = np.where(keep, weights, 0.0)
    if not np.any(filtered > 0):
        k2_b = int(np.argmax(weights)) + 1
        return k2_b, ys[:, k2_b - 1].copy(), True
    k2_b, _ = gumbel_select(filtered, exps)
    return k2_b, ys[:, k2_b - 1].copy(), False


def serialize_message(enc, cfg):
    """Concrete wire form of one block's message: unary batch index followed
    by the hash in fixed width.  Exists so the rate bookkeeping can be
    checked against real bits; requires an integral per-sample log2 alphabet.
    """
    log2v = math.log2(cfg.hash_alphabet)
    if log2v != int(log2v):
        raise ValueError("fixed-width hash serialization needs log2 V integral")
    hash_bits = cfg.n_joint * int(log2v)
    unary = "1" * (enc.k1 - 1) + "0"
    return unary + format(enc.hash_value - 1, f"0{hash_bits}b") if hash_bits \
        else unary


def feedback_round(k2_a, k2_b, n_batch, v_alphabet):
    """One feedback exchange after hash-as-LSB decoding.

    The decoder reports the log2(N/V) high bits of its slot; the encoder
    acknowledges (1 bit) or retransmits its own high bits (1 + log2(N/V)
    bits).  Low bits already agree through the hash, so the corrected slot
    is exact.  Feedback-direction bits are not counted.
    """
    if n_batch % v_alphabet or (n_batch // v_alphabet) & (n_batch // v_alphabet - 1) \
            or v_alphabet & (v_alphabet - 1):
        raise ValueError("feedback needs log2(V) and log2(N/V) integral")
    msb_bits = (n_batch // v_alphabet).bit_length() - 1
    if k2_a == k2_b:
        return False, 1
    return True, 1 + msb_bits


def wz_error_bound(cfg, samples, seed):
    """Monte Carlo evaluation of the mismatch bound
    E[1 - (1 + eps + (1+eps) * 2^(sum_t i(Y';X) - i(Y';X')) / V_block)^-1].

    Returns (value, standard_error); deterministic given the seed.
    """
    samples = int(samples)
    if samples < 10 ** 3:
        raise ValueError("need at least 1e3 Monte Carlo samples")
    cr = CommonRandomness(hashlib.blake2b(b"wz-bound",
                                          key=_seed32(seed), digest_size=32).digest())
    n = cfg.n_joint
    s = cfg.sigma2_yprime_given_x
    total = np.zeros(samples)
    for t in range(n):
        ux = cr.slot_uniforms(0, 1, "proposal", samples, component=2 * t)
        uy = cr.slot_uniforms(0, 1, "proposal", samples, component=2 * t + 1)
        uz = cr.slot_uniforms(0, 2, "proposal", samples, component=t)
        x = dist.sample(cfg.source, ux)
        y = x + math.sqrt(s) * dist.sample(dist.gaussian(0, 1), uy)
        xp = x + math.sqrt(cfg.sigma2_xprime_given_x) * dist.sample(dist.gaussian(0, 1), uz)
        post_mean = xp * cfg.sigma2_x / cfg.sigma2_xprime
        post_var = cfg.sigma2_yprime - cfg.sigma2_x ** 2 / cfg.sigma2_xprime
        total += _log2_gauss(y, x, s) - _log2_gauss(y, post_mean, post_var)
    with np.errstate(over="ignore"):
        ratio = np.exp2(total) / cfg.block_alphabet
        vals = 1.0 - 1.0 / (1.0 + cfg.eps + (1.0 + cfg.eps) * ratio)
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(samples))


def _seed32(seed):
    from .randomness import _seed_bytes
    return _seed_bytes(seed)


@dataclass(frozen=True)
class RdPoint:
    """Aggregated rate-distortion outcome of a run."""

    rate_per_sample: float
    distortion_db: float
    mismatch_rate: float
    mismatch_se: float
    matched_distortion_db: float
    mean_batch_bits: float
    mean_extra_bits: float
    post_feedback_mismatch_rate: float
    trials: int


def _source_stream(seed):
    """Source randomness (X, noise) independent of the shared stream W."""
    key = hashlib.blake2b(b"wz-source", key=_seed32(seed), digest_size=32).digest()
    return CommonRandomness(key)


def draw_source_block(src, trial, cfg):
    """(x_block, x_prime_block) for one trial."""
    n = cfg.n_joint
    ux = src.slot_uniforms(trial, 1, "proposal", n, component=0)
    uz = src.slot_uniforms(trial, 1, "proposal", n, component=1)
    x = dist.sample(cfg.source, ux)
    xp = x + math.sqrt(cfg.sigma2_xprime_given_x) * dist.sample(dist.gaussian(0, 1), uz)
    return np.atleast_1d(x), np.atleast_1d(xp)


def run_wz_trial(cr, src, trial, cfg):
    """One full encode/decode round; returns a dict of per-trial outcomes."""
    x, xp = draw_source_block(src, trial, cfg)
    enc = wz_encode(cr, trial, x, cfg)
    k2_b, y_b, failed = wz_decode(cr, trial, xp, enc.hash_value, enc.k1, cfg)
    mismatch = failed or (k2_b != enc.k2)
    extra_bits = 0
    if cfg.feedback:
        _, extra_bits = feedback_round(enc.k2, k2_b, cfg.n_batch, cfg.block_alphabet)
        if mismatch:
            y_b = enc.y_block
            k2_b = enc.k2
    sq_err = float(np.sum((y_b - x) ** 2))
    matched_sq_err = float(np.sum((enc.y_block - x) ** 2))
    return {"mismatch": mismatch, "sq_err": sq_err, "matched_sq_err": matched_sq_err,
            "batch_bits": enc.batch_bits, "extra_bits": extra_bits,
            "post_mismatch": False if cfg.feedback else mismatch,
            "omega_x": enc.omega_x}


def aggregate_rd(results, cfg):
    """Fold per-trial dicts into an RdPoint (order-independent sums)."""
    trials = len(results)
    n = cfg.n_joint
    mis = np.array([r["mismatch"] for r in results], dtype=float)
    sq = math.fsum(r["sq_err"] for r in results)
    msq = math.fsum(r["matched_sq_err"] for r in results)
    batch_bits = math.fsum(r["batch_bits"] for r in results) / trials
    extra = math.fsum(r["extra_bits"] for r in results) / trials
    rate = (n * math.log2(cfg.hash_alphabet) + batch_bits + extra) / n
    post = float(np.mean([r["post_mismatch"] for r in results]))
    return RdPoint(
        rate_per_sample=rate,
        distortion_db=10.0 * math.log10(sq / (trials * n)),
        mismatch_rate=float(np.mean(mis)),
        mismatch_se=float(np.std(mis, ddof=1) / math.sqrt(trials)),
        matched_distortion_db=10.0 * math.log10(msq / (trials * n)),
        mean_batch_bits=batch_bits,
        mean_extra_bits=extra,
        post_feedback_mismatch_rate=post,
        trials=trials,
    )


def run_wz_experiment(cfg, trials, seed):
    """Serial reference runner for one configuration."""
    cr = CommonRandomness(seed)
    src = _source_stream(seed)
    results = [run_wz_trial(cr, src, t, cfg) for t in range(int(trials))]
    return aggregate_rd(results, cfg)


def run_wz_hash_sweep(cfg_template, alphabets, trials, seed):
    """Run the encoder once per trial and decode under several per-sample
    hash alphabets (the hash uniforms are shared, so decodes are cheap).

    Returns {alphabet: RdPoint}.  Only valid for non-feedback configs.
    """
    if cfg_template.feedback:
        raise ValueError("the hash sweep shares encodes; feedback re-keys the hash")
    cr = CommonRandomness(seed)
    src = _source_stream(seed)
    n, big_n = cfg_template.n_joint, cfg_template.n_batch
    cfgs = {v: replace(cfg_template, hash_alphabet=int(v)) for v in alphabets}
    results = {v: [] for v in alphabets}
    for trial in range(int(trials)):
        x, xp = draw_source_block(src, trial, cfg_template)
        k1, k2, ys, exps, omega_x = _encoder_core(cr, trial, x, cfg_template)
        post = [posterior_spec(v, cfg_template) for v in xp]
        log_w = _block_log_weights(ys, np.array([p.mean for p in post]),
                                   np.array([p.variance for p in post]),
                                   cfg_template.sigma2_yprime)
        weights = np.exp2(log_w)
        u_hash = cr.slot_uniforms(trial, k1, "hash", big_n)
        y_a = ys[:, k2 - 1]
        matched_sq = float(np.sum((y_a - x) ** 2))
        for v, cfg in cfgs.items():
            vb = cfg.block_alphabet
            slot_hash = np.ceil(u_hash * float(vb)).astype(np.int64)
            keep = slot_hash == slot_hash[k2 - 1]
            filtered = np.where(keep, weights, 0.0)
            k2_b, _ = gumbel_select(filtered, exps)
            mismatch = k2_b != k2
            sq = float(np.sum((ys[:, k2_b - 1] - x) ** 2))
            results[v].append({"mismatch": mismatch, "sq_err": sq,
                               "matched_sq_err": matched_sq, "batch_bits": k1,
                               "extra_bits": 0, "post_mismatch": mismatch,
                               "omega_x": omega_x})
    return {v: aggregate_rd(rows, cfgs[v]) for v, rows in results.items()}
