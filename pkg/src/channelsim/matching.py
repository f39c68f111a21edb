"""Distributed-matching protocol simulators and their theoretical bounds.

Two parties with different targets select from the same shared stream; the
match event is selection of the same index (for continuous targets a
cross-index value collision has probability zero).  Five protocols:

* ``match_rs``       -- both parties run plain rejection sampling;
* ``match_ers_nocomm`` -- both run unscaled ensemble selection with their
  own ratio bounds; match means the same global index;
* ``match_ers_batchcomm`` -- the encoder transmits its accepted batch index
  (unary) and the decoder Gumbel-selects inside that batch only, so the
  decoder needs no ratio bound;
* ``match_iml``      -- both Gumbel-select over one fixed batch (biased);
* ``match_pml``      -- both run the Poisson race.

``bound_coefficients`` evaluates the decay coefficients (mu_1, mu_2) of the
matching lower bounds; ``bound_rs`` / ``bound_pml`` / ``bound_iml`` are the
pointwise curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dist
from .samplers import ers_select, global_index, gumbel_select, pml_select

NOCOMM = "no-comm"
COND = "cond"
BATCHCOMM = "batch-comm"


@dataclass(frozen=True)
class MatchTrial:
    """One protocol round: both parties' outputs plus accounting fields."""

    y_a: float
    y_b: float
    matched: bool
    k_a: int
    k_b: int
    proposals_a: int
    proposals_b: int
    comm_bits: int = 0


@dataclass(frozen=True)
class BoundCoefficients:
    """Decay coefficients of a matching lower bound; inf when d2 diverges."""

    mu1: float
    mu2: float
    kind: str


def match_rs(cr, trial, p_a, p_b, q, omega, max_proposals=None):
    """Both parties run rejection sampling on the shared stream with the
    same omega; matched iff they stop at the same index."""
    cap = int(max_proposals if max_proposals is not None
              else math.ceil(1e6 * max(omega, 1.0)))
    k_a = k_b = 0
    y_a = y_b = math.nan
    chunk = 32
    start = 1
    while start <= cap and not (k_a and k_b):
        n = min(chunk, cap - start + 1)
        us = cr.batch_uniforms(trial, start + n - 1)[start - 1:]
        uy = np.empty(n)
        for j in range(n):
            uy[j] = cr.slot1_uniform(trial, start + j, "proposal")
        ys = dist.sample(q, uy)
        if not k_a:
            hits = np.nonzero(us <= dist.ratio(p_a, q, ys) / omega)[0]
            if hits.size:
                k_a = start + int(hits[0])
                y_a = float(ys[hits[0]])
        if not k_b:
            hits = np.nonzero(us <= dist.ratio(p_b, q, ys) / omega)[0]
            if hits.size:
                k_b = start + int(hits[0])
                y_b = float(ys[hits[0]])
        start += n
        chunk = min(2 * chunk, 4096)
    if not (k_a and k_b):
        raise RuntimeError(f"rejection matching exceeded {cap} proposals")
    return MatchTrial(y_a=y_a, y_b=y_b, matched=k_a == k_b, k_a=k_a, k_b=k_b,
                      proposals_a=k_a, proposals_b=k_b)


def match_ers_nocomm(cr, trial, p_a, p_b, q, omega_a, omega_b, n_batch):
    """Both parties run unscaled ensemble selection with party-specific
    ratio bounds in the acceptance sum; matched iff the global indices agree."""
    sel_a = ers_select(cr, trial, p_a, q, omega_a, n_batch)
    sel_b = ers_select(cr, trial, p_b, q, omega_b, n_batch)
    y_a = float(cr.proposals(trial, sel_a.k1, n_batch, q)[sel_a.k2 - 1])
    y_b = float(cr.proposals(trial, sel_b.k1, n_batch, q)[sel_b.k2 - 1])
    return MatchTrial(y_a=y_a, y_b=y_b, matched=sel_a.k == sel_b.k,
                      k_a=sel_a.k, k_b=sel_b.k,
                      proposals_a=sel_a.n_proposals_consumed,
                      proposals_b=sel_b.n_proposals_consumed)


def match_ers_batchcomm(cr, trial, p_a, p_b, q, omega_a, n_batch):
    """Encoder-side ensemble selection; the batch index travels in unary and
    the decoder Gumbel-selects within that batch under its own weights."""
    sel = ers_select(cr, trial, p_a, q, omega_a, n_batch)
    ys = cr.proposals(trial, sel.k1, n_batch, q)
    exps = cr.exponentials(trial, sel.k1, n_batch)
    k2_b, _ = gumbel_select(dist.ratio(p_b, q, ys), exps)
    k_b = global_index(n_batch, sel.k1, k2_b)
    return MatchTrial(y_a=float(ys[sel.k2 - 1]), y_b=float(ys[k2_b - 1]),
                      matched=k2_b == sel.k2, k_a=sel.k, k_b=k_b,
                      proposals_a=sel.n_proposals_consumed,
                      proposals_b=n_batch, comm_bits=sel.k1)


def match_iml(cr, trial, p_a, p_b, q, n_batch):
    """Both parties Gumbel-select over the single first batch.  Outputs are
    importance-sampling selections: biased for finite N."""
    ys = cr.proposals(trial, 1, n_batch, q)
    exps = cr.exponentials(trial, 1, n_batch)
    k_a, _ = gumbel_select(dist.ratio(p_a, q, ys), exps)
    k_b, _ = gumbel_select(dist.ratio(p_b, q, ys), exps)
    return MatchTrial(y_a=float(ys[k_a - 1]), y_b=float(ys[k_b - 1]),
                      matched=k_a == k_b, k_a=k_a, k_b=k_b,
                      proposals_a=n_batch, proposals_b=n_batch)


def match_pml(cr, trial, p_a, p_b, q, omega):
    """Both parties run the Poisson race; matched iff the arrival indices
    coincide."""
    k_a, y_a = pml_select(cr, trial, p_a, q, omega)
    k_b, y_b = pml_select(cr, trial, p_b, q, omega)
    return MatchTrial(y_a=y_a, y_b=y_b, matched=k_a == k_b, k_a=k_a, k_b=k_b,
                      proposals_a=k_a, proposals_b=k_b)


# ---------------------------------------------------------------------------
# Bound evaluation.

def indicator_coeff(n_batch, omega, i):
    """I_N(omega, i) = 2*1{N > i} + omega*1{N = i}."""
    if n_batch > i:
        return 2.0
    if n_batch == i:
        return float(omega)
    return 0.0


def bound_coefficients(kind, n_batch, omega, d2_qa, d2_qb):
    """Decay coefficients (mu1, mu2) of the matching bound of the given kind.

    ``d2_qa`` and ``d2_qb`` are d2(Q || P_A) and d2(Q || P_B); infinities
    propagate into the coefficients.  The propositions need N >= 2.
    """
    if n_batch < 2:
        raise ValueError("matching bounds require N >= 2")
    ind = indicator_coeff(n_batch, omega, 2)
    if kind in (NOCOMM, COND):
        mu1 = (omega + omega * ind * d2_qb + omega ** 2 / (n_batch - 1) * d2_qb) / n_batch
        mu2 = (omega + omega * ind * d2_qa + omega ** 2 / (n_batch - 1) * d2_qa) / n_batch
    elif kind == BATCHCOMM:
        mu1 = 3.0 * omega / n_batch
        mu2 = omega / n_batch * ind * d2_qa
    else:
        raise ValueError(f"unknown bound kind {kind!r}")
    return BoundCoefficients(mu1=mu1, mu2=mu2, kind=kind)


def matching_lower_bound(coeff, ratio_ab):
    """(1 + mu1 + r*(1 + mu2))^-1 for r = P_A(y)/P_B(y); 0 when infinite."""
    denom = 1.0 + coeff.mu1 + ratio_ab * (1.0 + coeff.mu2)
    return 0.0 if math.isinf(denom) else 1.0 / denom


def bound_rs(p_a, p_b, y, tv=None):
    """min(1, P_B/P_A) / (1 + TV): the exact conditional match rate of RS."""
    if tv is None:
        tv = dist.divergences(p_a, p_b).tv
    r = dist.density(p_b, y) / dist.density(p_a, y)
    return min(1.0, r) / (1.0 + tv)


def bound_pml(p_a, p_b, y):
    """(1 + P_A(y)/P_B(y))^-1."""
    r = dist.density(p_a, y) / dist.density(p_b, y)
    return 1.0 / (1.0 + r)


def bound_iml(p_a, p_b, y, eps):
    """(1 + (1+eps) * P_A(y)/P_B(y))^-1; eps is supplied, not derived."""
    r = dist.density(p_a, y) / dist.density(p_b, y)
    return 1.0 / (1.0 + (1.0 + eps) * r)


def binned_conditional_rates(y_values, matched, bins):
    """Quantile-binned conditional match rates.

    Returns a list of (lo, hi, count, rate) over ``bins`` quantile bins of
    the conditioning values.
    """
    y_values = np.asarray(y_values)
    matched = np.asarray(matched, dtype=bool)
    edges = np.quantile(y_values, np.linspace(0.0, 1.0, bins + 1))
    out = []
    for b in range(bins):
        lo, hi = edges[b], edges[b + 1]
        mask = (y_values >= lo) & (y_values <= hi if b == bins - 1 else y_values < hi)
        count = int(np.sum(mask))
        rate = float(np.mean(matched[mask])) if count else math.nan
        out.append((float(lo), float(hi), count, rate))
    return out
