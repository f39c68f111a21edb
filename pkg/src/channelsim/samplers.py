"""Sample-selection procedures over the shared stream.

Four selectors share the same exactness contract (the accepted value is an
exact draw from the target):

* ``rs_select`` -- standard rejection sampling, one proposal per batch;
* ``ers_select`` -- ensemble rejection sampling: Gumbel-max candidate inside
  a batch of N proposals, then accept/reject the whole batch with
  probability (Z_hat / Z_bar) * scale;
* ``pml_select`` -- Poisson-race selection (argmin of T_i * Q(Y_i)/P(Y_i)),
  made finite by pruning with the ratio bound;
* the discrete greedy-rejection counterexample construction, whose matching
  behaviour is the reason ERS exists.

Batch/slot indices are 1-based throughout; the global index of a selection
is K = N*(K1-1) + K2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.random import Generator, Philox

from . import dist, randomness

#: Batches examined before ers_select declares non-termination.
MAX_BATCHES = 10 ** 6

#: Arrivals examined before pml_select declares non-termination.
MAX_ARRIVALS = 10 ** 7


class NonTerminationError(RuntimeError):
    """A selector exceeded its proposal budget (probability ~ 0 when the
    bounding condition holds)."""


@dataclass(frozen=True)
class ErsSelection:
    """An accepted ERS batch: indices, weights, and the acceptance sums."""

    k: int
    k1: int
    k2: int
    batch_weights: np.ndarray
    z_hat: float
    z_bar: float
    n_proposals_consumed: int


@dataclass(frozen=True)
class DeltaEstimate:
    """Monte Carlo estimate of the batch acceptance probability Delta_x."""

    delta_x: float
    delta_lower: float
    mc_samples: int
    std_err: float


def global_index(n, k1, k2):
    """Global proposal index of slot k2 in batch k1 for batch size n."""
    return n * (k1 - 1) + k2


def gumbel_select(weights, exponentials):
    """argmin_j S_j / lambda_j with zero weights excluded; ties -> smallest j.

    Returns the 1-based index and the minimal score.  Raising on an all-zero
    weight vector keeps a silent mis-selection from masquerading as a draw.
    """
    w = np.asarray(weights, dtype=np.float64)
    s = np.asarray(exponentials, dtype=np.float64)
    if w.shape != s.shape:
        raise ValueError("weights and exponentials must have equal length")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if not np.any(w > 0):
        raise ValueError("all selection weights are zero")
    with np.errstate(divide="ignore", over="ignore"):
        scores = np.where(w > 0, s / w, np.inf)
    k = int(np.argmin(scores))
    return k + 1, float(scores[k])


def rs_select(cr, trial, target, proposal, omega, max_proposals=None):
    """First index K with U_K <= target(Y_K) / (omega * proposal(Y_K)).

    Scans the shared stream batch by batch (slot 1 of each batch holds the
    proposal, the batch uniform decides acceptance), so the N=1 ensemble
    selector lands on the identical global index.
    """
    cap = int(max_proposals if max_proposals is not None
              else math.ceil(1e6 * max(omega, 1.0)))
    chunk = 32
    start = 1
    while start <= cap:
        n = min(chunk, cap - start + 1)
        us = cr.batch_uniforms(trial, start + n - 1)[start - 1:]
        uy = np.empty(n)
        for j in range(n):
            uy[j] = cr.slot1_uniform(trial, start + j, randomness.PROPOSAL)
        ys = dist.sample(proposal, uy)
        lam = dist.ratio(target, proposal, ys)
        hits = np.nonzero(us <= lam / omega)[0]
        if hits.size:
            k = start + int(hits[0])
            return k, float(ys[hits[0]])
        start += n
        chunk = min(2 * chunk, 4096)
    raise NonTerminationError(f"rejection sampler exceeded {cap} proposals")


def ers_select(cr, trial, target, proposal, omega, n_batch, scale=1.0,
               max_batches=MAX_BATCHES):
    """Ensemble rejection sampling (batchwise Gumbel-max + accept/reject).

    Batch i is accepted when U_i <= (Z_hat / Z_bar) * scale with
    Z_hat = sum_j lambda_j and Z_bar = Z_hat - lambda_cand + omega.  With
    scale = 1 (or the channel-simulation scale Delta/Delta_x) the returned
    value is an exact sample from the target.
    """
    if not 0.0 < scale <= 1.0:
        raise ValueError("scale must lie in (0, 1]")
    log2_omega = math.log2(omega)
    us = cr.batch_uniforms(trial, 64)
    for i in range(1, max_batches + 1):
        if i > us.size:
            us = cr.batch_uniforms(trial, 2 * us.size)
        ys = cr.proposals(trial, i, n_batch, proposal)
        log_lam = dist.log_ratio(target, proposal, ys)
        top = float(np.max(log_lam))
        if top > log2_omega + 1e-9:
            raise ValueError("bounding condition violated: max log2 weight "
                             f"{top:.6g} exceeds log2 omega {log2_omega:.6g}")
        if top == -math.inf:
            continue  # target carries no mass on this batch; never acceptable
        # Rescale by the batch maximum: the acceptance ratio is invariant and
        # narrow targets no longer underflow every weight to zero.
        scaled = np.exp2(log_lam - top)
        exps = cr.exponentials(trial, i, n_batch)
        cand, _ = gumbel_select(scaled, exps)
        z_hat_s = float(np.sum(scaled))
        with np.errstate(over="ignore"):
            z_bar_s = z_hat_s - float(scaled[cand - 1]) \
                + omega * float(np.exp2(np.float64(-top)))
        if us[i - 1] <= (z_hat_s / z_bar_s) * scale:
            lam = np.exp2(log_lam)
            z_hat = float(np.sum(lam))
            return ErsSelection(k=global_index(n_batch, i, cand), k1=i, k2=cand,
                                batch_weights=lam, z_hat=z_hat,
                                z_bar=z_hat - float(lam[cand - 1]) + omega,
                                n_proposals_consumed=i * n_batch)
    raise NonTerminationError(f"ensemble sampler exceeded {max_batches} batches")


def selected_value(cr, trial, sel, proposal, n_batch):
    """Re-derive Y_K for a selection from the stream (what a decoder does)."""
    ys = cr.proposals(trial, sel.k1, n_batch, proposal)
    return float(ys[sel.k2 - 1])


def estimate_delta_x(target, proposal, omega, n_batch, mc, seed):
    """Monte Carlo estimate of Delta_x = E_{Y_{1:N}~Q}[ N / Z_bar(Y_{1:N}, 1) ].

    Z_bar(Y, 1) = sum_{j >= 2} lambda_j + omega, so only N-1 weights are
    drawn per sample.  Deterministic given the seed.
    """
    mc = int(mc)
    if mc < 10 ** 3:
        raise ValueError("need at least 1e3 Monte Carlo samples")
    rng = Generator(Philox(key=np.frombuffer(
        randomness._seed_bytes(seed)[:16], dtype=np.uint64)))
    vals = np.empty(mc)
    done = 0
    block = max(1, int(2e6) // max(n_batch, 1))
    while done < mc:
        m = min(block, mc - done)
        if n_batch > 1:
            words = rng.integers(0, 2 ** 64, size=(m, n_batch - 1), dtype=np.uint64)
            ys = dist.sample(proposal, randomness.CommonRandomness._to_unit(words))
            tail = np.sum(dist.ratio(target, proposal, ys), axis=1)
        else:
            tail = np.zeros(m)
        vals[done:done + m] = n_batch / (tail + omega)
        done += m
    delta_x = float(np.mean(vals))
    std_err = float(np.std(vals, ddof=1) / math.sqrt(mc))
    return DeltaEstimate(delta_x=delta_x, delta_lower=n_batch / (n_batch - 1 + omega),
                         mc_samples=mc, std_err=std_err)


#: Auxiliary seed for the cached Delta_x estimates used by the channel codec.
_SCALE_SEED = "c0ffee" * 10 + "beef"


@lru_cache(maxsize=256)
def _cached_scale(target, proposal, omega, n_batch, mc):
    est = estimate_delta_x(target, proposal, omega, n_batch, mc, _SCALE_SEED)
    delta = n_batch / (n_batch - 1 + omega)
    return min(1.0, delta / est.delta_x)


def channel_scale(target, proposal, omega, n_batch, mc=10 ** 5):
    """scale = Delta / Delta_x-hat, clamped to 1 when estimation noise makes
    the estimate fall below the closed-form lower bound Delta."""
    return _cached_scale(target, proposal, float(omega), int(n_batch), int(mc))


def pml_select(cr, trial, target, proposal, omega, max_proposals=MAX_ARRIVALS):
    """Poisson-race selection: argmin_i T_i * Q(Y_i) / P(Y_i).

    T_i are rate-1 Poisson arrival times and Y_i ~ Q.  Every score is at
    least T_i / omega, so the scan is pruned exactly once T_i / omega passes
    the incumbent minimum; the race is finite under the bounding condition.
    """
    best = math.inf
    best_k = 0
    best_y = math.nan
    t = 0.0
    chunk = 32
    start = 1
    while start <= max_proposals:
        n = min(chunk, max_proposals - start + 1)
        times = t + np.cumsum(cr.exponentials(trial, 1, start + n - 1)[start - 1:])
        bound = times / omega
        cut = np.nonzero(bound >= best)[0]
        limit = int(cut[0]) if cut.size else n
        if limit > 0:
            # Arrivals past the true stopping point score at least t/omega and
            # cannot displace the incumbent, so scoring the whole prefix is
            # equivalent to the sequential scan (argmin keeps the first hit).
            ys = cr.proposals(trial, 1, start + limit - 1, proposal)[start - 1:]
            lam = dist.ratio(target, proposal, ys)
            with np.errstate(divide="ignore", over="ignore"):
                scores = np.where(lam > 0, times[:limit] / lam, np.inf)
            low = float(np.min(scores))
            if low < best:
                j = int(np.argmin(scores))
                best, best_k, best_y = low, start + j, float(ys[j])
        if cut.size or bound[-1] >= best:
            return best_k, best_y
        t = float(times[-1])
        start += n
        chunk = min(2 * chunk, 4096)
    raise NonTerminationError(f"poisson race exceeded {max_proposals} arrivals")


# ---------------------------------------------------------------------------
# Discrete greedy-rejection counterexample (and its shared-race counterpart).
#
# On n = 2k+1 atoms, both parties put mass (k+1)/(2k+1) on atom 1; party A
# spreads the rest over atoms 2..k+1 and party B over atoms k+2..2k+1.

def grs_example_distributions(k_param):
    """(P_A, P_B, Q) for the greedy counterexample with n = 2k+1 atoms."""
    if k_param < 1:
        raise ValueError("k must be at least 1")
    n = 2 * k_param + 1
    q = 1.0 / n
    pa = [(1.0, (k_param + 1) * q)] + [(float(i), q) for i in range(2, k_param + 2)] \
        + [(float(i), 0.0) for i in range(k_param + 2, n + 1)]
    pb = [(1.0, (k_param + 1) * q)] + [(float(i), 0.0) for i in range(2, k_param + 2)] \
        + [(float(i), q) for i in range(k_param + 2, n + 1)]
    uniform = [(float(i), q) for i in range(1, n + 1)]
    return dist.discrete(pa), dist.discrete(pb), dist.discrete(uniform)


def grs_example_trial(k_param, cr, trial):
    """One greedy-rejection round for both parties over the shared stream.

    Greedy semantics for this construction collapse to 0/1 acceptances: on
    its first proposal a party accepts anything in its support (the covered
    mass min(P, Q) equals Q there); afterwards only atom 1 carries residual
    mass, so later steps accept atom 1 alone.  Returns (y_a, y_b).
    """
    n = 2 * k_param + 1
    y_a = None
    y_b = None
    start = 1
    chunk = 4 * n
    while y_a is None or y_b is None:
        u = cr.slot_uniforms(trial, 1, randomness.PROPOSAL, start + chunk - 1)
        ys = np.ceil(u[start - 1:] * n).astype(np.int64)
        for step, y in enumerate(ys, start=start):
            if y_a is None:
                in_support_a = y <= k_param + 1
                if (step == 1 and in_support_a) or (step > 1 and y == 1):
                    y_a = float(y)
            if y_b is None:
                in_support_b = y == 1 or y > k_param + 1
                if (step == 1 and in_support_b) or (step > 1 and y == 1):
                    y_b = float(y)
            if y_a is not None and y_b is not None:
                break
        start += chunk
    return y_a, y_b


def pml_example_trial(k_param, cr, trial):
    """The shared-race counterpart on the same construction.

    Both parties race the same k+2 exponential clocks: clock 1 is atom 1
    (mass (k+1)/(2k+1) for both); clock j >= 2 is the j-th atom of the
    party's own support (mass 1/(2k+1) each).  Equal mass profiles make the
    winning clock common, so the parties disagree only when the winner is a
    private atom.  Returns (y_a, y_b).
    """
    n = 2 * k_param + 1
    weights = np.full(k_param + 1, 1.0 / n)
    weights[0] = (k_param + 1) / n
    exps = cr.exponentials(trial, 1, k_param + 1)
    j, _ = gumbel_select(weights, exps)
    y_a = 1.0 if j == 1 else float(j)
    y_b = 1.0 if j == 1 else float(j + k_param)
    return y_a, y_b
