"""Index codecs: integer prefix codes and the shared-randomness rank codecs.

Two layers live here.  The integer layer (unary, Elias-delta, the Zipf code
model) turns positive integers into prefix-free bitstrings and ideal code
lengths.  The rank layer exploits the shared stream W so the transmitted
integers are small:

* sorting method for plain rejection sampling: send the group ceiling
  L = ceil(K / floor(omega)) and the rank of U_K inside its group;
* binning method: send the scaled-acceptance bin T = ceil(omega * U_K) and
  the position G of K among same-bin indices;
* ensemble codec: group whole batches by floor(1/Delta), send (L, K1-hat)
  for the batch and the rank K2-hat of the winning exponential.

Every decoder reconstructs Y_K from the seed, the transmitted integers, the
agreed constants (omega or Delta, N), and the proposal distribution alone.

Bitstrings are '0'/'1' strings; ``pack_bits`` serializes them MSB-first into
bytes with zero padding in the final byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .samplers import global_index

LOG2E = 1.0 / math.log(2.0)

#: Proposals a binning decoder will scan before giving up.
MAX_SCAN = 10 ** 7


class MalformedCodeError(ValueError):
    """A bitstring does not parse under the declared prefix code."""


# ---------------------------------------------------------------------------
# Integer prefix codes.

def unary_encode(k):
    """(k-1) one-bits followed by a zero-bit; length k."""
    if k < 1:
        raise ValueError("unary codes are defined for k >= 1")
    return "1" * (k - 1) + "0"


def unary_decode(bits):
    if not bits or bits.strip("1") != "0" or not bits.endswith("0"):
        raise MalformedCodeError(f"not a unary codeword: {bits!r}")
    return len(bits)


def elias_delta_encode(k):
    """Standard Elias-delta: gamma-coded bit length, then the low bits of k."""
    if k < 1:
        raise ValueError("Elias-delta codes are defined for k >= 1")
    n = k.bit_length() - 1
    header = bin(n + 1)[2:]
    return "0" * (len(header) - 1) + header + bin(k)[3:]


def elias_delta_decode(bits):
    zeros = 0
    while zeros < len(bits) and bits[zeros] == "0":
        zeros += 1
    header_end = 2 * zeros + 1
    if header_end > len(bits):
        raise MalformedCodeError("truncated Elias-delta header")
    n = int(bits[zeros:header_end], 2) - 1
    if header_end + n != len(bits):
        raise MalformedCodeError("Elias-delta payload length mismatch")
    if n == 0:
        return 1
    return (1 << n) | int(bits[header_end:], 2)


def elias_delta_length(k):
    n = k.bit_length() - 1
    return n + 2 * ((n + 1).bit_length() - 1) + 1


def pack_bits(bits):
    """Serialize a bitstring MSB-first; the final byte is zero-padded."""
    out = bytearray()
    for i in range(0, len(bits), 8):
        out.append(int(bits[i:i + 8].ljust(8, "0"), 2))
    return bytes(out)


@dataclass(frozen=True)
class ZipfModel:
    """Power-law code model pmf(k) = k^-lam / zeta(lam) for k >= 1."""

    lam: float

    def __post_init__(self):
        if not self.lam > 1.0:
            raise ValueError("the Zipf exponent must exceed 1")

    @property
    def normalizer(self):
        return float(zeta(self.lam, 1))

    @classmethod
    def from_mean_log(cls, e_log_k):
        """Exponent matched to a measured E[log2 K]: lam = 1 + 1/(E+1)."""
        if e_log_k < 0:
            raise ValueError("E[log K] cannot be negative")
        return cls(1.0 + 1.0 / (e_log_k + 1.0))

    def ideal_bits(self, k):
        """-log2 pmf(k); vectorized over k."""
        karr = np.asarray(k, dtype=np.float64)
        out = self.lam * np.log2(karr) + math.log2(self.normalizer)
        return float(out) if np.isscalar(k) else out


def zipf_ideal_bits(k, e_log_k):
    """Ideal bits for k under the Zipf model fitted to E[log2 K] = e_log_k."""
    return ZipfModel.from_mean_log(e_log_k).ideal_bits(k)


# ---------------------------------------------------------------------------
# Rank helpers.

def rank_by_value(values, position):
    """1-based ascending rank of values[position], ties broken by index."""
    order = np.argsort(np.asarray(values), kind="stable")
    return int(np.nonzero(order == position)[0][0]) + 1


def index_of_rank(values, rank):
    """Inverse of rank_by_value: the 0-based index holding the given rank."""
    order = np.argsort(np.asarray(values), kind="stable")
    return int(order[rank - 1])


# ---------------------------------------------------------------------------
# Sorting method (plain rejection sampling).

def rs_sort_encode(cr, trial, k, omega):
    """(L, K-hat): group ceiling and the rank of U_K inside group L."""
    group = int(omega)
    if group < 1:
        raise ValueError("sorting method needs floor(omega) >= 1")
    ell = (k + group - 1) // group
    base = (ell - 1) * group
    us = cr.batch_uniforms(trial, ell * group)[base:]
    return ell, rank_by_value(us, k - base - 1)


def rs_sort_decode(cr, trial, ell, k_hat, omega):
    """Recover K by sorting the same group of uniforms."""
    group = int(omega)
    if not 1 <= k_hat <= group:
        raise ValueError(f"rank {k_hat} outside group of size {group}")
    base = (ell - 1) * group
    us = cr.batch_uniforms(trial, ell * group)[base:]
    return base + index_of_rank(us, k_hat) + 1


# ---------------------------------------------------------------------------
# Binning method.  The bin of index i is ceil(omega * U_i): the proposal
# density cancels out of the bin membership test, so neither side needs it.

def rs_bin_encode(cr, trial, k, omega):
    """(T, G): acceptance bin of U_K and the position of K inside it."""
    us = cr.batch_uniforms(trial, k)
    t = int(math.ceil(omega * us[k - 1]))
    g = int(np.sum(np.ceil(omega * us) == t))
    return t, g


def rs_bin_decode(cr, trial, t, g, omega, max_scan=MAX_SCAN):
    """Scan the stream reconstructing bin T until its g-th member."""
    seen = 0
    chunk = 64
    start = 1
    while start <= max_scan:
        n = min(chunk, max_scan - start + 1)
        us = cr.batch_uniforms(trial, start + n - 1)[start - 1:]
        members = np.nonzero(np.ceil(omega * us) == t)[0]
        if seen + members.size >= g:
            return start + int(members[g - seen - 1])
        seen += members.size
        start += n
        chunk = min(2 * chunk, 8192)
    raise MalformedCodeError(f"binning decoder scanned {max_scan} proposals")


# ---------------------------------------------------------------------------
# Ensemble codec.

def group_size(delta):
    """Batches per group: floor(1/Delta), from the agreed closed-form Delta."""
    g = int(1.0 / delta)
    if g < 1:
        raise ValueError("Delta must lie in (0, 1]")
    return g


def ers_encode(cr, trial, sel, delta, n_batch):
    """(L, K1-hat, K2-hat) for an accepted ensemble selection.

    L and K1-hat code the batch index by the sorting method over groups of
    floor(1/Delta) batch uniforms; K2-hat is the ascending rank of the
    winning slot's exponential inside its batch.
    """
    g = group_size(delta)
    ell = (sel.k1 + g - 1) // g
    base = (ell - 1) * g
    us = cr.batch_uniforms(trial, ell * g)[base:]
    k1_hat = rank_by_value(us, sel.k1 - base - 1)
    exps = cr.exponentials(trial, sel.k1, n_batch)
    k2_hat = rank_by_value(exps, sel.k2 - 1)
    return ell, k1_hat, k2_hat


def ers_decode(cr, trial, ell, k1_hat, k2_hat, delta, n_batch, proposal):
    """Invert the three messages and rebuild (K, Y_K) from the stream."""
    g = group_size(delta)
    if not 1 <= k1_hat <= g:
        raise ValueError(f"batch rank {k1_hat} outside group of size {g}")
    if not 1 <= k2_hat <= n_batch:
        raise ValueError(f"slot rank {k2_hat} outside batch of size {n_batch}")
    base = (ell - 1) * g
    us = cr.batch_uniforms(trial, ell * g)[base:]
    k1 = base + index_of_rank(us, k1_hat) + 1
    exps = cr.exponentials(trial, k1, n_batch)
    k2 = index_of_rank(exps, k2_hat) + 1
    y = float(cr.proposals(trial, k1, n_batch, proposal)[k2 - 1])
    return global_index(n_batch, k1, k2), y


# ---------------------------------------------------------------------------
# Rate accounting.

@dataclass(frozen=True)
class CodedMessage:
    """Transmitted integers for one trial plus their ideal and wire lengths."""

    parts: tuple
    ideal_bits: float
    wire_bits: int


@dataclass(frozen=True)
class RateReport:
    """Mean per-trial rates for a pipeline, ideal and concrete."""

    ideal_bits: float
    wire_bits: float
    part_mean_log2: dict
    part_models: dict


def code_message(parts, models):
    """CodedMessage for one trial's parts under per-label Zipf models."""
    ideal = 0.0
    wire = 0
    for label, value in parts:
        if value < 1:
            raise ValueError(f"part {label} has value {value} < 1")
        ideal += models[label].ideal_bits(value)
        wire += elias_delta_length(int(value))
    return CodedMessage(parts=tuple(parts), ideal_bits=ideal, wire_bits=wire)


def total_rate(parts_by_label):
    """Fit a Zipf model per part from its measured E[log2 value] and report
    the mean ideal bits (sum of -log2 pmf) and mean Elias-delta wire bits."""
    models = {}
    mean_logs = {}
    ideal = None
    wire = None
    for label, values in parts_by_label.items():
        values = np.asarray(values)
        if np.any(values < 1):
            raise ValueError(f"part {label} contains values below 1")
        mean_log = float(np.mean(np.log2(values)))
        model = ZipfModel.from_mean_log(mean_log)
        models[label] = model
        mean_logs[label] = mean_log
        part_ideal = model.ideal_bits(values.astype(np.float64))
        part_wire = np.array([elias_delta_length(int(v)) for v in values])
        ideal = part_ideal if ideal is None else ideal + part_ideal
        wire = part_wire if wire is None else wire + part_wire
    return RateReport(ideal_bits=float(np.mean(ideal)), wire_bits=float(np.mean(wire)),
                      part_mean_log2=mean_logs, part_models=models)
