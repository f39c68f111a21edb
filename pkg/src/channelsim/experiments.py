"""Experiment runners, CSV schemas, and the bound-check registry.

Each experiment produces a list of row dicts under a fixed column order,
plus a checker that re-derives every bound comparison from the row values
alone.  The CLI prints the checker's PASS/FAIL lines after a run and
``verify`` re-applies the same checker to a CSV on disk, so a run can
always be audited after the fact.

Trials are independent given the seed (per-trial subkeys), so runners map
fixed-size chunks of trial indices over an optional process pool and then
aggregate in trial order; results are byte-identical for any worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from . import coder, dist, matching, samplers, wynerziv
from .randomness import CommonRandomness

LOG2E = 1.0 / math.log(2.0)

CHUNK = 512


@dataclass(frozen=True)
class CheckResult:
    """One bound comparison: what was checked, where, and by what margin."""

    name: str
    row: int
    passed: bool
    detail: str

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} row {self.row}: {self.name} ({self.detail})"


def _map_chunks(worker, payload, trials, workers=1):
    """Apply ``worker(payload, lo, hi)`` over fixed chunks of trial indices
    and concatenate results in trial order (worker-count independent)."""
    spans = [(lo, min(lo + CHUNK, trials)) for lo in range(0, trials, CHUNK)]
    if workers <= 1 or len(spans) <= 1:
        parts = [worker(payload, lo, hi) for lo, hi in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, [payload] * len(spans),
                                  *zip(*spans)))
    return [np.concatenate(cols) for cols in zip(*parts)]


def _mean_se(values):
    values = np.asarray(values, dtype=np.float64)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def _binom_se(rate, n):
    return math.sqrt(max(rate * (1.0 - rate), 0.0) / n)


# ---------------------------------------------------------------------------
# rs-coding (sorting + binning codecs over plain rejection sampling).

RS_COLUMNS = [
    "experiment", "seed", "sigma2", "trials", "omega", "kl_bits",
    "mean_log2_L", "se_log2_L", "mean_log2_khat", "se_log2_khat", "bound_khat",
    "mean_log2_T", "mean_log2_G", "se_log2_G",
    "ideal_bits", "wire_bits", "prop1_bound",
    "sort_roundtrip_failures", "bin_roundtrip_failures",
]


def _rs_worker(payload, lo, hi):
    seed, sigma2 = payload
    cr = CommonRandomness(seed)
    target = dist.gaussian(1.0, sigma2)
    proposal = dist.gaussian(0.0, 1.0)
    omega = dist.ratio_bound(target, proposal)
    n = hi - lo
    ks = np.empty(n, dtype=np.int64)
    ells = np.empty(n, dtype=np.int64)
    khats = np.empty(n, dtype=np.int64)
    ts = np.empty(n, dtype=np.int64)
    gs = np.empty(n, dtype=np.int64)
    sort_ok = np.empty(n, dtype=bool)
    bin_ok = np.empty(n, dtype=bool)
    for i, trial in enumerate(range(lo, hi)):
        k, _ = samplers.rs_select(cr, trial, target, proposal, omega)
        ell, khat = coder.rs_sort_encode(cr, trial, k, omega)
        t, g = coder.rs_bin_encode(cr, trial, k, omega)
        ks[i], ells[i], khats[i], ts[i], gs[i] = k, ell, khat, t, g
        sort_ok[i] = coder.rs_sort_decode(cr, trial, ell, khat, omega) == k
        bin_ok[i] = coder.rs_bin_decode(cr, trial, t, g, omega) == k
    return ks, ells, khats, ts, gs, sort_ok, bin_ok


def run_rs_coding(seed, trials, sigma2_list, workers=1):
    proposal = dist.gaussian(0.0, 1.0)
    rows = []
    for sigma2 in sigma2_list:
        target = dist.gaussian(1.0, sigma2)
        omega = dist.ratio_bound(target, proposal)
        kl = dist.divergences(target, proposal).kl_bits
        ks, ells, khats, ts, gs, sort_ok, bin_ok = _map_chunks(
            _rs_worker, (seed, sigma2), trials, workers)
        mean_l, se_l = _mean_se(np.log2(ells))
        mean_k, se_k = _mean_se(np.log2(khats))
        mean_g, se_g = _mean_se(np.log2(gs))
        rate = coder.total_rate({"L": ells, "khat": khats})
        rows.append({
            "experiment": "rs-coding", "seed": seed, "sigma2": sigma2,
            "trials": trials, "omega": omega, "kl_bits": kl,
            "mean_log2_L": mean_l, "se_log2_L": se_l,
            "mean_log2_khat": mean_k, "se_log2_khat": se_k,
            "bound_khat": kl + math.log2(math.e),
            "mean_log2_T": float(np.mean(np.log2(ts))),
            "mean_log2_G": mean_g, "se_log2_G": se_g,
            "ideal_bits": rate.ideal_bits, "wire_bits": rate.wire_bits,
            "prop1_bound": kl + math.log2(kl + 1.0) + 9.0,
            "sort_roundtrip_failures": int(np.sum(~sort_ok)),
            "bin_roundtrip_failures": int(np.sum(~bin_ok)),
        })
    return rows


def check_rs_coding(rows):
    out = []
    for i, r in enumerate(rows):
        out.append(CheckResult(
            "E[log2 L] <= 1 (+2 SE)", i,
            r["mean_log2_L"] <= 1.0 + 2.0 * r["se_log2_L"],
            f"{r['mean_log2_L']:.4f} vs 1.0000"))
        out.append(CheckResult(
            "E[log2 K-hat] <= KL + log2 e (+2 SE)", i,
            r["mean_log2_khat"] <= r["bound_khat"] + 2.0 * r["se_log2_khat"],
            f"{r['mean_log2_khat']:.4f} vs {r['bound_khat']:.4f}"))
        out.append(CheckResult(
            "E[log2 G] <= 1 (+2 SE)", i,
            r["mean_log2_G"] <= 1.0 + 2.0 * r["se_log2_G"],
            f"{r['mean_log2_G']:.4f} vs 1.0000"))
        out.append(CheckResult(
            "ideal rate <= KL + log2(KL+1) + 9", i,
            r["ideal_bits"] <= r["prop1_bound"],
            f"{r['ideal_bits']:.4f} vs {r['prop1_bound']:.4f}"))
        out.append(CheckResult(
            "codec roundtrips exact", i,
            r["sort_roundtrip_failures"] == 0 and r["bin_roundtrip_failures"] == 0,
            f"{r['sort_roundtrip_failures']}+{r['bin_roundtrip_failures']} failures"))
    return out


# ---------------------------------------------------------------------------
# ers-coding (three-part ensemble codec).

ERS_COLUMNS = [
    "experiment", "seed", "sigma2", "N", "trials", "omega", "delta",
    "group_size", "scale", "kl_bits",
    "mean_log2_L", "se_log2_L", "mean_log2_k1hat", "mean_log2_k2hat",
    "mean_log2_sum", "se_log2_sum", "bound_sum",
    "ideal_bits", "wire_bits", "prop2_bound", "roundtrip_failures",
]


def _ers_worker(payload, lo, hi):
    seed, sigma2, n_batch, scale = payload
    cr = CommonRandomness(seed)
    target = dist.gaussian(1.0, sigma2)
    proposal = dist.gaussian(0.0, 1.0)
    omega = dist.ratio_bound(target, proposal)
    delta = n_batch / (n_batch - 1 + omega)
    n = hi - lo
    ells = np.empty(n, dtype=np.int64)
    k1h = np.empty(n, dtype=np.int64)
    k2h = np.empty(n, dtype=np.int64)
    ok = np.empty(n, dtype=bool)
    for i, trial in enumerate(range(lo, hi)):
        sel = samplers.ers_select(cr, trial, target, proposal, omega, n_batch,
                                  scale=scale)
        ell, r1, r2 = coder.ers_encode(cr, trial, sel, delta, n_batch)
        ells[i], k1h[i], k2h[i] = ell, r1, r2
        k, y = coder.ers_decode(cr, trial, ell, r1, r2, delta, n_batch, proposal)
        ok[i] = (k == sel.k) and (y == samplers.selected_value(
            cr, trial, sel, proposal, n_batch))
    return ells, k1h, k2h, ok


def run_ers_coding(seed, trials, configs, workers=1, use_scale=True):
    """``configs`` is a list of (sigma2, N) pairs."""
    proposal = dist.gaussian(0.0, 1.0)
    rows = []
    for sigma2, n_batch in configs:
        target = dist.gaussian(1.0, sigma2)
        omega = dist.ratio_bound(target, proposal)
        kl = dist.divergences(target, proposal).kl_bits
        delta = n_batch / (n_batch - 1 + omega)
        scale = samplers.channel_scale(target, proposal, omega, n_batch) \
            if use_scale else 1.0
        ells, k1h, k2h, ok = _map_chunks(
            _ers_worker, (seed, sigma2, n_batch, scale), trials, workers)
        mean_l, se_l = _mean_se(np.log2(ells))
        mean_sum, se_sum = _mean_se(np.log2(k1h) + np.log2(k2h))
        rate = coder.total_rate({"L": ells, "k1hat": k1h, "k2hat": k2h})
        rows.append({
            "experiment": "ers-coding", "seed": seed, "sigma2": sigma2,
            "N": n_batch, "trials": trials, "omega": omega, "delta": delta,
            "group_size": coder.group_size(delta), "scale": scale, "kl_bits": kl,
            "mean_log2_L": mean_l, "se_log2_L": se_l,
            "mean_log2_k1hat": float(np.mean(np.log2(k1h))),
            "mean_log2_k2hat": float(np.mean(np.log2(k2h))),
            "mean_log2_sum": mean_sum, "se_log2_sum": se_sum,
            "bound_sum": kl + 2.0 * math.log2(math.e) + 3.0,
            "ideal_bits": rate.ideal_bits, "wire_bits": rate.wire_bits,
            "prop2_bound": kl + 2.0 * math.log2(kl + 8.0) + 12.0,
            "roundtrip_failures": int(np.sum(~ok)),
        })
    return rows


def check_ers_coding(rows):
    out = []
    for i, r in enumerate(rows):
        out.append(CheckResult(
            "E[log2 L] <= 1 (+2 SE)", i,
            r["mean_log2_L"] <= 1.0 + 2.0 * r["se_log2_L"],
            f"{r['mean_log2_L']:.4f} vs 1.0000"))
        out.append(CheckResult(
            "E[log2 K1-hat]+E[log2 K2-hat] <= KL + 2 log2 e + 3 (+2 SE)", i,
            r["mean_log2_sum"] <= r["bound_sum"] + 2.0 * r["se_log2_sum"],
            f"{r['mean_log2_sum']:.4f} vs {r['bound_sum']:.4f}"))
        out.append(CheckResult(
            "ideal rate <= KL + 2 log2(KL+8) + 12", i,
            r["ideal_bits"] <= r["prop2_bound"],
            f"{r['ideal_bits']:.4f} vs {r['prop2_bound']:.4f}"))
        out.append(CheckResult(
            "codec roundtrip exact", i, r["roundtrip_failures"] == 0,
            f"{r['roundtrip_failures']} failures"))
    return out


# ---------------------------------------------------------------------------
# matching sweep.

MATCH_COLUMNS = [
    "experiment", "seed", "protocol", "N", "nstar", "trials",
    "match_rate", "se", "bound_value", "comm_bits", "var_y_a",
]

BIN_COLUMNS = [
    "experiment", "seed", "protocol", "N", "bin_lo", "bin_hi", "count",
    "rate", "bound_min",
]


def _match_worker(payload, lo, hi):
    (seed, protocol, n_batch, qs, pas, pbs) = payload
    cr = CommonRandomness(seed)
    q = dist.from_config(qs)
    p_a = dist.from_config(pas)
    p_b = dist.from_config(pbs)
    omega_a = dist.ratio_bound(p_a, q)
    omega_b = dist.ratio_bound(p_b, q)
    omega = max(omega_a, omega_b)
    n = hi - lo
    matched = np.empty(n, dtype=bool)
    y_a = np.empty(n)
    comm = np.zeros(n, dtype=np.int64)
    for i, trial in enumerate(range(lo, hi)):
        if protocol == "rs":
            tr = matching.match_rs(cr, trial, p_a, p_b, q, omega)
        elif protocol == "ers-nocomm":
            tr = matching.match_ers_nocomm(cr, trial, p_a, p_b, q,
                                           omega_a, omega_b, n_batch)
        elif protocol == "ers-batchcomm":
            tr = matching.match_ers_batchcomm(cr, trial, p_a, p_b, q,
                                              omega_a, n_batch)
        elif protocol == "iml":
            tr = matching.match_iml(cr, trial, p_a, p_b, q, n_batch)
        elif protocol == "pml":
            tr = matching.match_pml(cr, trial, p_a, p_b, q, omega)
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
        matched[i] = tr.matched
        y_a[i] = tr.y_a
        comm[i] = tr.comm_bits
    return matched, y_a, comm


def _expected_bound(p_a, p_b, kind, coeff=None):
    """E_{y ~ P_A} of the protocol's conditional lower bound, by quadrature."""
    lo = min(p_a.mean, p_b.mean) - 10.0 * max(p_a.std, p_b.std)
    hi = max(p_a.mean, p_b.mean) + 10.0 * max(p_a.std, p_b.std)
    tv = dist.divergences(p_a, p_b).tv

    def integrand(y):
        da = dist.density(p_a, y)
        if kind == "rs":
            val = matching.bound_rs(p_a, p_b, y, tv=tv)
        elif kind == "pml":
            val = matching.bound_pml(p_a, p_b, y)
        else:
            val = matching.matching_lower_bound(coeff, da / dist.density(p_b, y))
        return da * val

    val, _ = quad(integrand, lo, hi, epsabs=1e-10, limit=200)
    return val


def run_matching(seed, trials, q, p_a, p_b, n_grid, workers=1, bins=0,
                 protocols=("rs", "pml", "ers-nocomm", "ers-batchcomm", "iml")):
    """Sweep all protocols over the batch grid with matched proposal budgets
    N* = N / Delta.  Returns (rows, bin_rows)."""
    omega_a = dist.ratio_bound(p_a, q)
    omega_b = dist.ratio_bound(p_b, q)
    omega = max(omega_a, omega_b)
    div_ab = dist.divergences(p_a, p_b)
    d2_qa = dist.divergences(p_a, q).d2
    d2_qb = dist.divergences(p_b, q).d2
    rs_exact = (1.0 - div_ab.tv) / (1.0 + div_ab.tv)
    payload_specs = (dist.to_config(q), dist.to_config(p_a), dist.to_config(p_b))
    rows, bin_rows = [], []
    batch_free = {}  # rs and pml ignore the batch size; run them once
    for n_batch in n_grid:
        delta = n_batch / (n_batch - 1 + omega_a)
        nstar = int(round(n_batch / delta))
        for protocol in protocols:
            size = nstar if protocol == "iml" else n_batch
            if protocol in ("rs", "pml"):
                if protocol not in batch_free:
                    batch_free[protocol] = _map_chunks(
                        _match_worker, (seed, protocol, 1) + payload_specs,
                        trials, workers)
                matched, y_a, comm = batch_free[protocol]
            else:
                matched, y_a, comm = _map_chunks(
                    _match_worker, (seed, protocol, size) + payload_specs,
                    trials, workers)
            rate = float(np.mean(matched))
            bound = math.nan
            coeff = None
            if protocol == "rs":
                bound = rs_exact
            elif protocol == "pml":
                bound = _expected_bound(p_a, p_b, "pml")
            elif protocol == "ers-nocomm" and math.isfinite(d2_qa + d2_qb) \
                    and n_batch >= 2:
                coeff = matching.bound_coefficients(
                    matching.NOCOMM, n_batch, omega, d2_qa, d2_qb)
                bound = _expected_bound(p_a, p_b, "ers", coeff)
            elif protocol == "ers-batchcomm" and math.isfinite(d2_qa) \
                    and n_batch >= 2:
                coeff = matching.bound_coefficients(
                    matching.BATCHCOMM, n_batch, omega_a, d2_qa, d2_qb)
                bound = _expected_bound(p_a, p_b, "ers", coeff)
            rows.append({
                "experiment": "matching", "seed": seed, "protocol": protocol,
                "N": n_batch, "nstar": nstar, "trials": trials,
                "match_rate": rate, "se": _binom_se(rate, trials),
                "bound_value": bound, "comm_bits": float(np.mean(comm)),
                "var_y_a": float(np.var(y_a)),
            })
            if bins and protocol != "iml":
                bin_rows.extend(_bin_rows(seed, protocol, n_batch, y_a, matched,
                                          bins, p_a, p_b, div_ab.tv, coeff))
    return rows, bin_rows


def _bin_rows(seed, protocol, n_batch, y_a, matched, bins, p_a, p_b, tv, coeff):
    out = []
    for lo, hi, count, rate in matching.binned_conditional_rates(y_a, matched, bins):
        grid = np.linspace(lo, hi, 64)
        if protocol == "rs":
            vals = [matching.bound_rs(p_a, p_b, y, tv=tv) for y in grid]
        elif protocol == "pml":
            vals = [matching.bound_pml(p_a, p_b, y) for y in grid]
        elif coeff is not None:
            ratios = dist.density(p_a, grid) / dist.density(p_b, grid)
            vals = [matching.matching_lower_bound(coeff, r) for r in ratios]
        else:
            vals = [math.nan]
        out.append({
            "experiment": "matching-bins", "seed": seed, "protocol": protocol,
            "N": n_batch, "bin_lo": lo, "bin_hi": hi, "count": count,
            "rate": rate, "bound_min": float(np.min(vals)),
        })
    return out


def check_matching(rows):
    out = []
    by_n = {}
    pml_rates = []
    for i, r in enumerate(rows):
        out.append(CheckResult(
            "match rate in [0, 1]", i, 0.0 <= r["match_rate"] <= 1.0,
            f"{r['match_rate']:.4f}"))
        if r["protocol"] == "rs":
            tol = 3.0 * r["se"]
            out.append(CheckResult(
                "RS rate = (1-TV)/(1+TV) (+-3 sigma)", i,
                abs(r["match_rate"] - r["bound_value"]) <= tol,
                f"{r['match_rate']:.4f} vs {r['bound_value']:.4f}"))
        elif not math.isnan(r["bound_value"]):
            out.append(CheckResult(
                "rate >= expected lower bound - 3 sigma", i,
                r["match_rate"] >= r["bound_value"] - 3.0 * r["se"],
                f"{r['match_rate']:.4f} vs {r['bound_value']:.4f}"))
        if r["protocol"] == "pml":
            pml_rates.append((i, r))
        by_n.setdefault(r["N"], {})[r["protocol"]] = (i, r)
    for n_batch, group in sorted(by_n.items()):
        if "ers-batchcomm" in group and "iml" in group:
            i, bc = group["ers-batchcomm"]
            _, im = group["iml"]
            out.append(CheckResult(
                "batch-comm ERS >= IML at matched N*", i,
                bc["match_rate"] >= im["match_rate"],
                f"{bc['match_rate']:.4f} vs {im['match_rate']:.4f}"))
        if "ers-batchcomm" in group:
            i, bc = group["ers-batchcomm"]
            omega_hint = bc["nstar"] - bc["N"] + 1
            if bc["N"] >= omega_hint:
                out.append(CheckResult(
                    "batch index overhead <= 4 bits for N >= omega", i,
                    bc["comm_bits"] <= 4.0, f"{bc['comm_bits']:.3f} bits"))
    if len(pml_rates) >= 2:
        i0, first = pml_rates[0]
        for i, r in pml_rates[1:]:
            tol = 3.0 * math.hypot(first["se"], r["se"])
            out.append(CheckResult(
                "PML rate independent of N (within CI)", i,
                abs(r["match_rate"] - first["match_rate"]) <= tol,
                f"{r['match_rate']:.4f} vs {first['match_rate']:.4f}"))
    return out


def check_matching_bins(rows):
    out = []
    for i, r in enumerate(rows):
        if math.isnan(r["bound_min"]) or r["count"] == 0:
            continue
        # Sigma under the hypothesized bound: testing the observed rate
        # against bound - 3 sigma with the bound's own binomial deviation.
        se = _binom_se(r["bound_min"], r["count"])
        out.append(CheckResult(
            "binned rate >= bound - 3 sigma", i,
            r["rate"] >= r["bound_min"] - 3.0 * se,
            f"{r['rate']:.4f} vs {r['bound_min']:.4f} (n={r['count']})"))
    return out


# ---------------------------------------------------------------------------
# greedy-rejection counterexample.

GRS_COLUMNS = [
    "experiment", "seed", "k", "trials", "n_cond", "grs_cond_rate",
    "expected_rate", "se", "pml_cond_rate",
]


def _grs_worker(payload, lo, hi):
    seed, k_param = payload
    cr = CommonRandomness(seed)
    n = hi - lo
    grs_a1 = np.empty(n, dtype=bool)
    grs_match = np.empty(n, dtype=bool)
    pml_a1 = np.empty(n, dtype=bool)
    pml_match = np.empty(n, dtype=bool)
    for i, trial in enumerate(range(lo, hi)):
        y_a, y_b = samplers.grs_example_trial(k_param, cr, trial)
        grs_a1[i] = y_a == 1.0
        grs_match[i] = y_a == y_b
        y_a, y_b = samplers.pml_example_trial(k_param, cr, trial)
        pml_a1[i] = y_a == 1.0
        pml_match[i] = y_a == y_b
    return grs_a1, grs_match, pml_a1, pml_match


def run_grs_example(seed, trials, k_list, workers=1):
    rows = []
    for k_param in k_list:
        grs_a1, grs_match, pml_a1, pml_match = _map_chunks(
            _grs_worker, (seed, k_param), trials, workers)
        n_cond = int(np.sum(grs_a1))
        rate = float(np.sum(grs_match & grs_a1) / n_cond)
        pml_rate = float(np.sum(pml_match & pml_a1) / np.sum(pml_a1))
        rows.append({
            "experiment": "grs-example", "seed": seed, "k": k_param,
            "trials": trials, "n_cond": n_cond, "grs_cond_rate": rate,
            "expected_rate": 1.0 / (k_param + 1.0),
            "se": _binom_se(rate, n_cond), "pml_cond_rate": pml_rate,
        })
    return rows


def check_grs_example(rows):
    out = []
    for i, r in enumerate(rows):
        tol = 3.0 * r["se"]
        out.append(CheckResult(
            "greedy cond. match = 1/(k+1) (+-3 sigma)", i,
            abs(r["grs_cond_rate"] - r["expected_rate"]) <= tol,
            f"{r['grs_cond_rate']:.4f} vs {r['expected_rate']:.4f}"))
        out.append(CheckResult(
            "shared-race cond. match = 1 exactly", i,
            r["pml_cond_rate"] == 1.0, f"{r['pml_cond_rate']:.6f}"))
    return out


# ---------------------------------------------------------------------------
# Wyner-Ziv desk experiment.

WZ_COLUMNS = [
    "experiment", "seed", "sigma2", "n_joint", "N", "log2V", "eps", "trials",
    "rate_per_sample", "distortion_db", "mismatch_rate", "mismatch_se",
    "matched_distortion_db", "target_db", "mean_batch_bits", "mean_extra_bits",
    "bound_value", "bound_se", "block_omega", "mu1_realized", "feedback",
    "post_feedback_mismatch_rate",
]


def _wz_eps(cfg):
    """Preset slack: covers the realized mu'_1 = 3 * block_omega / N with a
    small floor (mu'_2 carries an infinite d2 on this family, so eps is
    pinned from mu'_1 alone)."""
    return max(0.05, round(3.0 * wynerziv.block_omega(cfg) / cfg.n_batch + 0.06, 2))


def run_wz(seed, trials, sigma2_list, n_joint_list, log2v_list, n_batch=2 ** 12,
           feedback_log2v=None, feedback_trials=None, bound_samples=10 ** 5):
    """RD grid at desk scale.  Encodes are shared across the hash alphabets
    of a (sigma2, n_joint) cell; feedback rows run separately (the hash is
    re-keyed to index bits)."""
    rows = []
    for sigma2 in sigma2_list:
        for n_joint in n_joint_list:
            template = wynerziv.WzConfig(
                sigma2_yprime_given_x=sigma2, hash_alphabet=2, n_batch=n_batch,
                n_joint=n_joint)
            alphabets = [2 ** b for b in log2v_list]
            sweep = wynerziv.run_wz_hash_sweep(template, alphabets, trials, seed)
            for log2v, alphabet in zip(log2v_list, alphabets):
                cfg = wynerziv.WzConfig(
                    sigma2_yprime_given_x=sigma2, hash_alphabet=alphabet,
                    n_batch=n_batch, n_joint=n_joint)
                cfg = replace(cfg, eps=_wz_eps(cfg))
                rd = sweep[alphabet]
                bound, bound_se = wynerziv.wz_error_bound(cfg, bound_samples, seed)
                rows.append(_wz_row(seed, cfg, rd, bound, bound_se, trials))
    if feedback_log2v:
        fb_trials = feedback_trials or trials
        for sigma2 in sigma2_list:
            for log2v in feedback_log2v:
                cfg = wynerziv.WzConfig(
                    sigma2_yprime_given_x=sigma2, hash_alphabet=2 ** log2v,
                    n_batch=n_batch, n_joint=1, feedback=True)
                cfg = replace(cfg, eps=_wz_eps(cfg))
                rd = wynerziv.run_wz_experiment(cfg, fb_trials, seed)
                bound, bound_se = wynerziv.wz_error_bound(cfg, bound_samples, seed)
                rows.append(_wz_row(seed, cfg, rd, bound, bound_se, fb_trials))
    return rows


def _wz_row(seed, cfg, rd, bound, bound_se, trials):
    b_omega = wynerziv.block_omega(cfg)
    return {
        "experiment": "wz", "seed": seed, "sigma2": cfg.sigma2_yprime_given_x,
        "n_joint": cfg.n_joint, "N": cfg.n_batch,
        "log2V": math.log2(cfg.hash_alphabet), "eps": cfg.eps, "trials": trials,
        "rate_per_sample": rd.rate_per_sample, "distortion_db": rd.distortion_db,
        "mismatch_rate": rd.mismatch_rate, "mismatch_se": rd.mismatch_se,
        "matched_distortion_db": rd.matched_distortion_db,
        "target_db": 10.0 * math.log10(cfg.sigma2_yprime_given_x),
        "mean_batch_bits": rd.mean_batch_bits,
        "mean_extra_bits": rd.mean_extra_bits,
        "bound_value": bound, "bound_se": bound_se, "block_omega": b_omega,
        "mu1_realized": 3.0 * b_omega / cfg.n_batch,
        "feedback": int(cfg.feedback),
        "post_feedback_mismatch_rate": rd.post_feedback_mismatch_rate,
    }


def check_wz(rows):
    out = []
    groups = {}
    for i, r in enumerate(rows):
        gated = r["N"] >= r["block_omega"]
        if gated and not r["feedback"]:
            out.append(CheckResult(
                "mismatch <= bound + 3 sigma (N >= block omega)", i,
                r["mismatch_rate"] <= r["bound_value"] + 3.0 * r["mismatch_se"],
                f"{r['mismatch_rate']:.5f} vs {r['bound_value']:.5f}"))
            out.append(CheckResult(
                "batch overhead <= 4 bits (N >= block omega)", i,
                r["mean_batch_bits"] <= 4.0, f"{r['mean_batch_bits']:.3f} bits"))
        out.append(CheckResult(
            "matched-decode distortion on target (+-0.2 dB)", i,
            abs(r["matched_distortion_db"] - r["target_db"]) <= 0.2,
            f"{r['matched_distortion_db']:.3f} vs {r['target_db']:.3f} dB"))
        if r["feedback"]:
            out.append(CheckResult(
                "feedback clears every residual mismatch", i,
                r["post_feedback_mismatch_rate"] == 0.0,
                f"{r['post_feedback_mismatch_rate']:.5f}"))
            vb = 2.0 ** (r["log2V"] * r["n_joint"])
            hi = 1.0 + math.log2(r["N"] / vb)
            ok = (r["mean_extra_bits"] >= 1.0 - 1e-9
                  and r["mean_extra_bits"] <= hi + 1e-9)
            out.append(CheckResult(
                "feedback bits within {1, 1+log2(N/V)}", i, ok,
                f"mean {r['mean_extra_bits']:.3f} in [1, {hi:.1f}]"))
        else:
            groups.setdefault((r["sigma2"], r["log2V"]), []).append((i, r))
    by_alphabet = {}
    for (sigma2, log2v), cell in groups.items():
        for i, r in cell:
            by_alphabet.setdefault((sigma2, r["n_joint"]), []).append((i, r))
    for (sigma2, n_joint), cell in sorted(by_alphabet.items()):
        cell.sort(key=lambda item: item[1]["log2V"])
        if len(cell) < 2:
            continue
        rates = [r["mismatch_rate"] for _, r in cell]
        # Coarser hashes admit every finer-hash collision, so this holds
        # pathwise under paired seeds, not just in expectation.
        out.append(CheckResult(
            "mismatch non-increasing in log2V", cell[-1][0],
            all(a >= b for a, b in zip(rates, rates[1:])),
            " >= ".join(f"{v:.5f}" for v in rates)))
    for (sigma2, log2v), cell in sorted(groups.items()):
        cell.sort(key=lambda item: item[1]["n_joint"])
        if len(cell) < 2:
            continue
        rates = [r["mismatch_rate"] for _, r in cell]
        # Strict decrease is resolvable only where the rates are far from
        # zero: require it at the smallest alphabet, monotone elsewhere.
        smallest = log2v == min(v for _, v in groups)
        idx = cell[-1][0]
        if smallest and rates[0] > 10.0 / cell[0][1]["trials"]:
            ok = all(a > b for a, b in zip(rates, rates[1:]))
            name = "mismatch strictly decreasing in n_joint"
        else:
            ok = all(a >= b for a, b in zip(rates, rates[1:]))
            name = "mismatch non-increasing in n_joint"
        out.append(CheckResult(
            name, idx, ok, " > ".join(f"{v:.5f}" for v in rates)))
    return out


# ---------------------------------------------------------------------------
# bounds report (no checks; informational).

BOUNDS_COLUMNS = [
    "experiment", "seed", "pa", "pb", "q", "N", "omega_a", "omega_b",
    "kl_ab_bits", "tv_ab", "d2_qa", "d2_qb",
    "mu1_nocomm", "mu2_nocomm", "mu1_batchcomm", "mu2_batchcomm",
]


def run_bounds(seed, q, p_a, p_b, n_grid):
    omega_a = dist.ratio_bound(p_a, q)
    omega_b = dist.ratio_bound(p_b, q)
    omega = max(omega_a, omega_b)
    div = dist.divergences(p_a, p_b)
    d2_qa = dist.divergences(p_a, q).d2
    d2_qb = dist.divergences(p_b, q).d2
    rows = []
    for n_batch in n_grid:
        nc = matching.bound_coefficients(matching.NOCOMM, n_batch, omega,
                                         d2_qa, d2_qb)
        bc = matching.bound_coefficients(matching.BATCHCOMM, n_batch, omega_a,
                                         d2_qa, d2_qb)
        rows.append({
            "experiment": "bounds", "seed": seed, "pa": dist.to_config(p_a),
            "pb": dist.to_config(p_b), "q": dist.to_config(q), "N": n_batch,
            "omega_a": omega_a, "omega_b": omega_b, "kl_ab_bits": div.kl_bits,
            "tv_ab": div.tv, "d2_qa": d2_qa, "d2_qb": d2_qb,
            "mu1_nocomm": nc.mu1, "mu2_nocomm": nc.mu2,
            "mu1_batchcomm": bc.mu1, "mu2_batchcomm": bc.mu2,
        })
    return rows


# ---------------------------------------------------------------------------
# CSV plumbing shared with the CLI.

SCHEMAS = {
    "rs-coding": (RS_COLUMNS, check_rs_coding),
    "ers-coding": (ERS_COLUMNS, check_ers_coding),
    "matching": (MATCH_COLUMNS, check_matching),
    "matching-bins": (BIN_COLUMNS, check_matching_bins),
    "grs-example": (GRS_COLUMNS, check_grs_example),
    "wz": (WZ_COLUMNS, check_wz),
    "bounds": (BOUNDS_COLUMNS, lambda rows: []),
}


def _format(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, rows, columns):
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns])


def read_csv(path):
    """Parse a results CSV back into typed row dicts plus its experiment name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = [dict(zip(header, line, strict=True)) for line in reader]
    if not raw:
        raise ValueError(f"{path} contains no data rows")
    experiment = raw[0].get("experiment")
    if experiment not in SCHEMAS:
        raise ValueError(f"unknown experiment {experiment!r} in {path}")
    columns, _ = SCHEMAS[experiment]
    if header != columns:
        raise ValueError(f"schema mismatch for {experiment}: {header}")
    rows = []
    for entry in raw:
        parsed = {}
        for key, text in entry.items():
            parsed[key] = _parse_cell(key, text)
        rows.append(parsed)
    return experiment, rows


_STR_COLUMNS = {"experiment", "seed", "protocol", "pa", "pb", "q"}
_INT_COLUMNS = {"trials", "N", "n_joint", "k", "n_cond", "count", "nstar",
                "group_size", "sort_roundtrip_failures", "bin_roundtrip_failures",
                "roundtrip_failures", "feedback"}


def _parse_cell(key, text):
    if key in _STR_COLUMNS:
        return text
    if key in _INT_COLUMNS:
        return int(text)
    return float(text)


def verify_rows(experiment, rows):
    _, checker = SCHEMAS[experiment]
    return checker(rows)


def verify_csv(path):
    experiment, rows = read_csv(path)
    return verify_rows(experiment, rows)
