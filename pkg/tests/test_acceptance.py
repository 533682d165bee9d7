"""
Acceptance suite: ten criteria, each checked at its stated tolerance and
runtime limit. Every criterion prints one PASS/FAIL line (visible with
``pytest -s`` or when run directly as ``python3 tests/test_acceptance.py``).
"""

import sys
import time

import numpy as np
import pytest

from ddlab.channel import DelayDopplerChannel, apply
from ddlab.harness.engine import csv_text
from ddlab.harness.experiments import default_spec, run_experiment
from ddlab.numerics import BPSK, QPSK, RngStream
from ddlab.stcode import (GroupPartition, alamouti, decode_linear, decode_pic, diagonal_from_rotation,
                          diversity_report, enumerate_codebook, equivalent_real_channel, ml_indices,
                          ostbc34, realvec, unitary_code_search)
from ddlab.vofdm import VofdmConfig, demodulate, modulate, per_bin_channels

pytestmark = pytest.mark.slow


def _crandn(g, *shape):
    return g.standard_normal(shape) + 1j * g.standard_normal(shape)


def criterion_1():
    g = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        m = int(g.choice([1, 2, 4]))
        n = int(g.choice([4, 8, 16]))
        cfg = VofdmConfig(m, n, m * int(g.integers(1, 4)))
        h = _crandn(g, int(g.integers(1, cfg.cp_len + 2)))
        grid = QPSK.points[g.integers(0, 4, (n, m))]
        rx = demodulate(cfg, apply(DelayDopplerChannel.from_profile(range(h.size), h), modulate(cfg, grid)))
        ref = np.einsum("kij,kj->ki", per_bin_channels(cfg, h), grid)
        worst = max(worst, float(np.max(np.abs(rx - ref)) / np.max(np.abs(ref))))
    return worst <= 1e-10, f"max relative error {worst:.2e} over 100 cases"


def criterion_2():
    r = run_experiment("E3")
    d = r.details
    return r.passed, f"OFDM bit-exact {d['ofdm_bit_exact_cases']}, SC-FDE error {d['scfde_max_rel_error']:.2e}"


def criterion_3():
    r = run_experiment("E1")
    d = r.details
    ok = r.passed and d["signal_max_abs_error"] <= 1e-12 and not any(d["decision_mismatches_per_snr"])
    return ok, (f"signal error {d['signal_max_abs_error']:.2e}, "
                f"decision mismatches {d['decision_mismatches_per_snr']}")


def criterion_4():
    a = run_experiment("E2")
    b = run_experiment("E2")
    d = a.details
    n_prec = int(d["candidates"].split()[0])
    ok = (a.passed and n_prec >= 66 and d["block_len"] == 64
          and d["residual_linear"] == b.details["residual_linear"]
          and d["residual_constant"] == b.details["residual_constant"])
    return ok, (f"linear {d['residual_linear']:.4f} vs constant {d['residual_constant']:.2e} "
                f"({d['candidates']})")


def criterion_5():
    r = run_experiment("E4")
    by = {rec.experiment: rec for rec in r.records}
    ofdm, vec = by["E4:ofdm-zf"], by["E4:vofdm-mmse"]
    ok = (r.passed and vec.ci95_high < ofdm.ci95_low and vec.errors >= 200 and ofdm.errors >= 200)
    return ok, (f"VOFDM M=16 {vec.ber:.2e} [{vec.ci95_low:.2e},{vec.ci95_high:.2e}] vs "
                f"OFDM {ofdm.ber:.2e} [{ofdm.ci95_low:.2e},{ofdm.ci95_high:.2e}]")


def criterion_6():
    cb = enumerate_codebook(alamouti(BPSK))
    rep = diversity_report(cb)
    pairs = len(cb) * (len(cb) - 1) // 2
    g = np.random.default_rng(6)
    code = ostbc34(4, QPSK)
    s = _crandn(g, 100, 3)
    c = code.codeword(s)
    gram = np.conj(np.swapaxes(c, 1, 2)) @ c
    resid = float(np.max(np.abs(gram - np.sum(np.abs(s) ** 2, 1)[:, None, None] * np.eye(4))))
    ident = diversity_report(enumerate_codebook(diagonal_from_rotation(np.eye(2), BPSK)))
    ok = rep.min_abs_det == 4 and pairs == 6 and resid <= 1e-12 and not ident.full_diversity
    return ok, f"Alamouti min|det| {rep.min_abs_det} over {pairs} pairs, OSTBC residual {resid:.1e}"


def criterion_7():
    g = np.random.default_rng(7)
    mismatches = 0
    for code in (ostbc34(4, QPSK), ostbc34(3, QPSK), alamouti(QPSK)):
        cb = enumerate_codebook(code)
        trials = 10**4 // 3 + 1
        for _ in range(trials):
            mr = int(g.integers(1, 3))
            h = _crandn(g, code.mt, mr)
            s = QPSK.points[g.integers(0, 4, code.symbols)]
            y = code.codeword(s) @ h + 0.8 * _crandn(g, code.t, mr)
            ml = cb.labels[int(ml_indices(cb.codewords, h, y))]
            mismatches += not np.array_equal(decode_linear(code, h, y), ml)
    # PIC with one group against exhaustive ML on the real-stacked system
    code = ostbc34(4, QPSK)
    levels = QPSK.axis_levels[0]
    cand = np.array(np.meshgrid(*[levels] * code.ns, indexing="ij")).reshape(code.ns, -1).T
    pic_mismatch = 0
    for _ in range(1000):
        h = _crandn(g, 4, 1)
        y = code.codeword(QPSK.points[g.integers(0, 4, 3)]) @ h + 1.0 * _crandn(g, 4, 1)
        G = equivalent_real_channel(code, h)
        u = cand[int(np.argmin(np.sum((realvec(y)[None] - cand @ G.T) ** 2, axis=1)))]
        ref = QPSK.indices_to_bits(QPSK.nearest(u[0::2] + 1j * u[1::2]))
        pic_mismatch += not np.array_equal(decode_pic(code, h, y, GroupPartition.single(code.ns)), ref)
    return mismatches == 0 and pic_mismatch == 0, (
        f"ZF/ML mismatches {mismatches} of {3 * (10**4 // 3 + 1)}, PIC/ML mismatches {pic_mismatch} of 1000")


def criterion_8():
    r = run_experiment("E5")
    d = r.details
    ok = (r.passed and -0.23 <= d["slope_alamouti_per_dB"] <= -0.17
          and -0.12 <= d["slope_uncoded_per_dB"] <= -0.08 and d["min_errors_per_point"] >= 200)
    return ok, (f"slopes alamouti {d['slope_alamouti_per_dB']:.4f}, "
                f"uncoded {d['slope_uncoded_per_dB']:.4f} /dB")


def criterion_9():
    a = unitary_code_search(6, 2, RngStream(1, 0), 10**5)
    b = unitary_code_search(6, 2, RngStream(1, 0), 10**5)
    ok = (a.report.full_diversity and a.report.diversity_product >= 0.5
          and np.array_equal(a.codebook.codewords, b.codebook.codewords)
          and bool(np.all(np.diff(a.trace) >= 0)))
    return ok, f"diversity product {a.report.diversity_product:.4f} after {a.evaluations} evaluations"


def criterion_10():
    differing = []
    for name in ("E1", "E2", "E3", "E4", "E5", "E6"):
        spec = default_spec(name, seed=2024)
        first = csv_text(run_experiment(name, spec, workers=1).records).encode()
        second = csv_text(run_experiment(name, spec, workers=1).records).encode()
        parallel = csv_text(run_experiment(name, spec, workers=4).records).encode()
        if not (first == second == parallel):
            differing.append(name)
    return not differing, "all six experiments byte-identical" if not differing else f"differ: {differing}"


CRITERIA = [
    (1, "block diagonalization oracle", criterion_1, 10),
    (2, "reduction equalities (E3)", criterion_2, 5),
    (3, "constant-Doppler compensation (E1)", criterion_3, 30),
    (4, "non-compensability (E2)", criterion_4, 60),
    (5, "vector-demodulation gain (E4)", criterion_5, 300),
    (6, "diversity analysis", criterion_6, 1),
    (7, "decoder equivalences", criterion_7, 60),
    (8, "diversity slope (E5)", criterion_8, 300),
    (9, "unitary code search", criterion_9, 120),
    (10, "reproducibility", criterion_10, None),
]


def evaluate(fn, limit):
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    in_time = limit is None or elapsed < limit
    return ok and in_time, f"{detail}; {elapsed:.2f} s" + (f" (limit {limit} s)" if limit else "")


@pytest.mark.parametrize("num,title,fn,limit", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(num, title, fn, limit, capsys):
    passed, detail = evaluate(fn, limit)
    with capsys.disabled():
        print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {num}: {title}: {detail}")
    assert passed, detail


if __name__ == "__main__":
    failures = 0
    for num, title, fn, limit in CRITERIA:
        passed, detail = evaluate(fn, limit)
        failures += not passed
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {title}: {detail}", flush=True)
    sys.exit(1 if failures else 0)
