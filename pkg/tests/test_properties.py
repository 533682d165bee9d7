import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ddlab.channel import Constant, DelayDopplerChannel, PerTap, apply, derotate, effective_matrix, ici_energy
from ddlab.numerics import QAM16, QPSK, RngStream, dft, random_unitary
from ddlab.stcode import ExplicitCodebook, alamouti, diversity_report, enumerate_codebook
from ddlab.tfcoding import SsdConfig, ssd_decode, unitary_precode
from ddlab.vofdm import VofdmConfig, demodulate, equalize, modulate, per_bin_channels

seeds = st.integers(0, 2**32 - 1)
FAST = settings(max_examples=40, deadline=None)


def crandn(seed, *shape):
    g = np.random.default_rng(seed)
    return g.standard_normal(shape) + 1j * g.standard_normal(shape)


def random_channel(seed, max_delay=6, doppler=0.2):
    g = np.random.default_rng(seed)
    k = int(g.integers(1, max_delay + 2))
    delays = np.sort(g.choice(max_delay + 1, size=min(k, max_delay + 1), replace=False))
    gains = g.standard_normal(delays.size) + 1j * g.standard_normal(delays.size)
    dops = g.uniform(-doppler, doppler, delays.size)
    return DelayDopplerChannel.from_profile(delays, gains, PerTap(dops))


@FAST
@given(seeds, st.sampled_from([2, 4, 8, 64]))
def test_parseval(seed, n):
    x = crandn(seed, n)
    e = np.sum(np.abs(x) ** 2)
    assert abs(e - np.sum(np.abs(dft(x)) ** 2) / n) <= 1e-10 * e


@FAST
@given(seeds, st.integers(1, 40))
def test_dft_roundtrips(seed, n):
    x = crandn(seed, n)
    scale = max(1.0, np.max(np.abs(x)))
    assert np.max(np.abs(dft(dft(x), inverse=True) - x)) <= 1e-12 * scale
    assert np.max(np.abs(dft(dft(x, inverse=True)) - x)) <= 1e-12 * scale


@FAST
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1),
       st.lists(st.integers(0, 9), min_size=1, max_size=8))
def test_rng_consumption_pattern_irrelevant(seed, stream, chunks):
    total = sum(chunks)
    whole = RngStream(seed, stream).raw(total)
    s = RngStream(seed, stream)
    parts = [s.raw(c) for c in chunks]
    assert np.array_equal(np.concatenate(parts), whole)
    assert s.counter == total


@FAST
@given(seeds, st.integers(1, 12))
def test_random_unitary_is_unitary(seed, n):
    u = random_unitary(RngStream(seed, 0), n)
    assert np.max(np.abs(u.conj().T @ u - np.eye(n))) <= 1e-12


@FAST
@given(seeds, st.integers(1, 30))
def test_apply_linear(seed, n):
    ch = random_channel(seed)
    s1, s2 = crandn(seed + 1, n), crandn(seed + 2, n)
    a, b = 0.3 - 1.2j, 2.0 + 0.1j
    lhs = apply(ch, a * s1 + b * s2)
    rhs = a * apply(ch, s1) + b * apply(ch, s2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


@FAST
@given(seeds, st.floats(-3.0, 3.0), st.integers(1, 50))
def test_constant_doppler_derotates_to_convolution(seed, omega0, n):
    ch = random_channel(seed)
    ch = ch.with_dopplers(Constant(omega0).dopplers(ch.delays))
    s = crandn(seed + 7, n)
    conv = np.convolve(ch.impulse_response(), s)
    out = derotate(apply(ch, s), omega0)
    assert np.max(np.abs(out - conv)) <= 1e-12 * max(1.0, np.max(np.abs(conv)))


@FAST
@given(seeds, st.integers(1, 24))
def test_noncyclic_matrix_matches_apply(seed, n):
    ch = random_channel(seed)
    s = crandn(seed + 3, n)
    y = effective_matrix(ch, n, cyclic=False) @ s
    assert np.max(np.abs(y - apply(ch, s)[:n])) <= 1e-12 * max(1.0, np.max(np.abs(y)))


@FAST
@given(seeds, st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False,
                                 allow_infinity=False))
def test_ici_scale_invariant(seed, alpha):
    g = crandn(seed, 6, 6)
    u = random_unitary(RngStream(seed, 1), 6)
    assert np.isclose(ici_energy(alpha * g, u), ici_energy(g, u), rtol=1e-9, atol=1e-15)


@FAST
@given(seeds, st.sampled_from([1, 2, 3, 4]), st.sampled_from([1, 2, 4, 8, 16]), st.integers(0, 3))
def test_modem_block_diagonalizes(seed, m, n, cp_mult):
    cfg = VofdmConfig(m, n, min(cp_mult * m, n * m))
    g = np.random.default_rng(seed)
    h = crandn(seed, int(g.integers(1, cfg.cp_len + 2)))
    grid = crandn(seed + 1, n, m)
    ch = DelayDopplerChannel.from_profile(range(h.size), h)
    rx = demodulate(cfg, apply(ch, modulate(cfg, grid)))
    ref = np.einsum("kij,kj->ki", per_bin_channels(cfg, h), grid)
    assert np.max(np.abs(rx - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


@FAST
@given(seeds, st.sampled_from([1, 2, 4]), st.sampled_from([2, 4, 8]))
def test_zf_equals_ml_noiseless(seed, m, n):
    g = np.random.default_rng(seed)
    bins = crandn(seed, n, m, m)
    idx = g.integers(0, 4, (n, m))
    y = np.einsum("kij,kj->ki", bins, QPSK.points[idx])
    zf = equalize(bins, y, "zf", constellation=QPSK).indices
    ml = equalize(bins, y, "ml", constellation=QPSK).indices
    assert np.array_equal(zf, ml) and np.array_equal(zf, idx)


@FAST
@given(seeds)
def test_det_invariance_under_unitaries(seed):
    cb = enumerate_codebook(alamouti(QPSK))
    u = random_unitary(RngStream(seed, 0), 2)
    v = random_unitary(RngStream(seed, 1), 2)
    a = diversity_report(cb).min_abs_det
    b = diversity_report(ExplicitCodebook(u @ cb.codewords @ v, cb.labels)).min_abs_det
    assert abs(a - b) <= 1e-10


@FAST
@given(seeds, st.integers(1, 64))
def test_unitary_precoding_preserves_power(seed, n):
    x = crandn(seed, n)
    u = random_unitary(RngStream(seed, 2), n)
    assert np.isclose(np.linalg.norm(unitary_precode(x, u)), np.linalg.norm(x), rtol=1e-12)


@FAST
@given(seeds, st.sampled_from([4, 8, 16]))
def test_identity_ssd_is_plain_ofdm(seed, n):
    g = np.random.default_rng(seed)
    hk = crandn(seed, n)
    y = hk * QAM16.points[g.integers(0, 16, n)] + 0.3 * crandn(seed + 1, n)
    cfg = SsdConfig(np.eye(2), n)
    # default stride still interleaves; compare in symbol order
    order = cfg.positions(n).ravel()
    assert np.array_equal(ssd_decode(y, hk, cfg, QAM16), QAM16.nearest(y / hk)[order])


@FAST
@given(st.lists(st.integers(0, 1), min_size=4, max_size=64).filter(lambda b: len(b) % 4 == 0))
def test_constellation_bit_roundtrip(bits):
    bits = np.array(bits, dtype=np.uint8)
    for c in (QPSK, QAM16):
        assert np.array_equal(c.indices_to_bits(c.nearest(c.modulate(bits))), bits)
