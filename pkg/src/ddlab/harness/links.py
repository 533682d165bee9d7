"""
Per-frame link simulators driven by an :class:`ExperimentSpec`.

SNR convention: symbols have unit average energy and ``snr_db`` sets the
per-sample noise variance ``10**(-snr_db/10)``. The modulator output is
scaled by ``sqrt(N)`` so transmitted samples also have unit mean power, and
the demodulated bins are scaled back, which leaves per-bin noise variance
equal to the per-sample one. Cyclic-prefix energy is not charged to the
SNR. ``inf`` means noiseless.

Stream ids: frame ``f`` draws from ``RngStream(seed, f)`` in the order
channel gains, information bits, noise. The fixed random precoder of the
``unitary`` scheme comes from stream ``PRECODER_STREAM``.
"""

from __future__ import annotations

import math

import numpy as np

from ..channel import DelayDopplerChannel, Tap, apply
from ..numerics import RngStream, constellation, random_unitary
from ..stcode import alamouti, enumerate_codebook, ml_indices, rotation_2d
from ..tfcoding import SsdConfig, ssd_decode, ssd_encode, unitary_decode, unitary_precode
from ..vofdm import VofdmConfig, demodulate, effective_bins, equalize, modulate
from .config import ExperimentSpec

__all__ = ["ModemLink", "BlockFadingLink", "make_link", "noise_variance", "PRECODER_STREAM"]

PRECODER_STREAM = 2**64 - 1


def noise_variance(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


class ModemLink:
    """Bits -> (coding) -> VOFDM/OFDM -> delay-Doppler channel -> equalizer -> bits.

    The receiver knows the channel: it uses the ``M x M`` diagonal blocks of
    the exact grid-to-bins map for the frame's channel (see
    :func:`ddlab.vofdm.effective_bins`). That map is linear in the tap
    gains, so the per-tap blocks are computed once and recombined per frame.
    """

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        mod = spec.modem
        self.const = constellation(mod.constellation)
        self.cfg = VofdmConfig(mod.m, mod.n, mod.cp_len, self.const)
        self.base = spec.channel.base_channel()
        self.per_tap_bins = np.stack([
            effective_bins(self.cfg, DelayDopplerChannel((Tap(t.delay, 1.0, t.doppler),)))
            for t in self.base.taps])
        amps = np.abs(self.base.gains)
        self.rayleigh_amps = amps / np.sqrt(np.sum(amps**2))
        scheme = spec.coding.scheme
        if scheme in ("ssd", "unitary") and mod.m != 1:
            raise ValueError(f"{scheme} coding needs M = 1")
        self.ssd = (SsdConfig(rotation_2d(spec.coding.rotation_angle), mod.n, spec.coding.stride)
                    if scheme == "ssd" else None)
        self.precoder = (random_unitary(RngStream(spec.master_seed, PRECODER_STREAM), mod.n)
                         if scheme == "unitary" else None)

    @property
    def bits_per_frame(self) -> int:
        return self.cfg.symbols_per_frame * self.const.bits_per_symbol

    def gains(self, rng: RngStream) -> np.ndarray:
        if self.spec.channel.fading == "rayleigh":
            return self.rayleigh_amps * rng.complex_normal(len(self.base.taps))
        return self.base.gains

    def run(self, snr_db: float, frame: int) -> dict:
        rng = RngStream(self.spec.master_seed, frame)
        gains = self.gains(rng)
        ch = self.base.with_gains(gains)
        cfg, const = self.cfg, self.const
        bits = rng.bits(self.bits_per_frame)
        x = const.modulate(bits)
        scheme = self.spec.coding.scheme
        if scheme == "ssd":
            x = ssd_encode(x, self.ssd)
        elif scheme == "unitary":
            x = unitary_precode(x, self.precoder)
        scale = math.sqrt(cfg.n)
        tx = scale * modulate(cfg, x.reshape(cfg.n, cfg.m))
        nv = noise_variance(snr_db)
        rx = apply(ch, tx, nv, rng)
        y = demodulate(cfg, rx) / scale
        bins = np.tensordot(gains, self.per_tap_bins, axes=(0, 0))
        if scheme == "ssd":
            idx = ssd_decode(y[:, 0], bins[:, 0, 0], self.ssd, const)
        elif scheme == "unitary":
            idx = unitary_decode(y[:, 0], bins[:, 0, 0], self.precoder, self.spec.coding.unitary_mode,
                                 nv, const)
        else:
            idx = equalize(bins, y, self.spec.modem.equalizer, nv, const).indices.reshape(-1)
        bits_hat = const.indices_to_bits(idx)
        return {"bits": bits.size, "errors": int(np.count_nonzero(bits_hat != bits))}

    __call__ = run

    def decode_cost(self) -> float:
        """Hypotheses evaluated per information symbol by the detector."""
        q = self.const.size
        scheme = self.spec.coding.scheme
        if scheme == "ssd":
            return q**self.ssd.d / self.ssd.d
        if scheme == "unitary" and self.spec.coding.unitary_mode == "ml":
            return q**self.cfg.n / self.cfg.n
        if self.spec.modem.equalizer == "ml":
            return q**self.cfg.m / self.cfg.m
        return float(q)


class BlockFadingLink:
    """Two i.i.d. Rayleigh channel scalars per block, one per code column.

    ``uncoded``: each of the two cells carries its own symbol.
    ``alamouti``: the 2x2 codeword is laid on the time-frequency grid with
    rows on successive OFDM symbols and columns on two subcarriers, so cell
    ``(r, c)`` is received as ``C[r, c] * h_c``; the codeword is scaled by
    ``1/sqrt(2)`` so each time slot carries unit energy, as with two
    transmit antennas sharing the power.
    """

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.const = constellation(spec.modem.constellation)
        self.code = alamouti(self.const)
        self.codewords = enumerate_codebook(self.code).codewords / math.sqrt(2.0)
        self.labels = enumerate_codebook(self.code).labels

    def run(self, snr_db: float, frame: int) -> dict:
        rng = RngStream(self.spec.master_seed, frame)
        b = self.spec.blocks_per_frame
        h = rng.complex_normal((b, 2))
        k = self.const.bits_per_symbol
        bits = rng.bits((b, 2 * k))
        nv = noise_variance(snr_db)
        if self.spec.coding.scheme == "alamouti":
            idx = self.const.bits_to_indices(bits.reshape(-1)).reshape(b, 2)
            c = self.code.codeword(self.const.points[idx]) / math.sqrt(2.0)
            y = c * h[:, None, :]
            if nv:
                y = y + rng.complex_normal((b, 2, 2), nv)
            hd = np.zeros((b, 2, 2), dtype=complex)
            hd[:, 0, 0], hd[:, 1, 1] = h[:, 0], h[:, 1]
            bits_hat = self.labels[ml_indices(self.codewords, hd, y)]
        else:
            x = self.const.modulate(bits.reshape(-1)).reshape(b, 2)
            y = h * x
            if nv:
                y = y + rng.complex_normal((b, 2), nv)
            bits_hat = self.const.indices_to_bits(self.const.nearest(y / h))
        return {"bits": bits.size, "errors": int(np.count_nonzero(bits_hat != bits))}

    __call__ = run


def make_link(spec: ExperimentSpec):
    if spec.channel.model == "blockfading":
        return BlockFadingLink(spec)
    return ModemLink(spec)
