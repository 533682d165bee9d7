"""
Discrete-time delay-Doppler channel.

A channel is a list of taps ``(delay, gain, doppler)``; tap ``l`` contributes
``gain_l * exp(-1j * doppler_l * n) * s[n - delay_l]`` to the received
sample at time ``n``. Time ``n = 0`` is the first transmitted sample of the
frame, cyclic prefix included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import RngStream, awgn, dft_matrix

__all__ = [
    "Tap",
    "Constant",
    "Linear",
    "PerTap",
    "DelayDopplerChannel",
    "apply",
    "derotate",
    "effective_matrix",
    "ici_energy",
    "noncompensability_residual",
]


@dataclass(frozen=True)
class Tap:
    delay: int
    gain: complex
    doppler: float = 0.0

    def __post_init__(self):
        if int(self.delay) != self.delay or self.delay < 0:
            raise ValueError(f"tap delay must be a non-negative integer, got {self.delay}")
        if not np.isfinite(complex(self.gain)):
            raise ValueError("tap gain must be finite")
        if not np.isfinite(self.doppler):
            raise ValueError("tap doppler must be finite")


# Doppler profiles: a rule turning the delays of a tap set into per-tap
# Doppler frequencies (rad/sample).


@dataclass(frozen=True)
class Constant:
    """Every path shares one Doppler shift (the compensable case)."""

    omega0: float

    def dopplers(self, delays) -> np.ndarray:
        return np.full(len(delays), float(self.omega0))


@dataclass(frozen=True)
class Linear:
    """Doppler proportional to delay: ``omega_l = slope * delay_l``."""

    slope: float

    def dopplers(self, delays) -> np.ndarray:
        return self.slope * np.asarray(delays, dtype=float)


@dataclass(frozen=True)
class PerTap:
    values: tuple

    def dopplers(self, delays) -> np.ndarray:
        if len(self.values) != len(delays):
            raise ValueError("PerTap profile needs one Doppler value per tap")
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class DelayDopplerChannel:
    taps: tuple[Tap, ...]

    def __post_init__(self):
        taps = tuple(self.taps)
        object.__setattr__(self, "taps", taps)
        if not taps:
            raise ValueError("a channel needs at least one tap")
        delays = [t.delay for t in taps]
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("tap delays must be strictly increasing")

    @classmethod
    def from_profile(cls, delays: Sequence[int], gains: Sequence[complex], profile=None):
        """Build a channel from delays and gains plus a Doppler profile (default: static)."""
        if len(delays) != len(gains):
            raise ValueError("delays and gains differ in length")
        dop = np.zeros(len(delays)) if profile is None else profile.dopplers(delays)
        return cls(tuple(Tap(int(d), complex(g), float(w)) for d, g, w in zip(delays, gains, dop)))

    @property
    def order(self) -> int:
        """Channel order L, the largest delay."""
        return self.taps[-1].delay

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay for t in self.taps], dtype=int)

    @property
    def gains(self) -> np.ndarray:
        return np.array([t.gain for t in self.taps], dtype=complex)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler for t in self.taps], dtype=float)

    @property
    def is_static(self) -> bool:
        return not np.any(self.dopplers)

    def impulse_response(self) -> np.ndarray:
        """Gain sequence ``h[0..L]`` with Doppler ignored."""
        h = np.zeros(self.order + 1, dtype=complex)
        h[self.delays] = self.gains
        return h

    def with_gains(self, gains) -> "DelayDopplerChannel":
        return DelayDopplerChannel(tuple(Tap(t.delay, complex(g), t.doppler)
                                         for t, g in zip(self.taps, gains)))

    def with_dopplers(self, dopplers) -> "DelayDopplerChannel":
        return DelayDopplerChannel(tuple(Tap(t.delay, t.gain, float(w))
                                         for t, w in zip(self.taps, dopplers)))


def apply(ch: DelayDopplerChannel, s, noise_variance: float = 0.0,
          rng: RngStream | None = None) -> np.ndarray:
    """Pass ``s`` through the channel; output has ``len(s) + L`` samples.

    Works along the last axis, so a stack of signals can be sent at once
    (noise is only supported for a single 1-D signal).
    """
    s = np.asarray(s, dtype=complex)
    if s.shape[-1] < 1:
        raise ValueError("cannot transmit an empty signal")
    n_out = s.shape[-1] + ch.order
    n = np.arange(n_out)
    y = np.zeros(s.shape[:-1] + (n_out,), dtype=complex)
    for tap in ch.taps:
        d = tap.delay
        rot = tap.gain * np.exp(-1j * tap.doppler * n[d:d + s.shape[-1]])
        y[..., d:d + s.shape[-1]] += rot * s
    if noise_variance:
        if rng is None:
            raise ValueError("noise requires an RngStream")
        if y.ndim != 1:
            raise ValueError("noise is only added to a single 1-D signal")
        y = y + awgn(rng, n_out, noise_variance)
    return y


def derotate(y, omega0: float) -> np.ndarray:
    """Multiply sample ``n`` by ``exp(+1j * omega0 * n)``, undoing a common Doppler shift."""
    y = np.asarray(y, dtype=complex)
    return y * np.exp(1j * omega0 * np.arange(y.shape[-1]))


def effective_matrix(ch: DelayDopplerChannel, block_len: int, cyclic: bool) -> np.ndarray:
    """Matrix ``G`` with ``y = G s`` for one block of ``block_len`` samples.

    Entry ``(n, m)`` is ``gain_l * exp(-1j * doppler_l * n)`` for the tap
    whose delay equals ``n - m`` (modulo ``block_len`` when cyclic). The
    non-cyclic matrix is the banded lower-triangular convolution truncated
    to the block; the cyclic one models a CP-stripped block.
    """
    if cyclic and block_len <= ch.order:
        raise ValueError(f"cyclic block length {block_len} must exceed channel order {ch.order}")
    if block_len < 1:
        raise ValueError("block length must be positive")
    n = np.arange(block_len)
    g = np.zeros((block_len, block_len), dtype=complex)
    for tap in ch.taps:
        rows = n[tap.delay:] if not cyclic else n
        cols = rows - tap.delay
        if cyclic:
            cols = cols % block_len
        g[rows, cols] += tap.gain * np.exp(-1j * tap.doppler * rows)
    return g


def _check_unitary(u: np.ndarray, what: str, tol: float = 1e-8) -> None:
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"{what} must be square")
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > tol:
        raise ValueError(f"{what} is not unitary")


def _offdiag_fraction(t: np.ndarray, total: float) -> np.ndarray:
    # summed directly: total minus diagonal would cancel near zero
    e = np.abs(t) ** 2
    k = np.arange(t.shape[-1])
    e[..., k, k] = 0.0
    return np.sum(e, axis=(-2, -1)) / total


def ici_energy(g, basis) -> float:
    """Fraction of ``||g||_F^2`` lying off the diagonal of ``basis^H g basis``."""
    g = np.asarray(g, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("g must be square")
    _check_unitary(basis, "basis")
    if basis.shape != g.shape:
        raise ValueError("basis and g differ in size")
    total = np.sum(np.abs(g) ** 2)
    if total == 0:
        return 0.0
    return float(_offdiag_fraction(basis.conj().T @ g @ basis, total))


def noncompensability_residual(ch: DelayDopplerChannel, block_len: int,
                               precoders: Sequence[np.ndarray],
                               derotators: Sequence[float]) -> float:
    """Best residual ICI over transmit precoders and receive derotations.

    Returns the minimum, over every precoder ``P``, derotation ``w`` and
    demodulation basis (identity or unitary DFT), of
    ``ici_energy(diag(exp(1j*w*n)) @ G @ P, basis)`` with ``G`` the cyclic
    effective matrix. Derotation rescales rows by unit-modulus factors, so
    the identity-basis term does not depend on ``w``; the DFT-basis term is
    evaluated for all ``w`` at once with FFTs.
    """
    if len(precoders) == 0 or len(derotators) == 0:
        raise ValueError("need at least one precoder and one derotator")
    n = np.arange(block_len)
    f = dft_matrix(block_len)
    for p in precoders:
        _check_unitary(np.asarray(p), "precoder")
    g = effective_matrix(ch, block_len, cyclic=True)
    rot = np.exp(1j * np.outer(np.asarray(derotators, dtype=float), n))  # (W, N)
    best = np.inf
    for p in precoders:
        gp = g @ np.asarray(p, dtype=complex)
        total = float(np.sum(np.abs(gp) ** 2))
        if total == 0:
            return 0.0
        best = min(best, float(_offdiag_fraction(gp, total)))
        a = gp @ f
        # F^H (D a) for every derotation D, as an inverse FFT down the columns
        t = np.fft.ifft(rot[:, :, None] * a[None], axis=1) * np.sqrt(block_len)
        best = min(best, float(np.min(_offdiag_fraction(t, total))))
    return best
