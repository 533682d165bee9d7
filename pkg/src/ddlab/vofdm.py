"""
Vector OFDM modem.

Frame layout (bit-exact)
------------------------
A symbol grid is an ``(N, M)`` array: row ``k`` is the information vector
``x_k`` carried on frequency bin ``k``. The modulator takes an N-point
inverse DFT down each column (component-wise across bins), giving N time
vectors ``v_t``; these are serialized in natural order, sample
``t*M + i`` being component ``i`` of ``v_t``. The last ``cp_len`` samples
are then prepended. The demodulator undoes this, and for a static channel
``h`` with order ``<= cp_len`` bin ``k`` sees ``y_k = H_k x_k`` where
``H_k`` is the pseudo-circulant matrix of ``h`` evaluated at
``z^-1 = exp(-2j*pi*k/N)``.

``M = 1`` is plain CP-OFDM; ``N = 1`` is single-carrier block transmission
whose channel matrix is circulant (SC-FDE).

Power: with unit-energy symbols the modulated samples have mean power
``1/N``; the inverse DFT is not unitary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import DelayDopplerChannel, apply
from .numerics import (QPSK, ComplexityError, Constellation, SingularMatrixError, dft,
                       solve_least_squares)

__all__ = [
    "VofdmConfig",
    "polyphase",
    "pseudo_circulant_at",
    "per_bin_channels",
    "modulate",
    "demodulate",
    "Equalized",
    "equalize",
    "effective_bins",
    "ML_GUARD",
]

ML_GUARD = 4096


@dataclass(frozen=True)
class VofdmConfig:
    m: int
    n: int
    cp_len: int
    constellation: Constellation = QPSK

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("vector size M and bin count N must be >= 1")
        if self.cp_len < 0 or self.cp_len % self.m:
            raise ValueError(f"cp_len={self.cp_len} must be a non-negative multiple of M={self.m}")
        if self.cp_len > self.n * self.m:
            raise ValueError("cyclic prefix longer than the block")

    @property
    def block_len(self) -> int:
        return self.n * self.m

    @property
    def frame_len(self) -> int:
        return self.n * self.m + self.cp_len

    @property
    def symbols_per_frame(self) -> int:
        return self.n * self.m


def polyphase(h, m: int) -> list[np.ndarray]:
    """Split ``h`` into its ``m`` polyphase components ``h[i], h[m+i], ...``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    h = np.asarray(h, dtype=complex)
    return [h[i::m] for i in range(m)]


def pseudo_circulant_at(h, m: int, z_inv: complex) -> np.ndarray:
    """Pseudo-circulant matrix of ``h`` evaluated at ``z^-1 = z_inv``.

    Entry ``(r, c)`` is ``H_{r-c}`` on and below the diagonal and
    ``z_inv * H_{M+r-c}`` above it, with ``H_i = sum_t h_i[t] z_inv^t``.
    """
    comps = polyphase(h, m)
    hz = np.array([np.polyval(c[::-1], z_inv) if c.size else 0.0 for c in comps], dtype=complex)
    r = np.arange(m)[:, None]
    c = np.arange(m)[None, :]
    diff = r - c
    return np.where(diff >= 0, hz[diff % m], z_inv * hz[diff % m])


def per_bin_channels(cfg: VofdmConfig, h) -> np.ndarray:
    """``(N, M, M)`` stack of per-bin channel matrices for a static channel ``h``."""
    h = np.asarray(h, dtype=complex)
    if h.size - 1 > cfg.cp_len:
        raise ValueError(f"channel order {h.size - 1} exceeds cp_len={cfg.cp_len}")
    k = np.arange(cfg.n)
    return np.stack([pseudo_circulant_at(h, cfg.m, np.exp(-2j * np.pi * kk / cfg.n)) for kk in k])


def _check_grid(cfg: VofdmConfig, grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=complex)
    if grid.shape[-2:] != (cfg.n, cfg.m):
        raise ValueError(f"grid shape {grid.shape[-2:]} does not match (N, M) = ({cfg.n}, {cfg.m})")
    return grid


def modulate(cfg: VofdmConfig, grid) -> np.ndarray:
    """Symbol grid ``(..., N, M)`` to a CP-prefixed frame ``(..., N*M + cp_len)``."""
    grid = _check_grid(cfg, grid)
    v = dft(grid, inverse=True, axis=-2)
    s = v.reshape(grid.shape[:-2] + (cfg.block_len,))
    if cfg.cp_len:
        s = np.concatenate([s[..., -cfg.cp_len:], s], axis=-1)
    return s


def demodulate(cfg: VofdmConfig, y) -> np.ndarray:
    """Received frame to the ``(N, M)`` stack of per-bin vectors ``y_k``.

    Samples past the frame (the channel tail) are ignored.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape[-1] < cfg.frame_len:
        raise ValueError(f"received {y.shape[-1]} samples, frame needs {cfg.frame_len}")
    body = y[..., cfg.cp_len:cfg.frame_len]
    v = body.reshape(y.shape[:-1] + (cfg.n, cfg.m))
    return dft(v, axis=-2)


class Equalized(NamedTuple):
    estimates: np.ndarray  # (N, M) soft estimates (ML: the decided points)
    indices: np.ndarray  # (N, M) constellation indices


def _candidates(const: Constellation, m: int) -> np.ndarray:
    idx = np.indices((const.size,) * m).reshape(m, -1).T
    return idx


def equalize(bins, received, mode: str = "zf", noise_var: float = 0.0,
             constellation: Constellation = QPSK) -> Equalized:
    """Per-bin equalization of ``received[k] = bins[k] @ x_k + noise``.

    ``mode`` is ``"zf"``, ``"mmse"`` (ridge ``noise_var``, matching
    unit-energy symbols) or ``"ml"`` (exhaustive over
    ``constellation**M``; ties resolve to the lowest candidate index, the
    candidate index being the symbol indices read as base-Q digits with
    component 0 most significant).
    """
    bins = np.asarray(bins, dtype=complex)
    received = np.asarray(received, dtype=complex)
    n, m = received.shape
    if bins.shape != (n, m, m):
        raise ValueError(f"bins shape {bins.shape} does not match received {received.shape}")
    mode = mode.lower()
    if mode == "ml":
        if constellation.size**m > ML_GUARD:
            raise ComplexityError(
                f"ML over {constellation.size}^{m} hypotheses exceeds the guard of {ML_GUARD}")
        cand_idx = _candidates(constellation, m)  # (C, M)
        cand = constellation.points[cand_idx]  # (C, M)
        pred = np.einsum("kij,cj->kci", bins, cand)  # (N, C, M)
        metric = np.sum(np.abs(received[:, None, :] - pred) ** 2, axis=-1)
        best = np.argmin(metric, axis=1)
        idx = cand_idx[best]
        return Equalized(constellation.points[idx], idx)
    if mode == "zf":
        if m == 1:
            hk = bins[:, 0, 0]
            if np.any(hk == 0):
                raise SingularMatrixError("zero channel bin in ZF mode")
            est = (received[:, 0] / hk)[:, None]
        else:
            est = np.stack([solve_least_squares(bins[k], received[k]) for k in range(n)])
    elif mode == "mmse":
        if noise_var < 0:
            raise ValueError("noise_var must be non-negative")
        if m == 1:
            hk = bins[:, 0, 0]
            est = (np.conj(hk) * received[:, 0] / (np.abs(hk) ** 2 + noise_var))[:, None]
        elif noise_var == 0:
            est = np.stack([solve_least_squares(bins[k], received[k]) for k in range(n)])
        else:
            bh = np.conj(np.swapaxes(bins, 1, 2))
            gram = bh @ bins + noise_var * np.eye(m)
            est = np.linalg.solve(gram, (bh @ received[..., None]))[..., 0]
    else:
        raise ValueError(f"unknown equalizer mode {mode!r}")
    idx = constellation.nearest(est)
    return Equalized(est, idx)


def effective_bins(cfg: VofdmConfig, ch: DelayDopplerChannel) -> np.ndarray:
    """Per-bin matrices seen by the demodulator on a possibly time-varying channel.

    The full map from grid to demodulated vectors is built by sending every
    unit grid through :func:`modulate`, :func:`apply` and
    :func:`demodulate`; its ``M x M`` diagonal blocks are returned. For a
    static channel within the CP these equal :func:`per_bin_channels`; with
    Doppler the discarded off-diagonal blocks are the inter-bin
    interference.
    """
    size = cfg.block_len
    units = np.eye(size, dtype=complex).reshape(size, cfg.n, cfg.m)
    rx = demodulate(cfg, apply(ch, modulate(cfg, units)))  # (size, N, M)
    full = rx.reshape(cfg.n, cfg.m, cfg.n, cfg.m)  # input (k', j) -> output (k, i)
    k = np.arange(cfg.n)
    return np.transpose(full[k, :, k, :], (0, 2, 1))
