"""
Time-frequency coding on a single-antenna OFDM resource grid.

The grid has shape ``(S, N)``: S OFDM symbols by N subcarriers. Each grid
cell is one channel use ``y = H[s, k] * x + w``, so a t x mt codeword
placed on the grid is received as ``Y[r, c] = C[r, c] * h_rc``. When every
row of a column sees the same scalar ``h_c`` this is the space-time model
``Y = C @ diag(h)`` and the ST decoders apply unchanged.

Also here: signal space diversity along frequency (rotate blocks of d
symbols, spread the coordinates across far-apart subcarriers) and the
random-unitary precoding baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import QPSK, ComplexityError, Constellation, solve_least_squares

__all__ = [
    "TfMapping",
    "TfGrid",
    "across_symbols",
    "across_subcarriers",
    "map_st_to_tf",
    "extract_st",
    "SsdConfig",
    "ssd_encode",
    "ssd_decode",
    "unitary_precode",
    "unitary_decode",
    "SSD_GUARD",
    "UNITARY_ML_GUARD",
]

SSD_GUARD = 4096
UNITARY_ML_GUARD = 65536
UNITARY_ML_MAX_N = 12


@dataclass(frozen=True)
class TfMapping:
    """Placement of codeword entry ``(r, c)`` at grid cell ``placement[r, c] = (symbol, subcarrier)``."""

    placement: np.ndarray  # (t, mt, 2) int
    mode: str

    def __post_init__(self):
        p = np.asarray(self.placement, dtype=int)
        object.__setattr__(self, "placement", p)
        if p.ndim != 3 or p.shape[-1] != 2:
            raise ValueError("placement must be a (t, mt, 2) array")
        if self.mode not in ("across-symbols", "across-subcarriers"):
            raise ValueError(f"unknown mapping mode {self.mode!r}")
        cells = {tuple(x) for x in p.reshape(-1, 2)}
        if len(cells) != p.shape[0] * p.shape[1]:
            raise ValueError("placement is not injective")

    @property
    def shape(self) -> tuple[int, int]:
        return self.placement.shape[:2]


def across_symbols(t: int, mt: int, subcarriers: Sequence[int], first_symbol: int = 0) -> TfMapping:
    """Time row ``r`` -> OFDM symbol ``first_symbol + r``; space column ``c`` -> ``subcarriers[c]``."""
    if len(subcarriers) != mt:
        raise ValueError("need one subcarrier per code column")
    p = np.empty((t, mt, 2), dtype=int)
    p[..., 0] = first_symbol + np.arange(t)[:, None]
    p[..., 1] = np.asarray(subcarriers)[None, :]
    return TfMapping(p, "across-symbols")


def across_subcarriers(t: int, mt: int, start: int, stride: int, symbol: int = 0) -> TfMapping:
    """All entries in one OFDM symbol: ``(r, c)`` -> subcarrier ``start + c*stride + r``.

    Rows sit on adjacent subcarriers (assumed to share a channel value),
    columns are ``stride`` apart for frequency diversity.
    """
    if stride < t:
        raise ValueError("stride must be at least the code length t")
    p = np.empty((t, mt, 2), dtype=int)
    p[..., 0] = symbol
    p[..., 1] = start + np.arange(mt)[None, :] * stride + np.arange(t)[:, None]
    return TfMapping(p, "across-subcarriers")


@dataclass
class TfGrid:
    values: np.ndarray  # (S, N) complex
    occupied: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.occupied is None:
            self.occupied = np.zeros(self.values.shape, dtype=bool)

    @classmethod
    def empty(cls, symbols: int, subcarriers: int) -> "TfGrid":
        return cls(np.zeros((symbols, subcarriers), dtype=complex))


def _check_cells(grid: TfGrid, mapping: TfMapping) -> tuple[np.ndarray, np.ndarray]:
    s, k = mapping.placement[..., 0], mapping.placement[..., 1]
    S, N = grid.values.shape
    if s.min() < 0 or k.min() < 0 or s.max() >= S or k.max() >= N:
        raise ValueError("placement falls outside the grid")
    return s, k


def map_st_to_tf(codeword, grid: TfGrid, mapping: TfMapping) -> TfGrid:
    """Write ``codeword`` onto a copy of ``grid``; cells must be unoccupied."""
    codeword = np.asarray(codeword, dtype=complex)
    if codeword.shape != mapping.shape:
        raise ValueError(f"codeword shape {codeword.shape} does not match mapping {mapping.shape}")
    s, k = _check_cells(grid, mapping)
    if np.any(grid.occupied[s, k]):
        raise ValueError("placement collides with occupied cells")
    out = TfGrid(grid.values.copy(), grid.occupied.copy())
    out.values[s, k] = codeword
    out.occupied[s, k] = True
    return out


def extract_st(values, mapping: TfMapping) -> np.ndarray:
    """Read the ``(t, mt)`` block back out of a grid (or a received grid)."""
    values = np.asarray(values)
    s, k = mapping.placement[..., 0], mapping.placement[..., 1]
    return values[s, k]


# ---------------------------------------------------------------------------
# Signal space diversity along frequency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SsdConfig:
    rotation: np.ndarray
    n: int  # subcarriers per OFDM symbol
    stride: int | None = None  # defaults to n // d

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=complex)
        object.__setattr__(self, "rotation", r)
        d = r.shape[0]
        if r.shape != (d, d) or np.max(np.abs(r.conj().T @ r - np.eye(d))) > 1e-10:
            raise ValueError("rotation must be unitary")
        if self.stride is None:
            object.__setattr__(self, "stride", self.n // d)
        if self.stride < 1 or self.stride * d > self.n:
            raise ValueError(f"stride {self.stride} with d={d} does not fit {self.n} subcarriers")

    @property
    def d(self) -> int:
        return self.rotation.shape[0]

    def positions(self, length: int) -> np.ndarray:
        """Output position of block ``b`` coordinate ``i``, shape ``(blocks, d)``.

        Blocks are taken ``stride`` at a time; inside such a chunk,
        coordinate ``i`` of the ``r``-th block goes to ``chunk*stride*d + i*stride + r``.
        """
        d, st = self.d, self.stride
        if length % d:
            raise ValueError(f"symbol count {length} is not a multiple of d={d}")
        blocks = length // d
        if blocks % st:
            raise ValueError(f"{blocks} blocks do not fill whole chunks of stride {st}")
        b = np.arange(blocks)
        chunk, r = b // st, b % st
        return (chunk * st * d + r)[:, None] + np.arange(d)[None, :] * st


def ssd_encode(symbols, cfg: SsdConfig) -> np.ndarray:
    """Rotate each d-block and interleave its coordinates across subcarriers."""
    x = np.asarray(symbols, dtype=complex)
    pos = cfg.positions(x.size)
    z = x.reshape(-1, cfg.d) @ cfg.rotation.T
    out = np.empty_like(x)
    out[pos] = z
    return out


def ssd_decode(received, scalars, cfg: SsdConfig,
               constellation: Constellation = QPSK) -> np.ndarray:
    """Per-block exhaustive ML; returns constellation indices in symbol order."""
    y = np.asarray(received, dtype=complex)
    h = np.asarray(scalars, dtype=complex)
    q, d = constellation.size, cfg.d
    if q**d > SSD_GUARD:
        raise ComplexityError(f"SSD ML over {q}^{d} hypotheses exceeds guard {SSD_GUARD}")
    pos = cfg.positions(y.size)
    cand_idx = np.indices((q,) * d).reshape(d, -1).T  # (C, d)
    cand = constellation.points[cand_idx] @ cfg.rotation.T  # (C, d) rotated
    yb, hb = y[pos], h[pos]  # (B, d)
    metric = np.sum(np.abs(yb[:, None, :] - hb[:, None, :] * cand[None]) ** 2, axis=-1)
    return cand_idx[np.argmin(metric, axis=1)].reshape(-1)


# ---------------------------------------------------------------------------
# Random unitary precoding
# ---------------------------------------------------------------------------


def _check_unitary(u: np.ndarray) -> None:
    if u.ndim != 2 or u.shape[0] != u.shape[1] or \
            np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-10:
        raise ValueError("precoder must be unitary")


def unitary_precode(x, u) -> np.ndarray:
    """``u @ x`` for an N-vector of frequency-domain symbols."""
    u = np.asarray(u, dtype=complex)
    _check_unitary(u)
    return u @ np.asarray(x, dtype=complex)


def unitary_decode(received, scalars, u, mode: str = "mmse", noise_var: float = 0.0,
                   constellation: Constellation = QPSK) -> np.ndarray:
    """Detect precoded symbols through ``diag(scalars) @ u``; returns constellation indices.

    ``mode="mmse"`` uses ridge ``noise_var`` (``0`` gives ZF); ``mode="ml"``
    is exhaustive and only allowed for ``N <= 12`` and at most 65536
    hypotheses.
    """
    u = np.asarray(u, dtype=complex)
    _check_unitary(u)
    a = np.asarray(scalars, dtype=complex)[:, None] * u
    y = np.asarray(received, dtype=complex)
    n = u.shape[0]
    if mode == "mmse":
        return constellation.nearest(solve_least_squares(a, y, ridge=noise_var))
    if mode == "ml":
        hyps = constellation.size**n
        if n > UNITARY_ML_MAX_N or hyps > UNITARY_ML_GUARD:
            raise ComplexityError(f"ML over {hyps} hypotheses (N={n}) exceeds the guard")
        cand_idx = np.indices((constellation.size,) * n).reshape(n, -1).T
        metric = np.sum(np.abs(y[None] - constellation.points[cand_idx] @ a.T) ** 2, axis=1)
        return cand_idx[int(np.argmin(metric))]
    raise ValueError(f"unknown mode {mode!r}")
