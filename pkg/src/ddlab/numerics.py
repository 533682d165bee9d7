"""
Numerical foundation: transforms, small dense linear algebra, counter-based
random streams and unit-energy constellations.

Conventions
-----------
* ``dft`` is unscaled in the forward direction and carries ``1/N`` on the
  inverse, so OFDM bins come out with the channel frequency response as
  their gain.
* Every random draw is addressed by ``(master_seed, stream_id, word index)``
  through the Philox-4x64 counter-based generator. Gaussian samples use the
  Box-Muller transform on two consecutive 53-bit uniforms, so a stream's
  output does not depend on how draws are batched or on thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SingularMatrixError",
    "ComplexityError",
    "dft",
    "dft_matrix",
    "circulant",
    "determinant",
    "solve_least_squares",
    "RngStream",
    "random_unitary",
    "awgn",
    "Constellation",
    "constellation",
    "BPSK",
    "QPSK",
    "QAM16",
]

MAX_DET_DIM = 64
_MASK64 = (1 << 64) - 1


class SingularMatrixError(ValueError):
    """Raised when a linear system has no unique solution."""


class ComplexityError(ValueError):
    """Raised when an exhaustive search would exceed its hypothesis guard."""


def _as_signal(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def dft(x, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """N-point DFT along ``axis``.

    Forward: ``X[k] = sum_n x[n] exp(-2j*pi*k*n/N)``.
    Inverse: ``x[n] = (1/N) sum_k X[k] exp(+2j*pi*k*n/N)``.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("dft of an empty signal")
    return np.fft.ifft(x, axis=axis) if inverse else np.fft.fft(x, axis=axis)


def dft_matrix(n: int, unitary: bool = True) -> np.ndarray:
    """Matrix ``F`` with ``F[k, m] = exp(-2j*pi*k*m/n)`` (scaled by 1/sqrt(n) if unitary)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    f = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return f / np.sqrt(n) if unitary else f


def circulant(first_column) -> np.ndarray:
    """Circulant matrix with entry ``(r, c) = first_column[(r - c) mod M]``."""
    col = _as_signal(first_column)
    m = col.size
    if m == 0:
        raise ValueError("circulant of an empty column")
    idx = (np.arange(m)[:, None] - np.arange(m)[None, :]) % m
    return col[idx]


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def determinant(m) -> complex:
    """Determinant of a square matrix of dimension at most 64.

    Triangular inputs short-circuit to the product of the diagonal, which
    is exact up to the rounding of that product. Everything else goes
    through LU with partial pivoting.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"determinant needs a square matrix, got shape {m.shape}")
    if m.shape[0] > MAX_DET_DIM:
        raise ValueError(f"determinant dimension capped at {MAX_DET_DIM}")
    if not np.any(np.tril(m, -1)) or not np.any(np.triu(m, 1)):
        return complex(np.prod(np.diag(m)))
    return complex(np.linalg.det(m))


def solve_least_squares(a, b, ridge: float = 0.0) -> np.ndarray:
    """Minimize ``||a x - b||^2 + ridge ||x||^2``.

    With ``ridge == 0`` the matrix must have full column rank, otherwise
    :class:`SingularMatrixError` is raised instead of returning one of
    infinitely many minimizers.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2:
        raise ValueError("a must be a matrix")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"rows(a)={a.shape[0]} does not match len(b)={b.shape[0]}")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    n = a.shape[1]
    if ridge == 0:
        if np.linalg.matrix_rank(a) < n:
            raise SingularMatrixError("rank-deficient system with zero ridge")
        x, *_ = np.linalg.lstsq(a, b, rcond=None)
        return x
    ah = a.conj().T
    return np.linalg.solve(ah @ a + ridge * np.eye(n), ah @ b)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


@dataclass
class RngStream:
    """Counter-addressed random stream.

    Word ``i`` of the stream is a pure function of
    ``(master_seed, stream_id, i)``; ``counter`` is the index of the next
    word to be consumed. Streams are cheap, so each worker derives its own
    rather than sharing one.
    """

    master_seed: int
    stream_id: int
    counter: int = 0
    _key: int = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("master_seed", "stream_id", "counter"):
            v = getattr(self, name)
            if not 0 <= int(v) <= _MASK64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")
        self._key = (int(self.stream_id) << 64) | int(self.master_seed)

    def words_at(self, start: int, n: int) -> np.ndarray:
        """Raw 64-bit words ``start .. start+n-1`` without touching ``counter``."""
        block, offset = divmod(int(start), 4)
        gen = np.random.Philox(key=self._key, counter=block)
        return gen.random_raw(offset + n)[offset:]

    def raw(self, n: int) -> np.ndarray:
        out = self.words_at(self.counter, n)
        self.counter += n
        return out

    def uniform(self, shape) -> np.ndarray:
        """Uniforms on [0, 1) with 53 bits of resolution."""
        size = int(np.prod(shape))
        w = self.raw(size)
        return ((w >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(shape)

    def bits(self, shape) -> np.ndarray:
        size = int(np.prod(shape))
        return (self.raw(size) >> np.uint64(63)).astype(np.uint8).reshape(shape)

    def complex_normal(self, shape, variance: float = 1.0) -> np.ndarray:
        """Circularly-symmetric Gaussian samples, two words per sample.

        ``r = sqrt(-variance * ln(1 - u1))`` and phase ``2*pi*u2``, so that
        ``|w|^2`` is exponential with mean ``variance``.
        """
        shape = (int(shape),) if np.isscalar(shape) else tuple(shape)
        size = int(np.prod(shape))
        u = self.uniform((size, 2))
        r = np.sqrt(-variance * np.log1p(-u[:, 0]))
        return (r * np.exp(2j * np.pi * u[:, 1])).reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Real standard normals (Box-Muller cosine branch)."""
        return np.sqrt(2.0) * self.complex_normal(shape).real

    def integers(self, high: int, shape) -> np.ndarray:
        """Uniform integers in ``[0, high)`` by scaling a 53-bit uniform."""
        return np.floor(self.uniform(shape) * high).astype(np.int64)


def random_unitary(rng: RngStream, n: int) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary.

    QR of an i.i.d. complex Gaussian matrix with the phases of R's diagonal
    absorbed into Q, which removes the QR sign ambiguity.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.complex_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))[None, :]


def awgn(rng: RngStream, length: int, variance: float) -> np.ndarray:
    """Complex white Gaussian noise with ``E|w|^2 = variance``."""
    if variance < 0:
        raise ValueError("noise variance must be non-negative")
    if length < 0:
        raise ValueError("length must be non-negative")
    if variance == 0:
        return np.zeros(length, dtype=complex)
    return rng.complex_normal((length,), variance)


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Constellation:
    """Labeled point set; ``points[i]`` carries the label ``i`` written MSB first."""

    name: str
    points: np.ndarray
    bits_per_symbol: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        object.__setattr__(self, "points", pts)
        if pts.size != 2**self.bits_per_symbol:
            raise ValueError("constellation size must be 2**bits_per_symbol")
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > 1e-12:
            raise ValueError("constellation must have unit average energy")
        if np.unique(np.round(pts, 12)).size != pts.size:
            raise ValueError("constellation points must be distinct")

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def labels(self) -> np.ndarray:
        """``(size, bits_per_symbol)`` array of label bits."""
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((np.arange(self.size)[:, None] >> shifts) & 1).astype(np.uint8)

    def bits_to_indices(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64).reshape(-1, self.bits_per_symbol)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return bits @ weights

    def indices_to_bits(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return self.labels[idx].reshape(*idx.shape[:-1], -1)

    def modulate(self, bits) -> np.ndarray:
        return self.points[self.bits_to_indices(bits)]

    def nearest(self, x) -> np.ndarray:
        """Index of the nearest point, elementwise; ties go to the lower index."""
        x = np.asarray(x, dtype=complex)
        d = np.abs(x[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    @property
    def is_separable(self) -> bool:
        """True when the point set is the Cartesian product of its I and Q levels."""
        re = np.unique(np.round(self.points.real, 12))
        im = np.unique(np.round(self.points.imag, 12))
        return re.size * im.size == self.size

    @property
    def axis_levels(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct in-phase and quadrature amplitudes."""
        return (np.unique(np.round(self.points.real, 15)),
                np.unique(np.round(self.points.imag, 15)))


def _gray_pam(bits_per_axis: int) -> np.ndarray:
    # level for each label on one axis, Gray-coded, ascending amplitude order
    n = 2**bits_per_axis
    levels = np.empty(n)
    for pos in range(n):
        gray = pos ^ (pos >> 1)
        levels[gray] = 2 * pos - (n - 1)
    return levels


def _build(name: str) -> Constellation:
    if name == "bpsk":
        # bit 0 -> +1, bit 1 -> -1
        return Constellation("bpsk", np.array([1.0, -1.0]), 1)
    if name == "qpsk":
        # label b0 b1 -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)
        idx = np.arange(4)
        pts = ((1 - 2 * (idx >> 1)) + 1j * (1 - 2 * (idx & 1))) / np.sqrt(2)
        return Constellation("qpsk", pts, 2)
    if name == "16qam":
        # label b0 b1 b2 b3: b0 b1 Gray-select I in {-3,-1,1,3}, b2 b3 select Q
        pam = _gray_pam(2)
        idx = np.arange(16)
        pts = (pam[idx >> 2] + 1j * pam[idx & 3]) / np.sqrt(10)
        return Constellation("16qam", pts, 4)
    raise ValueError(f"unknown constellation {name!r}")


BPSK = _build("bpsk")
QPSK = _build("qpsk")
QAM16 = _build("16qam")

_BY_NAME = {"bpsk": BPSK, "qpsk": QPSK, "4qam": QPSK, "16qam": QAM16, "qam16": QAM16}


def constellation(name: str) -> Constellation:
    """Look up a shipped constellation by (case-insensitive) name."""
    try:
        return _BY_NAME[name.lower()]
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}; choose from bpsk, qpsk, 16qam") from None
