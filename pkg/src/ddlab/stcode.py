"""
Space-time block codes: constructions, diversity analysis, unitary codebook
search, and ML / linear / PIC group decoders.

Every structured code is held as a real linear-dispersion code: with
``u = [Re s1, Im s1, Re s2, Im s2, ...]`` the codeword is
``C(u) = sum_i u[i] * dispersion[i]``, so conjugated entries (Alamouti,
orthogonal designs) stay linear in ``u`` and one decoder stack serves
every code.

Channel model used by the decoders: ``Y = C @ H + W`` with ``C`` of shape
``(t, mt)``, ``H`` of shape ``(mt, mr)`` and ``Y`` of shape ``(t, mr)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .numerics import (BPSK, ComplexityError, Constellation, RngStream, SingularMatrixError,
                       solve_least_squares)

__all__ = [
    "LinearDispersionCode",
    "ExplicitCodebook",
    "DiversityReport",
    "GroupPartition",
    "alamouti",
    "ostbc34",
    "diagonal_from_rotation",
    "rotation_2d",
    "SSD_ANGLE",
    "enumerate_codebook",
    "diversity_report",
    "unitary_code_search",
    "SearchResult",
    "equivalent_real_channel",
    "realvec",
    "ml_indices",
    "decode_ml",
    "decode_linear",
    "decode_pic",
    "pic_search_cost",
    "write_codebook",
    "read_codebook",
]

FULL_DIVERSITY_TOL = 1e-12
CODEBOOK_GUARD = 65536

# 0.5 * arctan(2): the classic 2-D rotation for signal space diversity
SSD_ANGLE = 0.5 * math.atan(2.0)


@dataclass(frozen=True, eq=False)
class LinearDispersionCode:
    name: str
    dispersion: np.ndarray  # (ns, t, mt)
    constellation: Constellation

    def __post_init__(self):
        d = np.asarray(self.dispersion, dtype=complex)
        object.__setattr__(self, "dispersion", d)
        if d.ndim != 3 or d.shape[0] % 2:
            raise ValueError("dispersion must be an (ns, t, mt) array with ns even")
        flat = np.concatenate([d.real.reshape(d.shape[0], -1), d.imag.reshape(d.shape[0], -1)], 1)
        if np.linalg.matrix_rank(flat) < d.shape[0]:
            raise ValueError("dispersion matrices are not linearly independent")

    @property
    def ns(self) -> int:
        return self.dispersion.shape[0]

    @property
    def symbols(self) -> int:
        """Complex information symbols per codeword."""
        return self.ns // 2

    @property
    def t(self) -> int:
        return self.dispersion.shape[1]

    @property
    def mt(self) -> int:
        return self.dispersion.shape[2]

    @property
    def rate(self) -> Fraction:
        """Complex information symbols per channel use."""
        return Fraction(self.symbols, self.t)

    def codeword(self, symbols) -> np.ndarray:
        """Codeword for complex symbols ``(..., symbols)``."""
        s = np.asarray(symbols, dtype=complex)
        u = np.stack([s.real, s.imag], axis=-1).reshape(s.shape[:-1] + (self.ns,))
        return self.codeword_real(u)

    def codeword_real(self, u) -> np.ndarray:
        return np.tensordot(np.asarray(u, dtype=float), self.dispersion, axes=([-1], [0]))


def _ld_from_complex(name: str, coeffs: np.ndarray, conj_coeffs: np.ndarray,
                     const: Constellation) -> LinearDispersionCode:
    # codeword = sum_k A_k s_k + B_k conj(s_k): Re s_k -> A+B, Im s_k -> j(A-B)
    disp = []
    for a, b in zip(coeffs, conj_coeffs):
        disp.append(a + b)
        disp.append(1j * (a - b))
    return LinearDispersionCode(name, np.array(disp), const)


def alamouti(constellation: Constellation = BPSK) -> LinearDispersionCode:
    """Alamouti code, rows ``(s1, s2)`` and ``(-conj(s2), conj(s1))``."""
    a = np.zeros((2, 2, 2), dtype=complex)
    b = np.zeros((2, 2, 2), dtype=complex)
    a[0][0, 0] = 1
    b[0][1, 1] = 1
    a[1][0, 1] = 1
    b[1][1, 0] = -1
    return _ld_from_complex("alamouti", a, b, constellation)


def ostbc34(mt: int = 4, constellation: Constellation = BPSK) -> LinearDispersionCode:
    """Rate-3/4 orthogonal design: 3 symbols over 4 slots on 3 or 4 antennas.

    ::

        [ s1      s2      s3     0  ]
        [-s2*     s1*     0      s3 ]
        [-s3*     0       s1*   -s2 ]
        [ 0      -s3*     s2*    s1 ]

    The 3-antenna code keeps the first three columns, so it is 4 x 3.
    """
    if mt not in (3, 4):
        raise ValueError("ostbc34 supports 3 or 4 transmit antennas")
    a = np.zeros((3, 4, 4), dtype=complex)
    b = np.zeros((3, 4, 4), dtype=complex)
    a[0][0, 0] = a[0][3, 3] = 1
    b[0][1, 1] = b[0][2, 2] = 1
    a[1][0, 1] = 1
    a[1][2, 3] = -1
    b[1][1, 0] = -1
    b[1][3, 2] = 1
    a[2][0, 2] = a[2][1, 3] = 1
    b[2][2, 0] = b[2][3, 1] = -1
    return _ld_from_complex(f"ostbc34-{mt}", a[:, :, :mt], b[:, :, :mt], constellation)


def rotation_2d(theta: float = SSD_ANGLE) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def diagonal_from_rotation(r, constellation: Constellation = BPSK) -> LinearDispersionCode:
    """Diagonal code ``diag(r @ u)``: signal space diversity viewed as an ST code."""
    r = np.asarray(r, dtype=complex)
    d = r.shape[0]
    if r.shape != (d, d) or np.max(np.abs(r.conj().T @ r - np.eye(d))) > 1e-10:
        raise ValueError("rotation must be a unitary square matrix")
    coeffs = np.zeros((d, d, d), dtype=complex)
    for k in range(d):
        coeffs[k] = np.diag(r[:, k])
    return _ld_from_complex("diagonal", coeffs, np.zeros_like(coeffs), constellation)


# ---------------------------------------------------------------------------
# Codebooks and diversity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExplicitCodebook:
    """Codewords ``(L, t, mt)`` with labels ``(L, bits)``.

    Sizes that are not a power of two (e.g. searched unitary codes) get
    ``ceil(log2 L)``-bit index labels; only power-of-two codebooks can be
    driven by arbitrary bit streams.
    """

    codewords: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=complex)
        lab = np.asarray(self.labels, dtype=np.uint8)
        object.__setattr__(self, "codewords", cw)
        object.__setattr__(self, "labels", lab)
        if cw.ndim != 3 or lab.ndim != 2 or lab.shape[0] != cw.shape[0]:
            raise ValueError("need (L, t, mt) codewords and (L, bits) labels")
        if len({row.tobytes() for row in lab}) != lab.shape[0]:
            raise ValueError("labels must be distinct")

    @classmethod
    def indexed(cls, codewords) -> "ExplicitCodebook":
        cw = np.asarray(codewords, dtype=complex)
        nbits = max(1, math.ceil(math.log2(cw.shape[0])))
        shifts = np.arange(nbits - 1, -1, -1)
        return cls(cw, (np.arange(cw.shape[0])[:, None] >> shifts) & 1)

    def __len__(self) -> int:
        return self.codewords.shape[0]

    @property
    def t(self) -> int:
        return self.codewords.shape[1]


def enumerate_codebook(code: LinearDispersionCode) -> ExplicitCodebook:
    """All codewords; codeword ``j`` carries symbol indices = base-Q digits of ``j``
    (first symbol most significant), labeled by the concatenated symbol labels."""
    const = code.constellation
    size = const.size**code.symbols
    if size > CODEBOOK_GUARD:
        raise ComplexityError(f"codebook of {size} words exceeds guard {CODEBOOK_GUARD}")
    idx = np.indices((const.size,) * code.symbols).reshape(code.symbols, -1).T
    cw = code.codeword(const.points[idx])
    return ExplicitCodebook(cw, const.labels[idx].reshape(size, -1))


@dataclass(frozen=True)
class DiversityReport:
    full_diversity: bool
    min_abs_det: float
    diversity_product: float
    argmin_pair: tuple[int, int]
    #: the literature often quotes 0.5 * min|det|^(1/t); this report omits the 1/2
    normalization: str = "min_abs_det ** (1/t), no 1/2 factor"


def _pair_dets(cw: np.ndarray):
    i, j = np.triu_indices(cw.shape[0], k=1)
    dets = np.abs(np.linalg.det(cw[i] - cw[j]))
    return i, j, dets


def diversity_report(cb: ExplicitCodebook) -> DiversityReport:
    """Exhaustive scan of ``|det(C_i - C_j)|`` over all unordered pairs."""
    cw = cb.codewords
    if cw.shape[0] < 2:
        raise ValueError("need at least two codewords")
    if cw.shape[1] != cw.shape[2]:
        raise ValueError("diversity analysis needs square codewords")
    i, j, dets = _pair_dets(cw)
    k = int(np.argmin(dets))  # first minimum in (i, j) lexicographic order
    m = float(dets[k])
    return DiversityReport(m > FULL_DIVERSITY_TOL, m, m ** (1.0 / cw.shape[1]),
                           (int(i[k]), int(j[k])))


# ---------------------------------------------------------------------------
# Unitary codebook search
# ---------------------------------------------------------------------------


def _unitary_2x2(p: np.ndarray) -> np.ndarray:
    # p = (alpha, beta, gamma, theta), batched over leading axes
    a, b, g, th = (p[..., i] for i in range(4))
    c, s = np.cos(th), np.sin(th)
    u = np.empty(p.shape[:-1] + (2, 2), dtype=complex)
    u[..., 0, 0] = np.exp(1j * b) * c
    u[..., 0, 1] = np.exp(1j * g) * s
    u[..., 1, 0] = -np.exp(-1j * g) * s
    u[..., 1, 1] = np.exp(-1j * b) * c
    return u * np.exp(1j * a)[..., None, None]


def _unitary_general(p: np.ndarray, dim: int) -> np.ndarray:
    # exp(iA) with A Hermitian, A built from dim^2 real parameters
    flat = p.reshape(-1, dim * dim)
    out = np.empty((flat.shape[0], dim, dim), dtype=complex)
    iu = np.triu_indices(dim, 1)
    nu = iu[0].size
    for n, q in enumerate(flat):
        a = np.diag(q[:dim]).astype(complex)
        a[iu] = q[dim:dim + nu] + 1j * q[dim + nu:]
        a = a + np.triu(a, 1).conj().T
        w, v = np.linalg.eigh(a)
        out[n] = (v * np.exp(1j * w)) @ v.conj().T
    return out.reshape(p.shape[:-1] + (dim, dim))


@dataclass
class SearchResult:
    codebook: ExplicitCodebook
    report: DiversityReport
    trace: list[float]  # best-so-far diversity product after each evaluation batch
    evaluations: int


def unitary_code_search(l: int, dim: int, rng: RngStream, budget: int,
                        min_step: float = 1e-9) -> SearchResult:
    """Search for ``l`` unitary ``dim x dim`` matrices with large diversity product.

    The first codeword is pinned to the identity (``|det|`` is invariant
    under a common unitary factor). Remaining codewords are parametrized by
    phase angles (``dim == 2``) or a Hermitian generator. Each restart
    draws uniform parameters and runs cyclic coordinate ascent, trying
    ``+-step`` on one coordinate at a time and halving the step after a
    sweep without improvement; a restart ends when the step falls below
    ``min_step``. ``budget`` counts objective evaluations.
    """
    if budget <= 0:
        raise ValueError("search budget must be positive")
    if l < 2 or dim < 2:
        raise ValueError("need l >= 2 and dim >= 2")
    npar = 4 if dim == 2 else dim * dim
    build = _unitary_2x2 if dim == 2 else (lambda p: _unitary_general(p, dim))
    eye = np.eye(dim, dtype=complex)
    ii, jj = np.triu_indices(l, k=1)

    def objective(params: np.ndarray) -> np.ndarray:
        # params (B, l-1, npar) -> diversity product per candidate
        u = build(params)
        cw = np.concatenate([np.broadcast_to(eye, (params.shape[0], 1, dim, dim)), u], axis=1)
        d = np.abs(np.linalg.det(cw[:, ii] - cw[:, jj]))
        return np.min(d, axis=1) ** (1.0 / dim)

    best_val, best_par = -1.0, None
    trace: list[float] = []
    used = 0
    while used < budget:
        x = rng.uniform((l - 1, npar)) * 2 * np.pi
        fx = float(objective(x[None])[0])
        used += 1
        step = 0.5
        while step >= min_step and used < budget:
            improved = False
            for c in range(x.size):
                if used >= budget:
                    break
                trial = np.repeat(x[None], 2, axis=0).reshape(2, -1)
                trial[0, c] += step
                trial[1, c] -= step
                vals = objective(trial.reshape(2, l - 1, npar))
                used += 2
                k = int(np.argmax(vals))
                if vals[k] > fx:
                    x = trial[k].reshape(l - 1, npar)
                    fx = float(vals[k])
                    improved = True
            if not improved:
                step *= 0.5
            if fx > best_val:
                best_val, best_par = fx, x.copy()
            trace.append(best_val)
        if fx > best_val:
            best_val, best_par = fx, x.copy()
        trace.append(best_val)

    cw = np.concatenate([eye[None], build(best_par)], axis=0)
    cb = ExplicitCodebook.indexed(cw)
    return SearchResult(cb, diversity_report(cb), trace, used)


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def realvec(y) -> np.ndarray:
    """``[Re vec(y); Im vec(y)]`` with row-major vec, batched over leading axes."""
    y = np.asarray(y, dtype=complex)
    flat = y.reshape(y.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def equivalent_real_channel(code: LinearDispersionCode, h) -> np.ndarray:
    """Real matrix ``G`` with ``realvec(C(u) @ h) = G @ u``; shape ``(2 t mr, ns)``."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != code.mt:
        raise ValueError(f"channel must be ({code.mt}, mr), got {h.shape}")
    cols = np.einsum("itm,mr->itr", code.dispersion, h)
    return realvec(cols).T


def ml_indices(codewords, h, y) -> np.ndarray:
    """Batched ML: index of ``argmin_C ||y - C h||_F`` (lowest index on ties).

    ``h`` is ``(..., mt, mr)`` and ``y`` is ``(..., t, mr)``.
    """
    cw = np.asarray(codewords, dtype=complex)
    pred = np.einsum("ctm,...mr->...ctr", cw, np.asarray(h, dtype=complex))
    y = np.asarray(y, dtype=complex)[..., None, :, :]
    metric = np.sum(np.abs(y - pred) ** 2, axis=(-2, -1))
    return np.argmin(metric, axis=-1)


def decode_ml(cb: ExplicitCodebook, h, y) -> np.ndarray:
    """Label bits of the ML codeword."""
    if len(cb) > CODEBOOK_GUARD:
        raise ComplexityError("codebook too large for exhaustive ML")
    return cb.labels[int(ml_indices(cb.codewords, h, y))]


def _symbols_to_bits(code: LinearDispersionCode, u: np.ndarray) -> np.ndarray:
    s = u[0::2] + 1j * u[1::2]
    return code.constellation.indices_to_bits(code.constellation.nearest(s))


def decode_linear(code: LinearDispersionCode, h, y, mode: str = "zf",
                  noise_var: float = 0.0) -> np.ndarray:
    """Linear receiver on the real-stacked system, then per-symbol slicing."""
    g = equivalent_real_channel(code, h)
    yr = realvec(y)
    if mode == "zf":
        try:
            u = solve_least_squares(g, yr, ridge=0.0).real
        except SingularMatrixError:
            raise SingularMatrixError("equivalent channel is rank deficient; ZF undefined") from None
    elif mode == "mmse":
        u = solve_least_squares(g, yr, ridge=noise_var).real
    else:
        raise ValueError(f"unknown linear receiver mode {mode!r}")
    return _symbols_to_bits(code, u)


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[tuple[int, ...], ...]

    def validate(self, ns: int) -> None:
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(range(ns)):
            raise ValueError(f"groups must partition the {ns} real coordinates")

    @classmethod
    def per_symbol(cls, symbols: int) -> "GroupPartition":
        return cls(tuple((2 * k, 2 * k + 1) for k in range(symbols)))

    @classmethod
    def single(cls, ns: int) -> "GroupPartition":
        return cls((tuple(range(ns)),))


def _axis_alphabets(code: LinearDispersionCode, coords: Sequence[int]) -> list[np.ndarray]:
    const = code.constellation
    if not const.is_separable:
        raise ValueError("PIC decoding needs a constellation that separates into I/Q levels")
    re, im = const.axis_levels
    return [re if c % 2 == 0 else im for c in coords]


def pic_search_cost(code: LinearDispersionCode, partition: GroupPartition) -> int:
    """Hypotheses evaluated by :func:`decode_pic` (sum over groups of the axis-product size)."""
    return sum(int(np.prod([a.size for a in _axis_alphabets(code, g)])) for g in partition.groups)


def decode_pic(code: LinearDispersionCode, h, y, partition: GroupPartition) -> np.ndarray:
    """Partial interference cancellation group decoding.

    For each group, the real-stacked observation is projected onto the
    orthogonal complement of the other groups' columns of the equivalent
    channel, then that group's real coordinates are found by exhaustive
    search over their I/Q level products.
    """
    partition.validate(code.ns)
    g = equivalent_real_channel(code, h)
    yr = realvec(y)
    dim = g.shape[0]
    u = np.zeros(code.ns)
    for grp in partition.groups:
        grp = list(grp)
        others = [i for i in range(code.ns) if i not in grp]
        if others:
            q, s, _ = np.linalg.svd(g[:, others], full_matrices=False)
            rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300))) if s.size else 0
            if rank >= dim:
                raise ValueError("other groups span the whole space; projection is degenerate")
            q = q[:, :rank]
            proj = np.eye(dim) - q @ q.T
        else:
            proj = np.eye(dim)
        gi = proj @ g[:, grp]
        if others and np.linalg.norm(gi) <= 1e-12 * max(np.linalg.norm(g[:, grp]), 1e-300):
            raise ValueError("group columns vanish after projection")
        yi = proj @ yr
        alph = _axis_alphabets(code, grp)
        cand = np.array(list(itertools.product(*alph)))  # (C, K), first coordinate slowest
        metric = np.sum((yi[None, :] - cand @ gi.T) ** 2, axis=1)
        u[grp] = cand[int(np.argmin(metric))]
    return _symbols_to_bits(code, u)


# ---------------------------------------------------------------------------
# Plain-text codebook format
# ---------------------------------------------------------------------------
#
#   ddlab-codebook 1
#   size <L> rows <t> cols <mt>
#   codeword <index> <label bits>
#   <re> <im> <re> <im> ...      one line per row, row-major
#   ...
# Floats are written with repr() so a read-back is bit-exact.


def write_codebook(cb: ExplicitCodebook, path) -> None:
    L, t, mt = cb.codewords.shape
    lines = ["ddlab-codebook 1", f"size {L} rows {t} cols {mt}"]
    for n in range(L):
        lines.append(f"codeword {n} {''.join(map(str, cb.labels[n]))}")
        for row in cb.codewords[n]:
            lines.append(" ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_codebook(path) -> ExplicitCodebook:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "ddlab-codebook 1":
        raise ValueError(f"{path}: not a ddlab codebook file")
    hdr = lines[1].split()
    if len(hdr) != 6 or hdr[0] != "size" or hdr[2] != "rows" or hdr[4] != "cols":
        raise ValueError(f"{path}: malformed size line")
    L, t, mt = int(hdr[1]), int(hdr[3]), int(hdr[5])
    cw = np.empty((L, t, mt), dtype=complex)
    labels = []
    pos = 2
    for n in range(L):
        tag = lines[pos].split()
        if tag[0] != "codeword" or int(tag[1]) != n:
            raise ValueError(f"{path}: expected codeword {n}")
        labels.append([int(b) for b in tag[2]])
        for r in range(t):
            vals = [float(v) for v in lines[pos + 1 + r].split()]
            if len(vals) != 2 * mt:
                raise ValueError(f"{path}: codeword {n} row {r} has {len(vals)} values")
            cw[n, r] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
        pos += 1 + t
    return ExplicitCodebook(cw, np.array(labels, dtype=np.uint8))
