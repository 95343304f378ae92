"""The periodic block-band matrix and its shifts.

Blocks are 0-indexed.  For block index ``i`` (mod ``m``)::

    D[i] sits at block position (i,     i)
    T[i] sits at block position (i + 1, i)
    U[i] sits at block position (i - 1, i)

so block row ``i`` reads ``(T[i-1], D[i], U[i+1])`` and the corners are
``U[0]`` at block (m-1, 0) (lower left) and ``T[m-1]`` at block (0, m-1)
(upper right).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .atoms import AtomDistribution, as_atom, draw
from .report import make_rng

DENSE_GUARD = 20000


class DenseGuardError(MemoryError):
    """Raised when a dense n x n export would exceed the configured cap."""


def check_shape(n: int, b: int) -> int:
    """Validate ``(n, b)`` and return the block count ``m``."""
    if n < 1 or b < 1:
        raise ValueError("n and b must be positive")
    if n % b:
        raise ValueError(f"bandwidth b={b} does not divide n={n}")
    m = n // b
    if m < 3:
        raise ValueError(f"block count m=n/b={m} must be at least 3")
    return m


@dataclass(frozen=True)
class PeriodicBlockBandMatrix:
    D: np.ndarray  # (m, b, b)
    T: np.ndarray
    U: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        shapes = {self.D.shape, self.T.shape, self.U.shape}
        if len(shapes) != 1:
            raise ValueError("D, T and U must share one (m, b, b) shape")
        m, b1, b2 = self.D.shape
        if b1 != b2:
            raise ValueError("blocks must be square")
        if m < 3:
            raise ValueError("block count m must be at least 3")
        for arr in (self.D, self.T, self.U):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.D.shape[0]

    @property
    def b(self) -> int:
        return self.D.shape[1]

    @property
    def n(self) -> int:
        return self.m * self.b

    @property
    def dtype(self):
        return np.result_type(self.D, self.T, self.U)

    def scaled_blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = self.scale
        return s * self.D, s * self.T, s * self.U

    def shift(self, z: complex) -> "ShiftedMatrix":
        return ShiftedMatrix(self, complex(z))

    @classmethod
    def from_blocks(cls, D, T, U, scale: float = 1.0) -> "PeriodicBlockBandMatrix":
        return cls(np.array(D), np.array(T), np.array(U), float(scale))

    @classmethod
    def identity_blocks(cls, m: int, b: int, scale: float = 1.0) -> "PeriodicBlockBandMatrix":
        eye = np.broadcast_to(np.eye(b), (m, b, b))
        return cls(eye.copy(), eye.copy(), eye.copy(), scale)

    @classmethod
    def zeros(cls, m: int, b: int, scale: float = 1.0) -> "PeriodicBlockBandMatrix":
        z = np.zeros((m, b, b))
        return cls(z.copy(), z.copy(), z.copy(), scale)


@dataclass(frozen=True)
class ShiftedMatrix:
    """``X_z = X - z I``; the shift only touches the diagonal blocks."""

    base: PeriodicBlockBandMatrix
    z: complex = 0j

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def b(self) -> int:
        return self.base.b

    @property
    def m(self) -> int:
        return self.base.m


def as_shifted(M) -> ShiftedMatrix:
    if isinstance(M, ShiftedMatrix):
        return M
    if isinstance(M, PeriodicBlockBandMatrix):
        return ShiftedMatrix(M, 0j)
    raise TypeError(f"expected a block-band matrix, got {type(M).__name__}")


def generate(n: int, b: int, dist: "AtomDistribution | str", seed, normalized: bool = True
             ) -> PeriodicBlockBandMatrix:
    """Draw a periodic block-band matrix with iid atoms in all ``3m`` blocks.

    With ``normalized`` the scale is ``1/sqrt(3b)`` (so each row's entry
    variances sum to one), otherwise 1.  Blocks are drawn from one stream in
    the order D, T, U.
    """
    m = check_shape(n, b)
    dist = as_atom(dist)
    raw = draw(dist, make_rng(seed), (3, m, b, b))
    scale = 1.0 / math.sqrt(3 * b) if normalized else 1.0
    return PeriodicBlockBandMatrix(raw[0], raw[1], raw[2], scale)


def to_dense(M, guard: int = DENSE_GUARD, complex_out: bool = True) -> np.ndarray:
    """Dense ``n x n`` array of a block-band matrix or of its shift.

    ``complex_out=False`` keeps real dtype when both the blocks and the shift
    are real, which halves the memory of large real eigensolves.
    """
    S = as_shifted(M)
    X = S.base
    n, b, m = X.n, X.b, X.m
    if n > guard:
        raise DenseGuardError(f"n={n} exceeds the dense guard {guard}")
    dtype = np.complex128
    if not complex_out and S.z.imag == 0 and not np.iscomplexobj(X.D) \
            and not np.iscomplexobj(X.T) and not np.iscomplexobj(X.U):
        dtype = np.float64
    out = np.zeros((n, n), dtype=dtype)
    s = X.scale
    for i in range(m):
        cols = slice(i * b, (i + 1) * b)
        out[i * b:(i + 1) * b, cols] = s * X.D[i]
        r = (i + 1) % m
        out[r * b:(r + 1) * b, cols] = s * X.T[i]
        r = (i - 1) % m
        out[r * b:(r + 1) * b, cols] = s * X.U[i]
    if S.z != 0:
        idx = np.arange(n)
        out[idx, idx] -= S.z if dtype == np.complex128 else S.z.real
    return out


def extract_blocks(A: np.ndarray, b: int, scale: float = 1.0) -> PeriodicBlockBandMatrix:
    """Inverse of :func:`to_dense` for an unshifted matrix."""
    n = A.shape[0]
    m = check_shape(n, b)
    D = np.empty((m, b, b), dtype=A.dtype)
    T = np.empty_like(D)
    U = np.empty_like(D)
    for i in range(m):
        cols = slice(i * b, (i + 1) * b)
        D[i] = A[i * b:(i + 1) * b, cols]
        r = (i + 1) % m
        T[i] = A[r * b:(r + 1) * b, cols]
        r = (i - 1) % m
        U[i] = A[r * b:(r + 1) * b, cols]
    if scale != 1.0:
        D, T, U = D / scale, T / scale, U / scale
    return PeriodicBlockBandMatrix(D, T, U, scale)


def structural_mask(n: int, b: int) -> np.ndarray:
    """Boolean pattern of the structurally nonzero positions."""
    m = check_shape(n, b)
    blk = np.zeros((m, m), dtype=bool)
    for i in range(m):
        blk[i, i] = blk[(i + 1) % m, i] = blk[(i - 1) % m, i] = True
    return np.kron(blk, np.ones((b, b), dtype=bool))


def _blocks_of(v: np.ndarray, M: ShiftedMatrix) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (M.n,):
        raise ValueError(f"vector of length {M.n} expected, got shape {v.shape}")
    return v.reshape(M.m, M.b)


def matvec(M, v: np.ndarray) -> np.ndarray:
    """``X_z v`` in O(n b) using the block structure."""
    S = as_shifted(M)
    X = S.base
    V = _blocks_of(v, S)
    out = np.einsum("kij,kj->ki", X.D, V)
    # T[k] v[k] lands in block row k+1, U[k] v[k] in block row k-1
    out = out + np.roll(np.einsum("kij,kj->ki", X.T, V), 1, axis=0)
    out = out + np.roll(np.einsum("kij,kj->ki", X.U, V), -1, axis=0)
    out = X.scale * out.reshape(-1)
    if S.z != 0:
        out = out - S.z * np.asarray(v)
    return out


def rmatvec(M, v: np.ndarray) -> np.ndarray:
    """``X_z^* v``."""
    S = as_shifted(M)
    X = S.base
    V = _blocks_of(v, S)
    # column block k of X_z gathers rows k (D), k+1 (T), k-1 (U)
    out = np.einsum("kji,kj->ki", X.D.conj(), V)
    out = out + np.einsum("kji,kj->ki", X.T.conj(), np.roll(V, -1, axis=0))
    out = out + np.einsum("kji,kj->ki", X.U.conj(), np.roll(V, 1, axis=0))
    out = X.scale * out.reshape(-1)
    if S.z != 0:
        out = out - np.conj(S.z) * np.asarray(v)
    return out


def block_row(M, i: int) -> np.ndarray:
    """The ``b x 3b`` block row ``(T[i-1], (D[i])_z, U[i+1])``, scaled."""
    S = as_shifted(M)
    X = S.base
    m, b = X.m, X.b
    i %= m
    Dz = X.scale * X.D[i] - S.z * np.eye(b)
    return np.hstack([X.scale * X.T[(i - 1) % m], Dz, X.scale * X.U[(i + 1) % m]])


def row_block_neighbours(m: int, i: int) -> tuple[int, int, int]:
    """Block columns touched by block row ``i``: ``(i-1, i, i+1) mod m``."""
    return (i - 1) % m, i % m, (i + 1) % m


def conjugate_by_symmetry(M: PeriodicBlockBandMatrix, perm: str, i: int | None = None,
                          j: int | None = None) -> PeriodicBlockBandMatrix:
    """Return ``P X P^T`` for a structure-preserving permutation ``P``.

    ``perm="swap"`` exchanges global indices ``i`` and ``j`` (same block).
    ``perm="cyclic"`` maps block ``k`` to block ``k + 1``.
    """
    b, m = M.b, M.m
    if perm in ("cyclic", "cyclic-block-shift"):
        return PeriodicBlockBandMatrix(np.roll(M.D, 1, axis=0), np.roll(M.T, 1, axis=0),
                                       np.roll(M.U, 1, axis=0), M.scale)
    if perm not in ("swap", "within-block-swap"):
        raise ValueError(f"unknown permutation {perm!r}")
    if i is None or j is None:
        raise ValueError("swap needs indices i and j")
    k, p = divmod(int(i), b)
    k2, q = divmod(int(j), b)
    if k != k2 or not (0 <= k < m):
        raise ValueError(f"indices {i} and {j} are not in the same block")
    D, T, U = M.D.copy(), M.T.copy(), M.U.copy()
    sw = [p, q]
    # rows p, q of block row k: D[k], T[k-1], U[k+1]
    for arr, blk in ((D, k), (T, (k - 1) % m), (U, (k + 1) % m)):
        arr[blk][sw, :] = arr[blk][sw[::-1], :]
    # columns p, q of block column k: D[k], T[k], U[k]
    for arr in (D, T, U):
        arr[k][:, sw] = arr[k][:, sw[::-1]]
    return PeriodicBlockBandMatrix(D, T, U, M.scale)


def permutation_matrix(n: int, b: int, perm: str, i: int | None = None, j: int | None = None
                       ) -> np.ndarray:
    """Dense permutation ``P`` matching :func:`conjugate_by_symmetry`."""
    idx = np.arange(n)
    if perm in ("cyclic", "cyclic-block-shift"):
        target = (idx + b) % n
    else:
        target = idx.copy()
        target[i], target[j] = j, i
    P = np.zeros((n, n))
    P[target, idx] = 1.0
    return P


def export_dense_csv(M, path, guard: int = DENSE_GUARD) -> None:
    """Write the nonzeros as ``row,col,re,im`` triplets (0-based)."""
    A = to_dense(M, guard=guard)
    rows, cols = np.nonzero(A)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "re", "im"])
        for r, c in zip(rows, cols):
            v = A[r, c]
            w.writerow([int(r), int(c), repr(float(v.real)), repr(float(v.imag))])


def export_blocks(M: PeriodicBlockBandMatrix, directory) -> list[Path]:
    """One CSV per block (``D_0.csv``, ``T_0.csv``, ...), unscaled entries as ``re,im`` pairs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, arr in (("D", M.D), ("T", M.T), ("U", M.U)):
        for k in range(M.m):
            p = directory / f"{name}_{k}.csv"
            blk = np.asarray(arr[k], dtype=np.complex128)
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for row in blk:
                    w.writerow([f"{repr(float(x.real))}{'+' if x.imag >= 0 else '-'}{repr(abs(float(x.imag)))}j"
                                for x in row])
            written.append(p)
    (directory / "meta.csv").write_text(f"m,b,scale\n{M.m},{M.b},{M.scale!r}\n")
    return written


def load_blocks(directory) -> PeriodicBlockBandMatrix:
    directory = Path(directory)
    meta = (directory / "meta.csv").read_text().splitlines()[1].split(",")
    m, b, scale = int(meta[0]), int(meta[1]), float(meta[2])
    arrs = {}
    for name in "DTU":
        blocks = []
        for k in range(m):
            with open(directory / f"{name}_{k}.csv", newline="") as fh:
                blocks.append([[complex(x) for x in row] for row in csv.reader(fh)])
        arrs[name] = np.array(blocks, dtype=np.complex128)
    return PeriodicBlockBandMatrix(arrs["D"], arrs["T"], arrs["U"], scale)
