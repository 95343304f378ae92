"""Eigenvalues, singular values, log-determinants and empirical measures."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .bandmat import (DENSE_GUARD, DenseGuardError, PeriodicBlockBandMatrix, ShiftedMatrix,
                      as_shifted, matvec, rmatvec, to_dense)

log = logging.getLogger(__name__)

# relative cutoff for rank and "numerically zero" decisions
RANK_RTOL = 1e-8


def _dense(M, guard: int = DENSE_GUARD, complex_out: bool = True) -> np.ndarray:
    if isinstance(M, (ShiftedMatrix, PeriodicBlockBandMatrix)):
        return to_dense(M, guard=guard, complex_out=complex_out)
    A = np.asarray(M)
    if A.ndim != 2:
        raise ValueError("expected a 2-D array")
    if max(A.shape) > guard:
        raise DenseGuardError(f"size {A.shape} exceeds the dense guard {guard}")
    return A


def eigenvalues(M, overwrite: bool = False) -> np.ndarray:
    """All eigenvalues (unordered) of a square matrix via the dense QR algorithm.

    With ``overwrite=True`` an ndarray input is used as LAPACK workspace,
    which matters at n = 10^4 where a second copy does not fit comfortably.
    """
    A = _dense(M, complex_out=False)
    if A.shape[0] != A.shape[1]:
        raise ValueError("eigenvalues need a square matrix")
    try:
        return sla.eigvals(A, overwrite_a=overwrite or A is not M, check_finite=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"dense eigensolver did not converge: {exc}") from exc


def singular_values(M) -> np.ndarray:
    """Singular values in descending order."""
    A = _dense(M, complex_out=False)
    try:
        s = sla.svdvals(A, check_finite=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails; gesvd is slower but more robust
        s = sla.svd(A, compute_uv=False, check_finite=False, lapack_driver="gesvd")
    return np.sort(s)[::-1]


def least_singular_value(M) -> float:
    return float(singular_values(M)[-1])


def squared_singular_values(M) -> np.ndarray:
    """Eigenvalues of ``M M^*`` in ascending order, clipped at zero.

    Squares the condition number, so only for Stieltjes-type statistics away
    from the real axis; least singular values go through the SVD.
    """
    A = _dense(M, complex_out=False)
    G = A @ A.conj().T
    lam = sla.eigvalsh(G, overwrite_a=True, check_finite=False)
    return np.clip(lam, 0.0, None)


def log_abs_det(M) -> float:
    """``log|det M|`` as the sum of log singular values.

    Returns ``-inf`` (and logs a warning) when the smallest singular value is
    below ``1e-8 * s_1``.
    """
    s = singular_values(M)
    if s.size == 0:
        return 0.0
    if s[0] == 0 or s[-1] <= RANK_RTOL * s[0]:
        log.warning("matrix numerically singular (s_n/s_1 = %.3e); log|det| = -inf",
                    s[-1] / s[0] if s[0] else 0.0)
        return -math.inf
    return float(np.sum(np.log(s)))


@dataclass(frozen=True)
class EventEKParams:
    K: float
    sv_floor_exponent: float = 5.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")


class EKWitness(NamedTuple):
    condition: str   # "norm" or "s_min"
    block: str       # "U", "D_z" or "T"
    index: int       # 0-based block index
    value: float
    bound: float

    def __str__(self) -> str:
        op = ">" if self.condition == "norm" else "<"
        return f"{self.condition}({self.block}_{self.index}) = {self.value:.6g} {op} {self.bound:.6g}"


def block_singular_values(M: PeriodicBlockBandMatrix, z: complex = 0j) -> dict[str, np.ndarray]:
    """Per-block singular values of the scaled ``U``, ``(D)_z`` and ``T`` blocks, shape (m, b)."""
    s = M.scale
    eye = np.eye(M.b)
    out = {}
    for name, arr in (("U", s * M.U), ("D_z", s * M.D - z * eye), ("T", s * M.T)):
        out[name] = np.linalg.svd(arr, compute_uv=False)
    return out


def check_event_EK(M: PeriodicBlockBandMatrix, z: complex, params: EventEKParams
                   ) -> tuple[bool, EKWitness | None]:
    """Whether the good event holds; otherwise the first violated condition.

    Conditions are scanned block by block (i = 0..m-1), in the order
    norm U, norm (D)_z, norm T, s_min U, s_min T.
    """
    svs = block_singular_values(M, z)
    floor = float(M.b) ** (-params.sv_floor_exponent)
    for i in range(M.m):
        for name in ("U", "D_z", "T"):
            top = svs[name][i, 0]
            if top > params.K:
                return False, EKWitness("norm", name, i, float(top), params.K)
        for name in ("U", "T"):
            low = svs[name][i, -1]
            if low < floor:
                return False, EKWitness("s_min", name, i, float(low), floor)
    return True, None


def spectral_norm(M, guard: int = DENSE_GUARD, rtol: float = 1e-6, max_iter: int = 5000,
                  seed: int = 0) -> float:
    """Largest singular value; dense SVD below the guard, Lanczos on ``X_z^* X_z`` above."""
    if isinstance(M, (PeriodicBlockBandMatrix, ShiftedMatrix)):
        S = as_shifted(M)
        if S.n <= guard:
            return float(singular_values(S)[0])
        return _power_norm(S, rtol, max_iter, seed)
    return float(singular_values(M)[0])


def _power_norm(S: ShiftedMatrix, rtol: float, max_iter: int, seed: int) -> float:
    # Lanczos (ARPACK) on X_z^* X_z; plain power iteration stalls when s_1 and s_2 are close
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(S.n) + 1j * rng.standard_normal(S.n)
    if not np.any(matvec(S, v0)):
        return 0.0
    op = spla.LinearOperator((S.n, S.n), matvec=lambda v: rmatvec(S, matvec(S, v)), dtype=np.complex128)
    try:
        lam = spla.eigsh(op, k=1, which="LM", tol=rtol, maxiter=max_iter, v0=v0, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise RuntimeError(f"iterative norm did not converge in {max_iter} iterations") from exc
    return math.sqrt(max(float(lam[0].real), 0.0))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform-weight atoms; real atoms are kept sorted ascending."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("an empirical measure needs a non-empty 1-D set of atoms")
        a = np.sort(a)
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def n(self) -> int:
        return self.atoms.size

    @property
    def weight(self) -> float:
        return 1.0 / self.n

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.atoms)

    def cdf(self, x):
        """``mu((-inf, x])`` for a real measure."""
        if not self.is_real:
            raise TypeError("cdf is defined for real measures only")
        return np.searchsorted(self.atoms, x, side="right") / self.n

    def cdf_left(self, x):
        """``mu((-inf, x))``."""
        return np.searchsorted(self.atoms, x, side="left") / self.n


def empirical_measure_2d(eigs) -> EmpiricalMeasure:
    return EmpiricalMeasure(np.asarray(eigs, dtype=np.complex128))


def empirical_measure_sq_sv(svs) -> EmpiricalMeasure:
    s = np.asarray(svs, dtype=np.float64)
    return EmpiricalMeasure(s * s)


def eigenvalue_table_csv(eigs_by_trial) -> str:
    """CSV text with columns ``trial,index,re,im``."""
    lines = ["trial,index,re,im"]
    for t, lam in enumerate(eigs_by_trial):
        lines.extend(f"{t},{i},{float(x.real)!r},{float(x.imag)!r}"
                     for i, x in enumerate(np.asarray(lam, dtype=np.complex128)))
    return "\n".join(lines) + "\n"


def value_table_csv(values_by_trial) -> str:
    """CSV text with columns ``trial,index,value`` (e.g. singular values)."""
    lines = ["trial,index,value"]
    for t, vals in enumerate(values_by_trial):
        lines.extend(f"{t},{i},{float(x)!r}" for i, x in enumerate(np.asarray(vals, dtype=float)))
    return "\n".join(lines) + "\n"
