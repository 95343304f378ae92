"""Least-singular-value machinery: compressibility, sparse infima, anti-concentration,
distances to spans and block-recursion residuals, plus the tail experiments."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import comb

from .atoms import as_atom, draw
from .bandmat import (PeriodicBlockBandMatrix, ShiftedMatrix, as_shifted, check_shape, generate,
                      matvec, to_dense)
from .report import ExperimentReport, make_rng, map_trials, trial_seed
from .spectra import RANK_RTOL, EventEKParams, check_event_EK, least_singular_value

ENUMERATION_BUDGET = 10 ** 6


class RankWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CompressibilityParams:
    a: float
    kappa: float

    def __post_init__(self):
        if not (0 < self.a < 1 and 0 < self.kappa < 1):
            raise ValueError("a and kappa must both lie in (0, 1)")

    def sparsity(self, k: int) -> int:
        return int(math.floor(self.a * k + 1e-12))


def _check_unit(v) -> np.ndarray:
    v = np.asarray(v)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("expected a unit vector")
    return v


def sparse_distance(v, s: int, unit_sparse: bool = False) -> float:
    """Distance from unit ``v`` to the ``s``-sparse vectors.

    The nearest sparse vector keeps the ``s`` largest-magnitude coordinates.
    With ``unit_sparse`` the sparse vectors are restricted to the sphere,
    which turns the distance into ``sqrt(2 - 2 ||v_S||)``.
    """
    mags = np.sort(np.abs(np.asarray(v)) ** 2)[::-1]
    kept = float(mags[:s].sum()) if s > 0 else 0.0
    if unit_sparse:
        if s == 0:
            return math.inf
        return math.sqrt(max(0.0, 2.0 - 2.0 * math.sqrt(min(kept, 1.0))))
    return math.sqrt(max(0.0, 1.0 - kept))


def is_compressible(v, params: CompressibilityParams, unit_sparse: bool = False) -> bool:
    v = _check_unit(v)
    return sparse_distance(v, params.sparsity(v.size), unit_sparse) <= params.kappa


def incompressible_window(k: int, params: CompressibilityParams) -> tuple[float, float, float]:
    """``(gamma_1 k, lower, upper)``: required count and magnitude window."""
    kap = params.kappa
    g1, g2, g3 = kap ** 2 * params.a / 2, kap / math.sqrt(2), kap ** -0.5
    return g1 * k, g2 / math.sqrt(k), g3 / math.sqrt(k)


def incompressible_coordinate_count(v, params: CompressibilityParams) -> int:
    """Number of coordinates with ``kappa/sqrt(2k) <= |v_i| <= 1/sqrt(kappa k)``."""
    v = _check_unit(v)
    if is_compressible(v, params):
        raise ValueError("vector is compressible; the coordinate bound does not apply")
    _, lo, hi = incompressible_window(v.size, params)
    mag = np.abs(v)
    return int(np.count_nonzero((mag >= lo) & (mag <= hi)))


def sparse_infimum(M, a: float, budget: int = ENUMERATION_BUDGET, chunk: int = 4096) -> float:
    """``min_{|S| = floor(a c)} s_min(M[:, S])`` by exhaustive support enumeration."""
    M = np.asarray(M)
    rows, c = M.shape
    s = int(math.floor(a * c + 1e-12))
    if s < 1:
        raise ValueError("floor(a * c) must be at least 1")
    total = comb(c, s, exact=True)
    if total > budget:
        raise ValueError(f"{total} supports exceed the enumeration budget {budget}")
    if s > rows:
        # more columns than rows: every support has a kernel direction
        return 0.0
    best = math.inf
    it = itertools.combinations(range(c), s)
    while True:
        batch = list(itertools.islice(it, chunk))
        if not batch:
            break
        sub = M[:, np.array(batch)]           # (rows, B, s)
        sub = np.moveaxis(sub, 1, 0)          # (B, rows, s)
        sv = np.linalg.svd(sub, compute_uv=False)
        best = min(best, float(sv[:, -1].min()))
    return best


def levy_concentration(dist, v, eps: float, trials: int, seed, complex_centers: bool | None = None) -> float:
    """Monte-Carlo ``sup_r P(|sum v_i xi_i - r| <= eps)``.

    Real sums: exact sliding-window maximum over the sorted sample.  Complex
    sums: best disk among centres at the sample points, refined on a
    ``0.1 eps`` lattice around the leading candidates.
    """
    if trials < 1000:
        raise ValueError("at least 10^3 trials are required")
    dist = as_atom(dist)
    v = np.asarray(v)
    rng = make_rng(seed)
    xi = draw(dist, rng, (trials, v.size))
    S = xi @ v
    if complex_centers is None:
        complex_centers = np.iscomplexobj(S) and np.any(np.abs(np.imag(S)) > 0)
    if not complex_centers:
        x = np.sort(np.real(S))
        hi = np.searchsorted(x, x + 2 * eps, side="right")
        return float(np.max(hi - np.arange(trials)) / trials)
    pts = np.column_stack([S.real, S.imag])
    tree = cKDTree(pts)
    counts = tree.query_ball_point(pts, eps, return_length=True)
    best = int(counts.max())
    if eps > 0:
        step = 0.1 * eps
        offs = np.arange(-10, 11) * step
        grid = np.array([(dx, dy) for dx in offs for dy in offs if dx * dx + dy * dy <= eps * eps])
        for i in np.argsort(counts)[::-1][:10]:
            cand = pts[i] + grid
            best = max(best, int(tree.query_ball_point(cand, eps, return_length=True).max()))
    return best / trials


def _dense_of(M) -> np.ndarray:
    if isinstance(M, (ShiftedMatrix, PeriodicBlockBandMatrix)):
        return to_dense(M)
    return np.asarray(M, dtype=np.complex128)


def distance_to_span(M, k: int) -> float:
    """Distance from column ``k`` to the span of the other columns (QR projection)."""
    A = _dense_of(M)
    n = A.shape[1]
    x = A[:, k]
    others = np.delete(A, k, axis=1)
    Q, R = np.linalg.qr(others)
    d = np.abs(np.diag(R))
    if d.size and d.min() <= RANK_RTOL * max(d.max(), 1e-300):
        warnings.warn(f"span of the other {n - 1} columns is numerically degenerate", RankWarning)
    r = x - Q @ (Q.conj().T @ x)
    return float(np.linalg.norm(r))


def column_normal(M, k: int) -> np.ndarray:
    """Unit ``n`` with ``<x_j, n> = 0`` for every column ``j != k``."""
    A = _dense_of(M)
    others = np.delete(A, k, axis=1)
    U, _, _ = np.linalg.svd(others, full_matrices=True)
    return U[:, -1]


def row_normal(M, k: int = 0) -> np.ndarray:
    """Unit ``v`` solving ``X_z[j, :] v = 0`` for all rows ``j != k``.

    Taken as the right singular vector of the smallest singular value of the
    ``(n-1) x n`` row-deleted matrix.
    """
    A = _dense_of(M)
    sub = np.delete(A, k, axis=0)
    _, _, Vh = np.linalg.svd(sub, full_matrices=True)
    return Vh[-1].conj()


def block_equation_residual(M, v, exclude_rows=()) -> list[float]:
    """Norms of ``T[i-1] v[i-1] + (D[i])_z v[i] + U[i+1] v[i+1]`` per block row.

    Rows listed in ``exclude_rows`` are left out of their block's residual.
    """
    S = as_shifted(M)
    v = np.asarray(v)
    if v.shape != (S.n,):
        raise ValueError(f"vector of length {S.n} expected")
    r = matvec(S, v)
    mask = np.ones(S.n, dtype=bool)
    mask[list(exclude_rows)] = False
    r = np.where(mask, r, 0).reshape(S.m, S.b)
    return [float(x) for x in np.linalg.norm(r, axis=1)]


def block_norm_profile(v, b: int) -> list[float]:
    v = np.asarray(v)
    if v.size % b:
        raise ValueError(f"block size {b} does not divide length {v.size}")
    return [float(x) for x in np.linalg.norm(v.reshape(-1, b), axis=1)]


def log_threshold_normal(n: int, b: int) -> float:
    """``log(b^{-10 m} m^{-1/2})``, kept in log space (underflows for m >~ 20)."""
    m = n // b
    return -10 * m * math.log(b) - 0.5 * math.log(m)


def log_threshold_lsv(n: int, b: int) -> float:
    """``log(c_n^{-25 m})`` with ``c_n = 3b``."""
    return -25 * (n // b) * math.log(3 * b)


def adjacent_pairs_ok(profile, log_thr: float) -> bool:
    """Every adjacent pair of block norms has one member above ``exp(log_thr)``."""
    with np.errstate(divide="ignore"):
        lp = np.log(np.asarray(profile))
    above = lp >= log_thr
    return bool(np.all(above[:-1] | above[1:]))


@dataclass
class LsvExperimentConfig:
    n: int
    b: int
    z: complex = 1.0
    trials: int = 100
    seed: int = 0
    thresholds: list[float] = field(default_factory=list)
    atom: str = "gaussian-complex"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        check_shape(self.n, self.b)


def _lsv_trial(args):
    n, b, atom, z, seed = args
    return least_singular_value(generate(n, b, atom, seed).shift(z))


def lsv_tail_experiment(cfg: LsvExperimentConfig, jobs: int = 1,
                        fixed_matrix: PeriodicBlockBandMatrix | None = None) -> ExperimentReport:
    """Empirical tail of ``s_n(X_z)`` over independent trials.

    ``fixed_matrix`` replaces sampling by a deterministic matrix (every trial
    then reports the same value).
    """
    n, b = cfg.n, cfg.b
    if fixed_matrix is not None:
        s = least_singular_value(fixed_matrix.shift(cfg.z))
        values = [s] * cfg.trials
    else:
        args = [(n, b, cfg.atom, cfg.z, trial_seed(cfg.seed, t)) for t in range(cfg.trials)]
        values = map_trials(_lsv_trial, args, jobs)
    vals = np.array(values)
    with np.errstate(divide="ignore"):
        logs = np.log(vals)
    log_thr = log_threshold_lsv(n, b)
    c = 3 * b
    below = int(np.count_nonzero(logs <= log_thr))
    freq = below / cfg.trials
    rep = ExperimentReport("lsv", {"n": n, "b": b, "m": n // b, "z": complex(cfg.z), "trials": cfg.trials,
                                   "seed": cfg.seed, "atom": cfg.atom, "thresholds": list(cfg.thresholds)})
    rep.trials = [{"trial": t, "s_n": float(s), "log_s_n": float(l)} for t, (s, l) in enumerate(zip(vals, logs))]
    rep.summary = {
        "log_threshold": log_thr,
        "count_below_threshold": below,
        "frequency_below_threshold": freq,
        # smallest C with freq <= C / sqrt(c_n)
        "fitted_C": freq * math.sqrt(c),
        "bound_scale": 1 / math.sqrt(c),
        "median_s_n": float(np.median(vals)),
        "min_s_n": float(vals.min()),
        "max_s_n": float(vals.max()),
        "degenerate": bool(np.all(vals == vals[0])),
        "tail": {repr(float(t)): float(np.mean(vals <= t)) for t in cfg.thresholds},
    }
    return rep


def limit_block_norm(z: complex) -> float:
    """Asymptotic ``max(||U||, ||T||, ||(D)_z||)`` for blocks scaled by ``1/sqrt(3b)``.

    ``U`` and ``T`` are ``Ginibre/sqrt(3)`` with norm ``2/sqrt(3)``;
    ``(D)_z = (Ginibre - sqrt(3) z)/sqrt(3)`` has norm equal to the upper edge
    of ``nu_{sqrt(3) z}`` (square-rooted) over ``sqrt(3)``.
    """
    from .stieltjes import limit_cdf
    edge = limit_cdf(math.sqrt(3) * complex(z)).support[1]
    return max(2 / math.sqrt(3), math.sqrt(edge) / math.sqrt(3))


def _ek_trial(args):
    n, b, atom, z, K, exponent, seed = args
    holds, wit = check_event_EK(generate(n, b, atom, seed), z, EventEKParams(K, exponent))
    return holds, (str(wit) if wit else "")


def ek_failure_experiment(n: int, bandwidths, z: complex, K: float, trials: int, seed: int,
                          atom: str = "gaussian-complex", sv_floor_exponent: float = 5.0,
                          jobs: int = 1) -> ExperimentReport:
    """Frequency of the bad event (some block norm above K or s_min below b^-5) per bandwidth."""
    rep = ExperimentReport("event-EK", {"n": n, "bandwidths": list(bandwidths), "z": complex(z), "K": K,
                                        "trials": trials, "seed": seed, "atom": atom,
                                        "sv_floor_exponent": sv_floor_exponent})
    freqs = {}
    for j, b in enumerate(bandwidths):
        check_shape(n, b)
        args = [(n, b, atom, z, K, sv_floor_exponent, trial_seed(seed, j * 10 ** 6 + t)) for t in range(trials)]
        res = map_trials(_ek_trial, args, jobs)
        fails = [w for h, w in res if not h]
        freqs[b] = len(fails) / trials
        rep.trials.extend({"b": b, "trial": t, "holds": h, "witness": w} for t, (h, w) in enumerate(res))
    rep.summary = {"failure_frequency": {str(b): f for b, f in freqs.items()}}
    return rep
