"""Hermitization pipeline: disk discrepancy, Ginibre baseline, log-determinant
comparison and the truncated log integral."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .atoms import as_atom
from .bandmat import DENSE_GUARD, DenseGuardError, PeriodicBlockBandMatrix, check_shape, generate, to_dense
from .report import ExperimentReport, fmt_float, make_rng, sub_seed, trial_seed
from .spectra import EmpiricalMeasure, eigenvalues, log_abs_det, singular_values

log = logging.getLogger(__name__)

DEFAULT_Z_GRID = (0j, 1 + 0j, 1j, 1 + 1j, 2 + 0j)


def ginibre(n: int, seed, guard: int = DENSE_GUARD) -> np.ndarray:
    """``n x n`` iid standard complex Gaussian entries divided by ``sqrt(n)``."""
    if n > guard:
        raise DenseGuardError(f"n={n} exceeds the dense guard {guard}")
    rng = make_rng(seed)
    G = rng.standard_normal(2 * n * n).view(np.complex128).reshape(n, n)
    G *= 1.0 / math.sqrt(2 * n)
    return G


def _ks_against(sample: np.ndarray, cdf) -> float:
    x = np.sort(sample)
    n = x.size
    F = cdf(x)
    upper = np.searchsorted(x, x, side="right") / n
    lower = np.searchsorted(x, x, side="left") / n
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(lower - F))))


@dataclass(frozen=True)
class DiscrepancyReport:
    radial_sup: float
    angular_sup: float
    n: int
    trial: int | None = None


def disk_discrepancy(eigs, trial: int | None = None) -> DiscrepancyReport:
    """KS distances of moduli (against ``r^2`` on [0, 1]) and arguments (against uniform).

    Moduli beyond 1 are counted at ``r = 1``.
    """
    lam = np.asarray(eigs, dtype=np.complex128)
    if lam.size == 0:
        raise ValueError("no eigenvalues")
    r = np.minimum(np.abs(lam), 1.0)
    radial = _ks_against(r, lambda t: np.minimum(t, 1.0) ** 2)
    theta = np.angle(lam)
    angular = _ks_against(theta, lambda t: (t + math.pi) / (2 * math.pi))
    return DiscrepancyReport(min(radial, 1.0), min(angular, 1.0), lam.size, trial)


def log_det_gap(X, G: np.ndarray, z: complex) -> float:
    """``(1/n) log|det G_z| - (1/n) log|det X_z|``; ``nan`` when both are singular."""
    Xz = to_dense(X.shift(z)) if isinstance(X, PeriodicBlockBandMatrix) else np.asarray(X) - z * np.eye(len(X))
    n = Xz.shape[0]
    Gz = np.asarray(G) - z * np.eye(n)
    lx = log_abs_det(Xz)
    lg = log_abs_det(Gz)
    if math.isinf(lx) or math.isinf(lg):
        log.warning("log-determinant gap involves a numerically singular matrix")
    if lx == lg:
        return 0.0
    return (lg - lx) / n


def half_log_integral(svs) -> float:
    """``(1/2) int log x d nu`` for the squared-singular-value measure, i.e. ``(1/n) sum log s_i``."""
    nu = EmpiricalMeasure(np.asarray(svs, dtype=float) ** 2)
    with np.errstate(divide="ignore"):
        return 0.5 * float(np.mean(np.log(nu.atoms)))


def truncated_log_integral(nu, a: float, b: float) -> float:
    """Sum over atoms in ``[a, b]`` of ``weight * log(atom)``."""
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    atoms = nu.atoms if isinstance(nu, EmpiricalMeasure) else np.asarray(nu, dtype=float)
    w = 1.0 / atoms.size
    sel = atoms[(atoms >= a) & (atoms <= b)]
    return float(w * np.sum(np.log(sel)))


def interval_distance(mu, nu, a: float, b: float) -> float:
    """``sup_{x in [a, b]} |mu([a, x]) - nu([a, x])|`` for two empirical measures."""
    ma = mu.atoms if isinstance(mu, EmpiricalMeasure) else np.sort(np.asarray(mu, dtype=float))
    na = nu.atoms if isinstance(nu, EmpiricalMeasure) else np.sort(np.asarray(nu, dtype=float))
    pts = np.concatenate([[a, b], ma[(ma >= a) & (ma <= b)], na[(na >= a) & (na <= b)]])

    def mass(atoms, x):
        lo = np.searchsorted(atoms, a, side="left")
        return (np.searchsorted(atoms, x, side="right") - lo) / atoms.size

    return float(np.max(np.abs(mass(ma, pts) - mass(na, pts))))


def log_integral_bound(a: float, b: float, dist: float) -> float:
    return 2.0 * (abs(math.log(b)) + abs(math.log(a))) * dist


def hypothesis_flags(n: int, b: int) -> list[str]:
    flags = []
    if b < n ** (32 / 33) * math.log(n):
        flags.append("bandwidth below n^(32/33) log n: outside the proven regime")
    if b > n / 3:
        flags.append("bandwidth above n/3: fewer than three blocks")
    return flags


def circular_law_experiment(n: int, b: int, dist, z_grid=DEFAULT_Z_GRID, trials: int = 1, seed: int = 0,
                            with_log_det: bool = True, with_ginibre: bool = False) -> ExperimentReport:
    """Eigenvalues and disk discrepancy per trial; optionally the log-det gap to a
    Ginibre matrix over ``z_grid`` and a same-seed Ginibre discrepancy baseline.

    Trial ``t`` draws the band matrix from ``trial_seed(seed, t)`` and the
    Ginibre matrix from its child stream ``(1,)``.
    """
    dist = as_atom(dist)
    check_shape(n, b)
    rep = ExperimentReport("esd", {"n": n, "b": b, "atom": dist.kind, "trials": trials, "seed": seed,
                                   "z_grid": [complex(z) for z in z_grid], "with_log_det": with_log_det,
                                   "with_ginibre": with_ginibre})
    rep.flags = hypothesis_flags(n, b)
    eig_rows = []
    for t in range(trials):
        ts = trial_seed(seed, t)
        X = generate(n, b, dist, ts)
        lam = eigenvalues(to_dense(X, complex_out=False), overwrite=True)
        d = disk_discrepancy(lam, t)
        row = {"trial": t, "radial_sup": d.radial_sup, "angular_sup": d.angular_sup}
        G = None
        if with_ginibre or with_log_det:
            G = ginibre(n, sub_seed(ts, 1))
        if with_ginibre:
            gd = disk_discrepancy(eigenvalues(G.copy(), overwrite=True), t)
            row.update(ginibre_radial_sup=gd.radial_sup, ginibre_angular_sup=gd.angular_sup)
        if with_log_det:
            for z in z_grid:
                row[f"log_det_gap[{complex(z)}]"] = log_det_gap(X, G, z)
        rep.trials.append(row)
        eig_rows.append(lam)
        del G
    rad = [r["radial_sup"] for r in rep.trials]
    ang = [r["angular_sup"] for r in rep.trials]
    rep.summary = {"radial_sup_mean": float(np.mean(rad)), "angular_sup_mean": float(np.mean(ang))}
    if with_ginibre:
        rep.summary["ginibre_radial_sup_mean"] = float(np.mean([r["ginibre_radial_sup"] for r in rep.trials]))
        rep.summary["ginibre_angular_sup_mean"] = float(np.mean([r["ginibre_angular_sup"] for r in rep.trials]))
    rep.arrays["eigenvalues"] = eig_rows
    return rep


def eigenvalues_csv(eigs_by_trial) -> str:
    lines = ["trial,re,im"]
    for t, lam in enumerate(eigs_by_trial):
        lines.extend(f"{t},{fmt_float(x.real)},{fmt_float(x.imag)}" for x in np.asarray(lam, dtype=complex))
    return "\n".join(lines) + "\n"


def plotdata(eigs_by_trial, header: str = "") -> str:
    """Whitespace-delimited ``re im`` lines with ``#`` header comments."""
    out = [header.rstrip("\n")] if header else []
    out.append("# re im")
    for t, lam in enumerate(eigs_by_trial):
        out.append(f"# trial {t}")
        out.extend(f"{fmt_float(x.real)} {fmt_float(x.imag)}" for x in np.asarray(lam, dtype=complex))
    return "\n".join(out) + "\n"
