"""Executable checks of the resolvent, trace and moment identities used in the
Stieltjes-transform argument.

Every check returns a :class:`LemmaCheckResult`.  ``max_violation`` is the
worst signed slack over all instances: for an inequality ``lhs <= bound`` it
is ``lhs - bound``, for an identity the (scaled) discrepancy.  A result passes
when ``max_violation <= tolerance``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .atoms import as_atom, draw, moment, pseudo_variance
from .bandmat import (PeriodicBlockBandMatrix, ShiftedMatrix, conjugate_by_symmetry, generate,
                      structural_mask, to_dense)
from .girko import interval_distance, log_integral_bound, truncated_log_integral
from .report import make_rng, sub_seed
from .spectra import RANK_RTOL, EmpiricalMeasure

# roundoff allowance for inequalities that can be tight
INEQ_TOL = 1e-9


@dataclass
class LemmaCheckResult:
    lemma_id: str
    instances: int
    max_violation: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def merge(self, other: "LemmaCheckResult") -> "LemmaCheckResult":
        if other.lemma_id != self.lemma_id:
            raise ValueError("cannot merge results of different checks")
        worst = self if self.max_violation - self.tolerance >= other.max_violation - other.tolerance else other
        return LemmaCheckResult(self.lemma_id, self.instances + other.instances,
                                worst.max_violation, worst.tolerance, worst.details)


def combine(results) -> LemmaCheckResult:
    results = list(results)
    out = results[0]
    for r in results[1:]:
        out = out.merge(r)
    return out


def _resolvent(A: np.ndarray, zeta: complex) -> np.ndarray:
    return np.linalg.inv(A - zeta * np.eye(A.shape[0]))


def sherman_morrison_check(A, v) -> LemmaCheckResult:
    """``v^*(A + v v^*)^{-1} = v^* A^{-1} / (1 + v^* A^{-1} v)``.

    Violation is the discrepancy relative to ``||A^{-1}|| ||v||``.
    """
    A = np.asarray(A, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    Ainv = np.linalg.inv(A)
    lhs = v.conj() @ np.linalg.inv(A + np.outer(v, v.conj()))
    denom = 1 + v.conj() @ Ainv @ v
    if denom == 0:
        raise np.linalg.LinAlgError("A + v v^* is singular")
    rhs = (v.conj() @ Ainv) / denom
    scale = np.linalg.norm(Ainv, 2) * np.linalg.norm(v)
    err = float(np.linalg.norm(lhs - rhs))
    viol = err / scale if scale > 0 else err
    return LemmaCheckResult("sherman-morrison", 1, viol, 1e-10, {"abs_error": err, "lhs": lhs, "rhs": rhs})


def trace_perturbation_check(A, v, zeta: complex) -> LemmaCheckResult:
    """``|tr[(A + v v^* - zeta)^{-1} - (A - zeta)^{-1}]| <= 1/|Im zeta|`` for ``A >= 0``."""
    A = np.asarray(A, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128)
    zeta = complex(zeta)
    if zeta.imag == 0:
        raise ValueError("zeta must be off the real axis")
    diff = np.trace(_resolvent(A + np.outer(v, v.conj()), zeta)) - np.trace(_resolvent(A, zeta))
    bound = 1.0 / abs(zeta.imag)
    return LemmaCheckResult("trace-perturbation", 1, float(abs(diff) - bound), INEQ_TOL * bound,
                            {"lhs": float(abs(diff)), "bound": bound})


def quadratic_form_second_moment(A, index_set, dist) -> float:
    """Exact ``E|v^* A v - sum_{i in I} a_ii|^2`` with ``v_i = xi_i 1{i in I}``.

    Expanding the square, only pairings survive:
    ``(E|xi|^4 - 1) sum |a_ii|^2 + sum_{i != j} (|a_ij|^2 + a_ij conj(a_ji) |E xi^2|^2)``.
    """
    dist = as_atom(dist)
    A = np.asarray(A, dtype=np.complex128)
    idx = np.asarray(sorted(index_set))
    B = A[np.ix_(idx, idx)]
    diag = np.diag(B)
    off = B - np.diag(diag)
    pv = abs(pseudo_variance(dist)) ** 2
    total = (moment(dist, 4) - 1) * np.sum(np.abs(diag) ** 2)
    total += np.sum(np.abs(off) ** 2) + pv * np.real(np.sum(off * off.T.conj()))
    return float(np.real(total))


def _qf_samples(A, idx, dist, trials, seed) -> np.ndarray:
    A = np.asarray(A, dtype=np.complex128)
    B = A[np.ix_(idx, idx)]
    xi = draw(as_atom(dist), make_rng(seed), (trials, len(idx)))
    quad = np.einsum("ti,ij,tj->t", xi.conj(), B, xi)
    return np.abs(quad - np.trace(B))


def quadratic_form_moment_check(dist, A, index_set, p: int, trials: int, seed, C_max: float = 4.0
                                ) -> LemmaCheckResult:
    """Monte-Carlo ``E|v^* A v - sum_I a_ii|^p`` against the bound
    ``C |I|^{p/2} E|xi|^{2p} ||A||^p`` with ``C <= C_max``; for ``p = 2`` also
    against the exact second moment within five standard errors.

    The violation is the larger of ``C_fit - C_max`` and
    ``|MC - exact| - 5 se`` (the latter only for ``p = 2``).
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if trials < 10 ** 4:
        raise ValueError("at least 10^4 trials are required")
    dist = as_atom(dist)
    idx = np.asarray(sorted(index_set))
    dev = _qf_samples(A, idx, dist, trials, seed) ** p
    est = float(dev.mean())
    se = float(dev.std(ddof=1) / math.sqrt(trials))
    normA = float(np.linalg.norm(np.asarray(A), 2))
    scale = len(idx) ** (p / 2) * moment(dist, 2 * p) * normA ** p
    C_fit = est / scale if scale > 0 else 0.0
    viol = C_fit - C_max
    details = {"estimate": est, "standard_error": se, "C_fit": C_fit, "C_max": C_max}
    if p == 2:
        exact = quadratic_form_second_moment(A, idx, dist)
        details["exact"] = exact
        viol = max(viol, abs(est - exact) - 5 * se - 1e-12 * max(1.0, exact))
    return LemmaCheckResult("quadratic-form-moment", 1, float(viol), 0.0, details)


def numerical_rank(A) -> int:
    s = np.linalg.svd(np.asarray(A), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def rank_perturbation_partial_trace_check(P, Q, zeta: complex, index_set) -> LemmaCheckResult:
    """``|sum_I (P - zeta)^{-1}_kk - sum_I (Q - zeta)^{-1}_kk| <= 2 rank(P - Q)/|Im zeta|``."""
    zeta = complex(zeta)
    P = np.asarray(P, dtype=np.complex128)
    Q = np.asarray(Q, dtype=np.complex128)
    idx = np.asarray(sorted(index_set), dtype=int)
    d = np.diag(_resolvent(P, zeta))[idx].sum() - np.diag(_resolvent(Q, zeta))[idx].sum()
    r = numerical_rank(P - Q)
    bound = 2.0 * r / abs(zeta.imag)
    return LemmaCheckResult("rank-perturbation", 1, float(abs(d) - bound), INEQ_TOL * max(bound, 1.0),
                            {"lhs": float(abs(d)), "rank": r, "bound": bound})


def azuma_constant(l: int) -> float:
    """``C(l) = l Gamma(l/2) 2^l`` as it falls out of integrating the Azuma tail."""
    return l * math.gamma(l / 2) * 2.0 ** l


def rademacher_walk_moment(c, l: int) -> float:
    """Exact ``E|sum eps_k c_k|^l`` for ``l`` in {2, 4} (closed form)."""
    c = np.asarray(c, dtype=float)
    s2 = float(np.sum(c ** 2))
    if l == 2:
        return s2
    if l == 4:
        return 3 * s2 ** 2 - 2 * float(np.sum(c ** 4))
    raise ValueError("closed form only for l = 2, 4")


def azuma_moment_check(increments_bound, l: int, trials: int, seed) -> LemmaCheckResult:
    """Bounded-increment martingale ``sum_k eps_k c_k`` (``eps`` fair signs).

    Violation: the larger of ``exact - C(l) (sum c_k^2)^{l/2}`` (closed form,
    ``l`` in {2, 4}) and ``|MC - exact| - 5 se``.  For other even ``l`` only
    the Monte-Carlo value is compared against the bound.
    """
    if l <= 0 or l % 2:
        raise ValueError("l must be a positive even integer")
    c = np.asarray(increments_bound, dtype=float)
    rng = make_rng(seed)
    eps = rng.integers(0, 2, size=(trials, c.size), dtype=np.int8) * 2 - 1
    S = eps @ c
    vals = np.abs(S) ** l
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = azuma_constant(l) * float(np.sum(c ** 2)) ** (l / 2)
    details = {"estimate": est, "standard_error": se, "bound": bound, "C(l)": azuma_constant(l)}
    if l in (2, 4):
        exact = rademacher_walk_moment(c, l)
        details["exact"] = exact
        viol = max(exact - bound, abs(est - exact) - 5 * se)
    else:
        viol = est - bound
    return LemmaCheckResult("azuma-moment", 1, float(viol), 0.0, details)


def _shifted_dense(M) -> np.ndarray:
    if isinstance(M, (ShiftedMatrix, PeriodicBlockBandMatrix)):
        return to_dense(M)
    return np.asarray(M, dtype=np.complex128)


def zeta_m_identity_check(M, zeta: complex) -> LemmaCheckResult:
    """``zeta m_n(zeta) = -(1/n) sum_k 1/alpha_k`` with
    ``alpha_k = 1 + y_k^* [P^{(k)}]^{-1} y_k``, ``y_k`` column ``k`` of ``X_z`` and
    ``P^{(k)}`` built from ``X_z`` with column ``k`` zeroed."""
    Xz = _shifted_dense(M)
    n = Xz.shape[0]
    if n > 100:
        raise ValueError("zeta-m identity check is limited to n <= 100")
    zeta = complex(zeta)
    lhs = zeta * np.trace(_resolvent(Xz @ Xz.conj().T, zeta)) / n
    alphas = np.empty(n, dtype=np.complex128)
    for k in range(n):
        Xk = Xz.copy()
        y = Xk[:, k].copy()
        Xk[:, k] = 0
        Pk = Xk @ Xk.conj().T - zeta * np.eye(n)
        alphas[k] = 1 + y.conj() @ np.linalg.solve(Pk, y)
    rhs = -np.mean(1.0 / alphas)
    return LemmaCheckResult("zeta-m-identity", 1, float(abs(lhs - rhs)), 1e-8, {"lhs": lhs, "rhs": rhs})


def _diag_resolvent(X: PeriodicBlockBandMatrix, z: complex, zeta: complex) -> np.ndarray:
    Xz = to_dense(X.shift(z))
    return np.diag(_resolvent(Xz @ Xz.conj().T, zeta))


def diagonal_resolvent_symmetry_check(n: int, b: int, dist, zeta: complex, z: complex, trials: int, seed,
                                      sigma_gate: float = 5.0) -> LemmaCheckResult:
    """Equal expectations of the diagonal resolvent entries of ``X_z X_z^* - zeta``.

    Structural part (exact): the within-block swap and the cyclic block shift
    keep the band pattern and permute the resolvent diagonal accordingly.
    Statistical part: pairwise differences of the per-index sample means,
    in units of their pooled standard error, stay below ``sigma_gate``.
    Violation is ``max z-score - sigma_gate`` (or ``+inf`` on a structural
    failure).  A two-sample KS p-value for entries 0 and b is reported.
    """
    if trials < 200:
        raise ValueError("at least 200 trials are required")
    dist = as_atom(dist)
    mask = structural_mask(n, b)
    samples = np.empty((trials, n), dtype=np.complex128)
    structural_ok = True
    for t in range(trials):
        X = generate(n, b, dist, sub_seed(seed, t))
        d = _diag_resolvent(X, z, zeta)
        samples[t] = d
        if t == 0:
            i, j = 0, b - 1
            Xs = conjugate_by_symmetry(X, "swap", i, j)
            Xc = conjugate_by_symmetry(X, "cyclic")
            for Y in (Xs, Xc):
                structural_ok &= bool(np.array_equal(to_dense(Y) != 0, mask))
            ds = _diag_resolvent(Xs, z, zeta)
            perm = np.arange(n)
            perm[[i, j]] = [j, i]
            structural_ok &= bool(np.allclose(ds, d[perm], rtol=1e-10, atol=1e-12))
            dc = _diag_resolvent(Xc, z, zeta)
            structural_ok &= bool(np.allclose(dc, np.roll(d, b), rtol=1e-10, atol=1e-12))
    mean = samples.mean(axis=0)
    var = np.mean(np.abs(samples - mean) ** 2, axis=0) * trials / (trials - 1)
    se2 = var / trials
    diff = np.abs(mean[:, None] - mean[None, :])
    pooled = np.sqrt(se2[:, None] + se2[None, :])
    with np.errstate(invalid="ignore", divide="ignore"):
        zs = np.where(pooled > 0, diff / pooled, 0.0)
    max_z = float(zs.max())
    ks_p = float(stats.ks_2samp(samples[:, 0].real, samples[:, b].real).pvalue)
    viol = max_z - sigma_gate if structural_ok else math.inf
    return LemmaCheckResult("diagonal-resolvent-symmetry", trials, viol, 0.0,
                            {"max_pairwise_z": max_z, "sigma_gate": sigma_gate, "structural_ok": structural_ok,
                             "ks_pvalue_entry0_vs_entryb": ks_p, "max_se": float(np.sqrt(se2.max()))})


def log_integral_check(mu, nu, a: float, b: float) -> LemmaCheckResult:
    """Truncated log integrals of two measures differ by at most
    ``2(|log b| + |log a|) ||mu - nu||_[a,b]``."""
    mu = mu if isinstance(mu, EmpiricalMeasure) else EmpiricalMeasure(np.asarray(mu, dtype=float))
    nu = nu if isinstance(nu, EmpiricalMeasure) else EmpiricalMeasure(np.asarray(nu, dtype=float))
    lhs = abs(truncated_log_integral(mu, a, b) - truncated_log_integral(nu, a, b))
    bound = log_integral_bound(a, b, interval_distance(mu, nu, a, b))
    return LemmaCheckResult("log-integral", 1, float(lhs - bound), INEQ_TOL * max(bound, 1.0),
                            {"lhs": lhs, "bound": bound})


# -- batch runners -----------------------------------------------------------

def _rand_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def run_sherman_morrison(instances: int, seed, n: int = 10) -> LemmaCheckResult:
    rng = make_rng(seed)
    out = []
    for _ in range(instances):
        A = _rand_complex(rng, (n, n)) + n ** 0.5 * np.eye(n)
        out.append(sherman_morrison_check(A, _rand_complex(rng, n)))
    return combine(out)


def _random_zeta(rng) -> complex:
    return complex(rng.uniform(-5, 10), rng.choice([-1, 1]) * 10 ** rng.uniform(-2, 1))


def run_trace_perturbation(instances: int, seed, n: int = 20) -> LemmaCheckResult:
    rng = make_rng(seed)
    out = []
    for _ in range(instances):
        B = _rand_complex(rng, (n, n)) / math.sqrt(n)
        A = B @ B.conj().T
        v = _rand_complex(rng, n) * 10 ** rng.uniform(-1, 1)
        out.append(trace_perturbation_check(A, v, _random_zeta(rng)))
    return combine(out)


def run_rank_perturbation(instances: int, seed, n: int = 20) -> LemmaCheckResult:
    rng = make_rng(seed)
    out = []
    for t in range(instances):
        r = 1 + t % 3
        B = _rand_complex(rng, (n, n)) / math.sqrt(n)
        P = B @ B.conj().T
        V = _rand_complex(rng, (n, r))
        Q = P + V @ V.conj().T
        idx = np.flatnonzero(rng.random(n) < 0.5)
        out.append(rank_perturbation_partial_trace_check(P, Q, _random_zeta(rng), idx))
    return combine(out)


def run_quadratic_form(instances: int, seed, trials: int = 10 ** 4, n: int = 8) -> LemmaCheckResult:
    rng = make_rng(seed)
    kinds = ("gaussian-complex", "gaussian-real", "rademacher")
    out = []
    for t in range(instances):
        A = _rand_complex(rng, (n, n))
        idx = np.flatnonzero(rng.random(n) < 0.6)
        if idx.size == 0:
            idx = np.array([0])
        out.append(quadratic_form_moment_check(kinds[t % 3], A, idx, 1 + t % 2, trials, sub_seed(seed, 1, t)))
    return combine(out)


def run_zeta_m(instances: int, seed, n: int = 20, b: int = 4) -> LemmaCheckResult:
    rng = make_rng(seed)
    out = []
    for t in range(instances):
        X = generate(n, b, "gaussian-complex", sub_seed(seed, 1, t))
        z = complex(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
        out.append(zeta_m_identity_check(X.shift(z), complex(rng.uniform(-1, 4), rng.uniform(0.1, 2))))
    return combine(out)


def run_log_integral(instances: int, seed) -> LemmaCheckResult:
    rng = make_rng(seed)
    out = []
    for _ in range(instances):
        a = 10 ** rng.uniform(-3, 2.9)
        b = 10 ** rng.uniform(np.log10(a) + 0.01, 3)
        mu = 10 ** rng.uniform(-3.5, 3.5, size=rng.integers(1, 60))
        nu = 10 ** rng.uniform(-3.5, 3.5, size=rng.integers(1, 60))
        out.append(log_integral_check(mu, nu, a, b))
    return combine(out)


def verify_all(trials: int = 1000, seed: int = 7) -> list[LemmaCheckResult]:
    """The full suite; ``trials`` sets the instance count of the cheap checks."""
    k = max(1, trials)
    return [
        run_sherman_morrison(k, sub_seed(seed, 0)),
        run_trace_perturbation(k, sub_seed(seed, 1)),
        run_rank_perturbation(k, sub_seed(seed, 2)),
        run_quadratic_form(max(1, k // 10), sub_seed(seed, 3)),
        azuma_moment_check(np.ones(100), 2, 10 ** 5, sub_seed(seed, 4, 2)),
        azuma_moment_check(np.ones(100), 4, 10 ** 5, sub_seed(seed, 4, 4)),
        run_zeta_m(max(1, k // 100), sub_seed(seed, 5)),
        diagonal_resolvent_symmetry_check(60, 6, "gaussian-complex", 1 + 1j, 1.0, max(200, k // 2),
                                          sub_seed(seed, 6)),
        run_log_integral(k, sub_seed(seed, 7)),
    ]
