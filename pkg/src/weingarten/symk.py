"""Elementary symmetric function kernel.

Provides sigma_k and its exclusion values sigma_k(lam | i), the classical
identity bundle relating them, the positivity cones

    Gamma_k = { lam : sigma_1(lam) > 0, ..., sigma_k(lam) > 0 },

the concave root F = sigma_k^{1/k} with analytic gradient and Hessian, the
quadratic form of F as a function of a symmetric matrix argument, and the
Newton-MacLaurin inequality check.

sigma_k is evaluated by the stable incremental-product recurrence; subset
enumeration is kept in the test suite as an independent oracle.
Convention: sigma_0 = 1 and sigma_j = 0 for j > n (empty sum).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

__all__ = [
    "InadmissibleError",
    "SigmaEval",
    "FEval",
    "sigma_all",
    "sigma",
    "sigma_excl",
    "identity_residuals",
    "gamma_cone_contains",
    "F_eval",
    "quadratic_form_terms",
    "quadratic_form",
    "newton_maclaurin_check",
    "trace_Fij",
    "evaluate",
]

# Relative gap below which an off-diagonal difference quotient switches to
# its analytic limit.
_EQUAL_EIGENVALUE_RTOL = 1e-9


class InadmissibleError(ValueError):
    """The curvature vector lies outside the required positivity cone."""


def _as_lam(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size < 1 or not np.all(np.isfinite(lam)):
        raise ValueError("lam must be a nonempty finite vector")
    return lam


def sigma_all(lam) -> np.ndarray:
    """All elementary symmetric functions e_0..e_n of lam, by the product
    recurrence prod_i (1 + lam_i t) = sum_k e_k t^k."""
    lam = _as_lam(lam)
    e = np.zeros(lam.size + 1)
    e[0] = 1.0
    for x in lam:
        e[1:] = e[1:] + x * e[:-1]
    return e


def _sig(e: np.ndarray, j: int) -> float:
    if j < 0:
        return 0.0
    return float(e[j]) if j < e.size else 0.0


def sigma(lam, k: int) -> float:
    """sigma_k(lam); sigma_0 = 1."""
    lam = _as_lam(lam)
    if not 0 <= k <= lam.size:
        raise ValueError(f"k = {k} out of range 0..{lam.size}")
    return float(sigma_all(lam)[k])


def _sigma_excl_table(lam: np.ndarray) -> np.ndarray:
    """Row i holds e_0..e_{n-1} of lam with entry i removed, assembled from
    prefix/suffix polynomial products (one pass instead of n recomputations)."""
    n = lam.size
    prefix = np.zeros((n + 1, n + 1))
    prefix[0, 0] = 1.0
    for i in range(n):
        prefix[i + 1] = prefix[i]
        prefix[i + 1, 1:] += lam[i] * prefix[i, :-1]
    suffix = np.zeros((n + 1, n + 1))
    suffix[n, 0] = 1.0
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1]
        suffix[i, 1:] += lam[i] * suffix[i + 1, :-1]
    table = np.zeros((n, n))
    for i in range(n):
        table[i] = np.convolve(prefix[i, :i + 1], suffix[i + 1, : n - i])
    return table


def sigma_excl(lam, k: int, i: int) -> float:
    """sigma_k evaluated with lam_i set to zero (equivalently e_k of the
    remaining entries)."""
    lam = _as_lam(lam)
    if not 0 <= i < lam.size:
        raise ValueError(f"index i = {i} out of range 0..{lam.size - 1}")
    if not 0 <= k <= lam.size:
        raise ValueError(f"k = {k} out of range 0..{lam.size}")
    if k >= lam.size:
        return 0.0
    return float(_sigma_excl_table(lam)[i, k])


def _rel_residual(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def identity_residuals(lam, k: int) -> np.ndarray:
    """Relative residuals of the five classical sigma_k identities.

    For 0 <= k <= n-1 (with sigma_j = 0 for j > n):

      1. sigma_{k+1} = sigma_{k+1}(lam|i) + lam_i sigma_k(lam|i)   (max over i)
      2. sum_i lam_i sigma_k(lam|i) = (k+1) sigma_{k+1}
      3. sum_i sigma_k(lam|i) = (n-k) sigma_k
      4. d sigma_{k+1} / d lam_i = sigma_k(lam|i)                  (max over i)
      5. sum_i lam_i^2 sigma_k(lam|i) = sigma_1 sigma_{k+1} - (k+2) sigma_{k+2}

    Identity 4 is probed with a centred difference, which is exact because
    sigma_{k+1} is multilinear.  All residuals vanish to round-off.
    """
    lam = _as_lam(lam)
    n = lam.size
    if not 0 <= k <= n - 1:
        raise ValueError(f"k = {k} out of range 0..{n - 1}")
    e = sigma_all(lam)
    table = _sigma_excl_table(lam)
    excl_k = table[:, k].copy()
    excl_k1 = table[:, k + 1].copy() if k + 1 < n else np.zeros(n)

    r1 = max(
        _rel_residual(_sig(e, k + 1), excl_k1[i] + lam[i] * excl_k[i]) for i in range(n)
    )
    r2 = _rel_residual(float(np.sum(lam * excl_k)), (k + 1) * _sig(e, k + 1))
    r3 = _rel_residual(float(np.sum(excl_k)), (n - k) * _sig(e, k))

    eps = 0.5
    r4 = 0.0
    for i in range(n):
        lp, lm = lam.copy(), lam.copy()
        lp[i] += eps
        lm[i] -= eps
        deriv = (_sig(sigma_all(lp), k + 1) - _sig(sigma_all(lm), k + 1)) / (2.0 * eps)
        r4 = max(r4, _rel_residual(deriv, excl_k[i]))

    r5 = _rel_residual(
        float(np.sum(lam ** 2 * excl_k)),
        _sig(e, 1) * _sig(e, k + 1) - (k + 2) * _sig(e, k + 2),
    )
    return np.array([r1, r2, r3, r4, r5])


def gamma_cone_contains(lam, k: int) -> bool:
    """True iff sigma_1(lam), ..., sigma_k(lam) are all strictly positive."""
    lam = _as_lam(lam)
    if not 1 <= k <= lam.size:
        raise ValueError(f"k = {k} out of range 1..{lam.size}")
    e = sigma_all(lam)
    return bool(np.all(e[1 : k + 1] > 0.0))


@dataclasses.dataclass
class FEval:
    """F = sigma_k^{1/k} with gradient P_i and dense Hessian in lam."""

    F: float
    grad: np.ndarray
    hess: np.ndarray


def F_eval(lam, k: int) -> FEval:
    """Evaluate F = sigma_k^{1/k} with analytic first and second derivatives.

    Uses d sigma_k / d lam_i = sigma_{k-1}(lam|i) and
    d^2 sigma_k / d lam_i d lam_j = sigma_{k-2}(lam|i,j) for i != j (zero on
    the diagonal, sigma_k being multilinear).  Requires lam in Gamma_k.
    """
    lam = _as_lam(lam)
    n = lam.size
    if not 1 <= k <= n:
        raise ValueError(f"k = {k} out of range 1..{n}")
    if not gamma_cone_contains(lam, k):
        raise InadmissibleError(f"lam = {lam.tolist()} is not in Gamma_{k}")
    S = sigma(lam, k)
    Si = _sigma_excl_table(lam)[:, k - 1].copy()
    Sij = np.zeros((n, n))
    if k >= 2:
        for i in range(n):
            for j in range(i + 1, n):
                reduced = np.delete(lam, (i, j))
                val = _sig(sigma_all(reduced) if reduced.size else np.array([1.0]), k - 2)
                Sij[i, j] = Sij[j, i] = val
    inv_k = 1.0 / k
    F = S ** inv_k
    grad = inv_k * S ** (inv_k - 1.0) * Si
    hess = inv_k * (inv_k - 1.0) * S ** (inv_k - 2.0) * np.outer(Si, Si)
    hess += inv_k * S ** (inv_k - 1.0) * Sij
    return FEval(F=float(F), grad=grad, hess=hess)


def quadratic_form_terms(lam, k: int, eta) -> tuple[float, float]:
    """The two pieces of the second derivative of F under a symmetric
    perturbation eta of diag(lam):

        sum_{ij} (d^2 F / d lam_i d lam_j) eta_ii eta_jj
      + sum_{i != j} ((P_i - P_j) / (lam_i - lam_j)) eta_ij^2,

    where the difference quotient is replaced by its analytic limit
    F_ii - F_ij when lam_i and lam_j coincide to relative tolerance 1e-9.
    Returns (diagonal Hessian term, difference-quotient term); the second is
    nonpositive on Gamma_k by concavity.
    """
    lam = _as_lam(lam)
    n = lam.size
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (n, n) or not np.allclose(eta, eta.T, atol=0.0, rtol=0.0):
        raise ValueError("eta must be a symmetric matrix matching lam")
    fe = F_eval(lam, k)
    d = np.diag(eta)
    hess_term = float(d @ fe.hess @ d)
    dq_term = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            gap = abs(lam[i] - lam[j])
            if gap < _EQUAL_EIGENVALUE_RTOL * max(1.0, abs(lam[i]), abs(lam[j])):
                quotient = fe.hess[i, i] - fe.hess[i, j]
            else:
                quotient = (fe.grad[i] - fe.grad[j]) / (lam[i] - lam[j])
            dq_term += 2.0 * quotient * eta[i, j] ** 2
    return hess_term, dq_term


def quadratic_form(lam, k: int, eta) -> float:
    """Full second derivative of F(diag(lam) + s eta) at s = 0."""
    hess_term, dq_term = quadratic_form_terms(lam, k, eta)
    return hess_term + dq_term


def newton_maclaurin_check(lam, k: int) -> tuple[bool, float]:
    """Newton inequality at order k:

        (sigma_{k+1} / C(n,k+1)) (sigma_{k-1} / C(n,k-1)) <= (sigma_k / C(n,k))^2.

    Returns (holds?, slack = RHS - LHS).  Valid for 1 <= k <= n-1; holds for
    every real lam, with equality on constant vectors.
    """
    lam = _as_lam(lam)
    n = lam.size
    if not 1 <= k <= n - 1:
        raise ValueError(f"k = {k} out of range 1..{n - 1}")
    e = sigma_all(lam)
    lhs = (_sig(e, k + 1) / math.comb(n, k + 1)) * (_sig(e, k - 1) / math.comb(n, k - 1))
    rhs = (_sig(e, k) / math.comb(n, k)) ** 2
    slack = rhs - lhs
    scale = max(1.0, abs(lhs), abs(rhs))
    return bool(slack >= -1e-12 * scale), float(slack)


def trace_Fij(lam, k: int) -> float:
    """Trace of the derivative of F with respect to the matrix argument;
    equals sum_i P_i = (n-k+1) sigma_{k-1} / (k F^{k-1}), strictly positive
    on Gamma_k."""
    return float(np.sum(F_eval(lam, k).grad))


@dataclasses.dataclass
class SigmaEval:
    """Bundle of sigma data at a curvature vector: values through order
    min(n, k+2), exclusion values of order k-1, F = sigma_k^{1/k} with its
    derivatives, and cone membership flags for Gamma_1..Gamma_k."""

    k: int
    sigmas: np.ndarray
    grad_excl: np.ndarray
    F: float
    P: np.ndarray
    P_hess: np.ndarray
    cone_flags: np.ndarray


def evaluate(lam, k: int) -> SigmaEval:
    """Convenience bundle; raises :class:`InadmissibleError` off Gamma_k."""
    lam = _as_lam(lam)
    fe = F_eval(lam, k)
    e = sigma_all(lam)
    flags = np.array([gamma_cone_contains(lam, l) for l in range(1, k + 1)])
    grad_excl = _sigma_excl_table(lam)[:, k - 1].copy()
    top = min(lam.size, k + 2)
    return SigmaEval(
        k=k,
        sigmas=e[: top + 1].copy(),
        grad_excl=grad_excl,
        F=fe.F,
        P=fe.grad,
        P_hess=fe.hess,
        cone_flags=flags,
    )
