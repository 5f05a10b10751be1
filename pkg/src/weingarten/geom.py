"""Extrinsic geometry of spacelike radial graphs over the hyperbolic chart.

A positive graph function u on the chart defines the hypersurface swept out
by u(x) * x, with x on the unit hyperboloid in Minkowski space
(metric dx_1^2 + ... + dx_n^2 - dx_{n+1}^2).  Per node this module computes
the lapse, the induced metric and its inverse, the second fundamental form,
the principal curvatures, the support function and the squared curvature
norm.  Everything is vectorised over (n_rho, n_theta) arrays and works
equally on scalars.

Sign conventions: the normal is the future-directed timelike unit normal,
and the constant graph u = R has principal curvatures +1/R.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import hchart
from .hchart import Grid, as_values

__all__ = [
    "InvalidGraphError",
    "NotSpacelikeError",
    "ExtrinsicState",
    "spacelike_gap",
    "lapse",
    "induced_metric",
    "second_fundamental_form",
    "principal_curvatures",
    "support_function",
    "norm_A",
    "extrinsic_state",
    "embed",
    "hyperboloid_frame",
    "ambient_tangents",
    "ambient_normal",
    "lorentz_inner",
]


class InvalidGraphError(ValueError):
    """The graph function is not strictly positive."""


class NotSpacelikeError(ValueError):
    """The graph fails |Du|/u < 1 somewhere; carries the offending node."""

    def __init__(self, message: str, node=None, gap=None):
        super().__init__(message)
        self.node = node
        self.gap = gap


def _worst_node(ratio: np.ndarray):
    flat = int(np.argmax(ratio))
    return flat, float(ratio.flat[flat])


def lapse(u, grad_sq):
    """Lapse v = sqrt(1 - |Du|^2 / u^2); requires u > 0 and |Du|/u < 1."""
    u = np.asarray(u, dtype=float)
    grad_sq = np.asarray(grad_sq, dtype=float)
    if np.any(u <= 0.0):
        raise InvalidGraphError("graph function must be strictly positive")
    ratio = grad_sq / u ** 2
    if np.any(ratio >= 1.0):
        node, worst = _worst_node(np.atleast_1d(ratio))
        raise NotSpacelikeError(
            f"|Du|^2/u^2 = {worst:.6g} >= 1 at flat node {node}", node=node, gap=worst
        )
    return np.sqrt(1.0 - ratio)


def spacelike_gap(u, grid: Grid) -> float:
    """max over nodes of |Du|/u; the graph is spacelike iff this is < 1."""
    U = as_values(u)
    if np.any(U <= 0.0):
        bad = int(np.argmax(U <= 0.0))
        raise InvalidGraphError(f"graph function not positive at {grid.node_label(bad)}")
    _, _, grad_sq = hchart.covariant_gradient(U, grid)
    return float(np.sqrt(np.max(grad_sq / U ** 2)))


def induced_metric(u, u_rho, u_theta, sinh_rho):
    """Induced metric g = u^2 sigma - du (x) du and its closed-form inverse.

    Returns (g_rr, g_rt, g_tt, ginv_rr, ginv_rt, ginv_tt).  The inverse is

        g^{ij} = u^{-2} (sigma^{ij} + u^i u^j / (u^2 v^2)),

    with indices raised by the chart metric.
    """
    u = np.asarray(u, dtype=float)
    s2 = np.asarray(sinh_rho, dtype=float) ** 2
    grad_sq = u_rho ** 2 + u_theta ** 2 / s2
    v = lapse(u, grad_sq)
    g_rr = u ** 2 - u_rho ** 2
    g_rt = -u_rho * u_theta
    g_tt = u ** 2 * s2 - u_theta ** 2
    u2v2 = u ** 2 * v ** 2
    inv_scale = 1.0 / u ** 2
    ginv_rr = inv_scale * (1.0 + u_rho ** 2 / u2v2)
    ginv_rt = inv_scale * (u_rho * u_theta / s2) / u2v2
    ginv_tt = inv_scale * (1.0 / s2 + (u_theta / s2) ** 2 / u2v2)
    return g_rr, g_rt, g_tt, ginv_rr, ginv_rt, ginv_tt


def second_fundamental_form(u, u_rho, u_theta, H_rr, H_rt, H_tt, v, sinh_rho):
    """Second fundamental form h_ij = (u_ij + u sigma_ij - (2/u) u_i u_j) / v."""
    s2 = np.asarray(sinh_rho, dtype=float) ** 2
    h_rr = (H_rr + u - 2.0 * u_rho ** 2 / u) / v
    h_rt = (H_rt - 2.0 * u_rho * u_theta / u) / v
    h_tt = (H_tt + u * s2 - 2.0 * u_theta ** 2 / u) / v
    return h_rr, h_rt, h_tt


def _pencil_coefficients(h_rr, h_rt, h_tt, g_rr, g_rt, g_tt):
    # det(h - lam g) = a lam^2 + b lam + c
    a = g_rr * g_tt - g_rt ** 2
    b = -(h_rr * g_tt + h_tt * g_rr - 2.0 * h_rt * g_rt)
    c = h_rr * h_tt - h_rt ** 2
    return a, b, c


def principal_curvatures(h_rr, h_rt, h_tt, g_rr, g_rt, g_tt):
    """Eigenvalues of h relative to g, sorted descending.

    Solved in closed form from det(h - lam g) = 0 with the cancellation-safe
    quadratic formula; no iterative eigensolver is involved.
    """
    a, b, c = _pencil_coefficients(h_rr, h_rt, h_tt, g_rr, g_rt, g_tt)
    if np.any(np.asarray(a) <= 0.0) or np.any(np.asarray(g_rr) <= 0.0):
        raise ValueError("metric is not positive definite")
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    sq = np.sqrt(disc)
    q = -0.5 * (b + np.copysign(sq, b))
    lam_a = q / a
    lam_b = np.where(q != 0.0, c / np.where(q != 0.0, q, 1.0), 0.0)
    return np.maximum(lam_a, lam_b), np.minimum(lam_a, lam_b)


def support_function(u, v):
    """Support function u / v (minus the Lorentzian inner product of the
    position with the future normal)."""
    return np.asarray(u, dtype=float) / np.asarray(v, dtype=float)


def norm_A(lam1, lam2):
    """Squared Frobenius norm of the shape operator, sum of lam_i^2."""
    return np.asarray(lam1, dtype=float) ** 2 + np.asarray(lam2, dtype=float) ** 2


@dataclasses.dataclass
class ExtrinsicState:
    """Per-node geometric package of a spacelike radial graph.

    ``sigma1``/``sigma2`` are the trace and determinant of the shape operator
    computed from the characteristic polynomial of the (h, g) pencil, which
    avoids the half-precision loss the split eigenvalues suffer near umbilic
    points; ``norm_a_sq`` = sigma1^2 - 2 sigma2 for the same reason.
    """

    u: np.ndarray
    u_rho: np.ndarray
    u_theta: np.ndarray
    grad_sq: np.ndarray
    v: np.ndarray
    w: np.ndarray
    g_rr: np.ndarray
    g_rt: np.ndarray
    g_tt: np.ndarray
    ginv_rr: np.ndarray
    ginv_rt: np.ndarray
    ginv_tt: np.ndarray
    h_rr: np.ndarray
    h_rt: np.ndarray
    h_tt: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    theta_support: np.ndarray
    norm_a_sq: np.ndarray

    def sigma_k(self, k: int) -> np.ndarray:
        if k == 1:
            return self.sigma1
        if k == 2:
            return self.sigma2
        raise ValueError(f"sigma_{k} is not available on a 2-d grid state")

    def admissible_mask(self, k: int) -> np.ndarray:
        """Nodes where the curvature vector lies in the order-k positivity cone."""
        ok = self.sigma1 > 0.0
        if k >= 2:
            ok = ok & (self.sigma2 > 0.0)
        return ok


def extrinsic_state(u, grid: Grid) -> ExtrinsicState:
    """Build the full per-node geometric state of the graph u.

    Raises :class:`InvalidGraphError` / :class:`NotSpacelikeError` when the
    field is not a positive spacelike graph.
    """
    U = as_values(u)
    if np.any(U <= 0.0):
        bad = int(np.argmax(U <= 0.0))
        raise InvalidGraphError(f"graph function not positive at {grid.node_label(bad)}")
    u_r, u_t, grad_sq = hchart.covariant_gradient(U, grid)
    ratio = grad_sq / U ** 2
    if np.any(ratio >= 1.0):
        flat, worst = _worst_node(ratio)
        raise NotSpacelikeError(
            f"graph not spacelike at {grid.node_label(flat)}: |Du|/u = {np.sqrt(worst):.6g}",
            node=flat,
            gap=worst,
        )
    v = np.sqrt(1.0 - ratio)
    H_rr, H_rt, H_tt = hchart.covariant_hessian(U, grid)
    g_rr, g_rt, g_tt, gi_rr, gi_rt, gi_tt = induced_metric(U, u_r, u_t, grid.sinh_rho)
    h_rr, h_rt, h_tt = second_fundamental_form(
        U, u_r, u_t, H_rr, H_rt, H_tt, v, grid.sinh_rho
    )
    a, b, c = _pencil_coefficients(h_rr, h_rt, h_tt, g_rr, g_rt, g_tt)
    lam1, lam2 = principal_curvatures(h_rr, h_rt, h_tt, g_rr, g_rt, g_tt)
    sigma1 = -b / a
    sigma2 = c / a
    return ExtrinsicState(
        u=U,
        u_rho=u_r,
        u_theta=u_t,
        grad_sq=grad_sq,
        v=v,
        w=1.0 / v,
        g_rr=g_rr,
        g_rt=g_rt,
        g_tt=g_tt,
        ginv_rr=gi_rr,
        ginv_rt=gi_rt,
        ginv_tt=gi_tt,
        h_rr=h_rr,
        h_rt=h_rt,
        h_tt=h_tt,
        lam1=lam1,
        lam2=lam2,
        sigma1=sigma1,
        sigma2=sigma2,
        theta_support=support_function(U, v),
        norm_a_sq=sigma1 ** 2 - 2.0 * sigma2,
    )


# --- ambient (Minkowski) helpers -------------------------------------------
#
# These give an independent route to the same geometry: points, tangents and
# the unit normal as explicit vectors in R^3 with inner product
# <a, b> = a1 b1 + a2 b2 - a3 b3.


def lorentz_inner(p, q):
    """Minkowski inner product of stacked vectors (components along axis 0)."""
    return p[0] * q[0] + p[1] * q[1] - p[2] * q[2]


def hyperboloid_frame(rho, theta):
    """Point x on the unit hyperboloid and its coordinate tangents x_rho, x_theta."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s, c = np.sinh(rho), np.cosh(rho)
    ct, st = np.cos(theta), np.sin(theta)
    x = np.stack(np.broadcast_arrays(s * ct, s * st, c + 0.0 * st))
    x_rho = np.stack(np.broadcast_arrays(c * ct, c * st, s + 0.0 * st))
    x_theta = np.stack(np.broadcast_arrays(-s * st, s * ct, 0.0 * (s * ct)))
    return x, x_rho, x_theta


def embed(rho, theta, u):
    """Ambient position u(x) * x of the graph point over (rho, theta)."""
    x, _, _ = hyperboloid_frame(rho, theta)
    return np.asarray(u, dtype=float) * x


def ambient_tangents(rho, theta, u, u_rho, u_theta):
    """Ambient tangent vectors u x_i + u_i x of the graph."""
    x, x_r, x_t = hyperboloid_frame(rho, theta)
    X_r = u * x_r + u_rho * x
    X_t = u * x_t + u_theta * x
    return X_r, X_t


def ambient_normal(rho, theta, u, u_rho, u_theta, v):
    """Future-directed unit normal (x + sigma^{ij} u_j x_i / u) / v."""
    x, x_r, x_t = hyperboloid_frame(rho, theta)
    s2 = np.sinh(np.asarray(rho, dtype=float)) ** 2
    up_r = u_rho
    up_t = u_theta / s2
    return (x + (up_r * x_r + up_t * x_t) / u) / v
