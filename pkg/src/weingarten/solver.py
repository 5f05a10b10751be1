"""Discrete solver for the prescribed-curvature Dirichlet problem.

The residual of the homotopy family at parameter t in [0, 1] is

    R_i = t * sigma_k[u](x_i) + (1 - t) * Lap u(x_i) - psi(x_i, u_i, support_i)

at interior nodes, with boundary rows enforcing u = phi.  t = 0 is the
Laplace problem, t = 1 the curvature problem.  Newton's method runs with a
backtracking line search that only ever accepts spacelike (and, for t > 0,
cone-admissible) iterates; the continuation driver first tries the target
problem directly and falls back to adaptive stepping in t.

The production Jacobian is the analytic linearisation: the residual is a
node-local function of (u, u_rho, u_theta, and the covariant Hessian
components), so dR/du factors into exact per-node partial derivatives
(obtained by complex-step differentiation of the local map, which is
machine-accurate) composed with the sparse stencil operators.  A graph-
coloured central finite-difference Jacobian on the residual's sparsity
pattern (a 3 x 3 stencil plus the across-pole coupling of the innermost
ring) is retained as an independent cross-check; it is not the production
path because the pole ring's metric factor 1/sinh(rho)^2 ~ 1/h^2 makes its
huge entries cancel to O(1) physical couplings, which finite differences
cannot resolve on fine grids.  Boundary rows are identity rows.  Matrices
are stored sparse so that the largest study grids stay cheap, and the linear
solves use a deterministic sequential sparse LU.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import geom, hchart
from .hchart import Grid, as_values
from .problem import ContinuationConfig, ProblemSpec, PsiSpec

__all__ = [
    "InadmissibleStartError",
    "SolverError",
    "NewtonReport",
    "ContinuationStep",
    "SolveResult",
    "SandwichReport",
    "UniquenessReport",
    "assemble_residual",
    "assemble_jacobian",
    "assemble_jacobian_fd",
    "damped_newton",
    "harmonic_extension",
    "constant_guess",
    "build_initial_guess",
    "continuation_solve",
    "solve_upper_barrier",
    "solve_lower_barrier",
    "barrier_sandwich_check",
    "uniqueness_probe",
    "maclaurin_ordering_margins",
    "newton_inequality_min_slack",
]


class InadmissibleStartError(ValueError):
    """A Newton start is rejected by the spacelike/admissibility guard."""


class SolverError(RuntimeError):
    """A required auxiliary solve (e.g. a barrier problem) failed."""


# --- residual ----------------------------------------------------------------


def _residual_given_state(U, t, spec: ProblemSpec, state: geom.ExtrinsicState):
    grid = spec.grid
    psi = spec.psi_field(U, state.theta_support)
    if t == 1.0:
        R = state.sigma_k(spec.k) - psi
    elif t == 0.0:
        R = hchart.laplace_beltrami(U, grid) - psi
    else:
        R = t * state.sigma_k(spec.k) + (1.0 - t) * hchart.laplace_beltrami(U, grid) - psi
    R[-1, :] = U[-1, :] - spec.boundary_values()
    return R


def assemble_residual(u, t: float, spec: ProblemSpec) -> np.ndarray:
    """Residual field of the homotopy problem; boundary rows hold u - phi.

    Raises the geometry errors of :func:`geom.extrinsic_state` when the field
    is not a positive spacelike graph.
    """
    U = as_values(u)
    state = geom.extrinsic_state(U, spec.grid)
    return _residual_given_state(U, t, spec, state)


# --- sparsity pattern and colouring -------------------------------------------


@dataclasses.dataclass
class _Pattern:
    indices: np.ndarray  # CSC row indices
    indptr: np.ndarray
    shape: tuple[int, int]
    groups: list[np.ndarray]  # column groups with disjoint row footprints


_PATTERN_CACHE: dict[tuple[int, int], _Pattern] = {}


def _build_pattern(grid: Grid) -> _Pattern:
    nr, nt = grid.shape
    n = nr * nt
    idx = np.arange(n).reshape(nr, nt)
    shift = grid.pole_shift
    rows, cols = [], []

    def add(r, c):
        rows.append(np.ravel(r))
        cols.append(np.ravel(c))

    # interior rings with full centred stencils
    if nr > 2:
        I = np.arange(1, nr - 1)[:, None]
        J = np.arange(nt)[None, :]
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                add(idx[I, J], idx[I + di, (J + dj) % nt])
    # innermost ring: regular neighbours plus across-pole ghosts
    J = np.arange(nt)
    for di in (0, 1):
        for dj in (-1, 0, 1):
            add(idx[0, J], idx[di, (J + dj) % nt])
    for dj in (-1, 0, 1):
        add(idx[0, J], idx[0, (J + dj + shift) % nt])
    # boundary rows are identity rows
    add(idx[-1, :], idx[-1, :])

    data = np.ones(sum(len(r) for r in rows))
    P = sp.coo_matrix(
        (data, (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsc()
    P.data[:] = 1.0

    # distance-2 colouring: columns sharing a residual row get distinct colours
    conflict = (P.T @ P).tocsr()
    colour = np.full(n, -1, dtype=np.int64)
    for c in range(n):
        neigh = colour[conflict.indices[conflict.indptr[c] : conflict.indptr[c + 1]]]
        used = set(int(v) for v in neigh if v >= 0)
        v = 0
        while v in used:
            v += 1
        colour[c] = v
    groups = [np.nonzero(colour == v)[0] for v in range(int(colour.max()) + 1)]
    return _Pattern(indices=P.indices, indptr=P.indptr, shape=(n, n), groups=groups)


def _pattern(grid: Grid) -> _Pattern:
    key = grid.shape
    pat = _PATTERN_CACHE.get(key)
    if pat is None:
        pat = _build_pattern(grid)
        _PATTERN_CACHE[key] = pat
    return pat


def _colored_fd_jacobian(res_fn, U, grid: Grid, eps: float) -> sp.csc_matrix:
    pat = _pattern(grid)
    data = np.zeros(pat.indices.size)
    for cols in pat.groups:
        pert = np.zeros(grid.shape)
        pert.reshape(-1)[cols] = eps
        rp = res_fn(U + pert).ravel()
        rm = res_fn(U - pert).ravel()
        d = (rp - rm) / (2.0 * eps)
        for c in cols:
            lo, hi = pat.indptr[c], pat.indptr[c + 1]
            data[lo:hi] = d[pat.indices[lo:hi]]
    return sp.csc_matrix((data, pat.indices, pat.indptr), shape=pat.shape)


def assemble_jacobian_fd(u, t: float, spec: ProblemSpec) -> sp.csc_matrix:
    """Cross-check Jacobian: coloured central finite differences of the
    residual on the stencil pattern.  Accurate on coarse and medium grids;
    on fine grids the innermost ring loses the cancellation between its
    1/sinh(rho)^2-sized entries (see the module docstring), so the analytic
    :func:`assemble_jacobian` is the production path."""
    U = as_values(u)
    eps = 1e-6 * max(1.0, float(np.max(np.abs(U))))
    return _colored_fd_jacobian(lambda w: assemble_residual(w, t, spec), U, spec.grid, eps)


# Complex-step size for the node-local partial derivatives; no subtractive
# cancellation occurs, so it only needs to avoid underflow in squares.
_CS_EPS = 1e-30


def _local_residual(t, spec: ProblemSpec, u, u_r, u_t, H_rr, H_rt, H_tt):
    """The residual as a node-local (complex-analytic) function of the six
    chart quantities; used for exact per-node linearisation."""
    grid = spec.grid
    s2 = grid.sinh_rho ** 2
    grad_sq = u_r ** 2 + u_t ** 2 / s2
    v = np.sqrt(1.0 - grad_sq / u ** 2)
    g_rr = u ** 2 - u_r ** 2
    g_rt = -u_r * u_t
    g_tt = u ** 2 * s2 - u_t ** 2
    h_rr = (H_rr + u - 2.0 * u_r ** 2 / u) / v
    h_rt = (H_rt - 2.0 * u_r * u_t / u) / v
    h_tt = (H_tt + u * s2 - 2.0 * u_t ** 2 / u) / v
    a = g_rr * g_tt - g_rt ** 2
    if spec.k == 1:
        sig = (h_rr * g_tt + h_tt * g_rr - 2.0 * h_rt * g_rt) / a
    else:
        sig = (h_rr * h_tt - h_rt ** 2) / a
    psi = spec.psi.evaluate(grid.rho_col, grid.theta_row, u, u / v, check=False)
    out = t * sig - psi
    if t != 1.0:
        out = out + (1.0 - t) * (H_rr + H_tt / s2)
    return out


def assemble_jacobian(u, t: float, spec: ProblemSpec) -> sp.csc_matrix:
    """Analytic Jacobian dR/du.

    Per-node partials of the local residual with respect to
    (u, u_rho, u_theta, H_rr, H_rt, H_tt) are computed by complex-step
    differentiation (exact to round-off), then composed with the sparse
    stencil operators.  Boundary rows are identity rows."""
    grid = spec.grid
    U = as_values(u)
    u_r, u_t, _ = hchart.covariant_gradient(U, grid)
    H_rr, H_rt, H_tt = hchart.covariant_hessian(U, grid)
    slots = [U, u_r, u_t, H_rr, H_rt, H_tt]
    weights = []
    for m in range(len(slots)):
        pert = list(slots)
        pert[m] = pert[m] + 1j * _CS_EPS
        val = _local_residual(t, spec, *pert)
        w = np.imag(val) / _CS_EPS
        weights.append(np.ravel(np.broadcast_to(w, grid.shape)))
    mats = hchart.derivative_matrices(grid)
    ops = [
        sp.identity(grid.n_nodes, format="csr"),
        mats.d_rho,
        mats.d_theta,
        mats.d_rho2,
        mats.hess_rt,
        mats.hess_tt,
    ]
    M = sum(op.multiply(w[:, None]).tocsr() for op, w in zip(ops, weights))
    interior = grid.interior_mask.ravel().astype(float)
    J = sp.diags(interior) @ M + sp.diags(1.0 - interior)
    return J.tocsc()


# --- Newton ------------------------------------------------------------------


@dataclasses.dataclass
class NewtonReport:
    u: np.ndarray
    converged: bool
    status: str  # converged | max-iterations | stalled
    iterations: int
    residual_norm: float
    tolerance: float
    steps: list


def resolve_newton_tol(cfg: ContinuationConfig, spec: ProblemSpec, u, state) -> float:
    """Residual tolerance: the configured value if any, 1e-10 when both psi
    and phi are constant (exactly solvable data), else 1e-8 * sup |psi|."""
    if cfg.newton_tol is not None:
        return cfg.newton_tol
    if spec.psi.is_constant and spec.phi.family == "constant":
        return 1e-10
    psi = spec.psi_field(as_values(u), state.theta_support)
    return 1e-8 * max(float(np.max(np.abs(psi))), 1e-8)


def _check_start(u, t, spec) -> geom.ExtrinsicState:
    try:
        state = geom.extrinsic_state(u, spec.grid)
    except (geom.NotSpacelikeError, geom.InvalidGraphError) as exc:
        raise InadmissibleStartError(f"start rejected: {exc}") from exc
    if t > 0.0:
        ok = state.admissible_mask(spec.k)
        bad = ~ok & spec.grid.interior_mask
        if np.any(bad):
            node = int(np.argmax(bad))
            raise InadmissibleStartError(
                f"start not {spec.k}-admissible at {spec.grid.node_label(node)}"
            )
    return state


def damped_newton(
    u0, t: float, spec: ProblemSpec, cfg: ContinuationConfig | None = None,
    max_iters: int | None = None,
) -> NewtonReport:
    """Damped Newton iteration at fixed homotopy parameter t.

    Every accepted iterate is spacelike everywhere and k-admissible at the
    interior nodes when t > 0; the step is halved until both guards hold and
    the residual sup-norm strictly decreases.  An exact start is accepted
    with zero iterations.
    """
    cfg = cfg or ContinuationConfig()
    grid = spec.grid
    u = np.array(as_values(u0), dtype=float, copy=True)
    if max_iters is None:
        max_iters = cfg.max_newton_iters
    state = _check_start(u, t, spec)
    tol = resolve_newton_tol(cfg, spec, u, state)
    try:
        R = _residual_given_state(u, t, spec, state)
    except ValueError as exc:  # e.g. psi nonpositive at the start
        raise InadmissibleStartError(f"start rejected: {exc}") from exc
    rnorm = float(np.max(np.abs(R)))
    steps: list[tuple[int, float, float]] = []
    iterations = 0
    while rnorm > tol:
        if iterations >= max_iters:
            return NewtonReport(u, False, "max-iterations", iterations, rnorm, tol, steps)
        J = assemble_jacobian(u, t, spec)
        delta = spsolve(J, -R.ravel()).reshape(grid.shape)
        if not np.all(np.isfinite(delta)):
            return NewtonReport(u, False, "stalled", iterations, rnorm, tol, steps)
        alpha = 1.0
        accepted = False
        while alpha >= cfg.damping_floor:
            u_try = u + alpha * delta
            try:
                st_try = geom.extrinsic_state(u_try, grid)
                if t > 0.0 and not np.all(
                    st_try.admissible_mask(spec.k)[grid.interior_mask]
                ):
                    raise geom.NotSpacelikeError("iterate left the admissible cone")
                R_try = _residual_given_state(u_try, t, spec, st_try)
                rn_try = float(np.max(np.abs(R_try)))
                if np.isfinite(rn_try) and rn_try < rnorm:
                    accepted = True
                    break
            except (geom.NotSpacelikeError, geom.InvalidGraphError, ValueError):
                pass
            alpha *= 0.5
        if not accepted:
            return NewtonReport(u, False, "stalled", iterations, rnorm, tol, steps)
        u, R, rnorm = u_try, R_try, rn_try
        iterations += 1
        steps.append((iterations, rnorm, alpha))
    return NewtonReport(u, True, "converged", iterations, rnorm, tol, steps)


# --- initial guesses ----------------------------------------------------------


_LINEAR_CACHE: dict[tuple[int, int], sp.csc_matrix] = {}


def _laplace_system(grid: Grid) -> sp.csc_matrix:
    key = grid.shape
    L = _LINEAR_CACHE.get(key)
    if L is None:

        def res(U):
            R = hchart.laplace_beltrami(U, grid)
            R[-1, :] = U[-1, :]
            return R

        # exact for a linear operator, any step size
        L = _colored_fd_jacobian(res, np.zeros(grid.shape), grid, 1.0)
        _LINEAR_CACHE[key] = L
    return L


def harmonic_extension(spec: ProblemSpec) -> np.ndarray:
    """Discrete harmonic extension of the boundary data (constant data short-
    circuits to the exact constant field)."""
    grid = spec.grid
    if spec.phi.family == "constant":
        return np.full(grid.shape, spec.phi.c)
    b = np.zeros(grid.shape)
    b[-1, :] = spec.boundary_values()
    return spsolve(_laplace_system(grid), b.ravel()).reshape(grid.shape)


def constant_guess(spec: ProblemSpec) -> np.ndarray:
    return np.full(spec.grid.shape, float(np.mean(spec.boundary_values())))


def build_initial_guess(spec: ProblemSpec, max_shifts: int = 8) -> np.ndarray:
    """Harmonic extension of phi, lifted by constants until mean-curvature
    admissible; constant fallback when the lift does not take."""
    grid = spec.grid
    u = harmonic_extension(spec)
    shift = 0.25 * max(1.0, float(np.mean(np.abs(u))))
    for _ in range(max_shifts):
        try:
            state = geom.extrinsic_state(u, grid)
            if np.all(state.sigma1[grid.interior_mask] > 0.0):
                return u
        except (geom.NotSpacelikeError, geom.InvalidGraphError):
            pass
        u = u + shift
    return constant_guess(spec)


# --- continuation --------------------------------------------------------------


@dataclasses.dataclass
class ContinuationStep:
    t: float
    iterations: int
    residual_norm: float


@dataclasses.dataclass
class SolveResult:
    u: np.ndarray
    status: str  # converged | step-floor | inadmissible-start
    steps: list
    newton_total: int
    residual_norm: float
    detail: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def continuation_solve(
    spec: ProblemSpec,
    cfg: ContinuationConfig | None = None,
    initial_guess=None,
) -> SolveResult:
    """Drive the homotopy parameter from the Laplace problem to the curvature
    problem.

    The target problem (t = 1) is attempted directly first; when that fails
    the driver solves t = 0, then advances t with adaptive halving on Newton
    failure and doubling (capped at the initial step) on success.
    """
    cfg = cfg or ContinuationConfig()
    if initial_guess is None:
        u0 = build_initial_guess(spec)
    else:
        u0 = np.array(as_values(initial_guess), dtype=float, copy=True)
    steps: list[ContinuationStep] = []
    total = 0

    if cfg.direct_attempt:
        try:
            rep = damped_newton(
                u0, 1.0, spec, cfg, max_iters=min(cfg.direct_max_iters, cfg.max_newton_iters)
            )
            total += rep.iterations
            if rep.converged:
                steps.append(ContinuationStep(1.0, rep.iterations, rep.residual_norm))
                return SolveResult(rep.u, "converged", steps, total, rep.residual_norm)
        except InadmissibleStartError:
            pass

    # staged path from the Laplace end
    u = u0
    try:
        rep = damped_newton(u, 0.0, spec, cfg)
    except InadmissibleStartError:
        try:
            rep = damped_newton(constant_guess(spec), 0.0, spec, cfg)
        except InadmissibleStartError as exc:
            return SolveResult(u0, "inadmissible-start", steps, total, math.inf, str(exc))
    total += rep.iterations
    if not rep.converged:
        return SolveResult(
            rep.u, "step-floor", steps, total, rep.residual_norm,
            f"Newton {rep.status} at t=0",
        )
    u = rep.u
    steps.append(ContinuationStep(0.0, rep.iterations, rep.residual_norm))

    t, dt = 0.0, cfg.dt_init
    fallback_used = False
    while t < 1.0 - 1e-12:
        t_try = min(1.0, t + dt)
        rep = None
        try:
            rep = damped_newton(u, t_try, spec, cfg)
        except InadmissibleStartError:
            if not fallback_used:
                fallback_used = True
                try:
                    rep = damped_newton(constant_guess(spec), t_try, spec, cfg)
                except InadmissibleStartError:
                    rep = None
        if rep is not None:
            total += rep.iterations
        if rep is not None and rep.converged:
            u, t = rep.u, t_try
            steps.append(ContinuationStep(t, rep.iterations, rep.residual_norm))
            dt = min(2.0 * dt, cfg.dt_init)
        else:
            dt *= 0.5
            if dt < cfg.dt_min:
                last = steps[-1].residual_norm if steps else math.inf
                return SolveResult(
                    u, "step-floor", steps, total, last,
                    f"continuation step floor reached at t={t:.6g}",
                )
    return SolveResult(u, "converged", steps, total, steps[-1].residual_norm)


# --- barriers ------------------------------------------------------------------


def _barrier_solve(spec: ProblemSpec, u, cfg: ContinuationConfig | None, order: int):
    cfg = cfg or ContinuationConfig()
    U = as_values(u)
    state = geom.extrinsic_state(U, spec.grid)
    psi = spec.psi_field(U, state.theta_support)
    Cnk = math.comb(spec.n, spec.k)
    if order == 1:
        rhs = spec.n * (psi / Cnk) ** (1.0 / spec.k)
    else:
        rhs = (psi / Cnk) ** (spec.n / spec.k)
    bspec = ProblemSpec(
        grid=spec.grid,
        k=order,
        psi=PsiSpec(family="tabulated", table=rhs),
        phi=spec.phi,
    )
    bcfg = dataclasses.replace(cfg, newton_tol=None)
    last = "no admissible start"
    for start in (U, constant_guess(bspec)):
        try:
            rep = damped_newton(start, 1.0, bspec, bcfg)
        except InadmissibleStartError as exc:
            last = str(exc)
            continue
        if rep.converged:
            return rep.u
        last = f"Newton {rep.status} at residual {rep.residual_norm:.3e}"
    raise SolverError(f"barrier problem (order {order}) did not converge: {last}")


def solve_upper_barrier(spec: ProblemSpec, u, cfg: ContinuationConfig | None = None):
    """Mean-curvature barrier: sigma_1[s] = n (psi / C(n,k))^{1/k} with psi
    frozen on the computed solution, s = phi on the boundary."""
    return _barrier_solve(spec, u, cfg, order=1)


def solve_lower_barrier(spec: ProblemSpec, u, cfg: ContinuationConfig | None = None):
    """Top-order barrier: sigma_n[s] = (psi / C(n,k))^{n/k}, s = phi on the
    boundary, psi frozen on the computed solution."""
    return _barrier_solve(spec, u, cfg, order=spec.n)


@dataclasses.dataclass
class SandwichReport:
    min_upper_margin: float  # min over interior of s_plus - u
    min_lower_margin: float  # min over interior of u - s_minus
    eps_h: float
    passed: bool


def barrier_sandwich_check(u, s_minus, s_plus, grid: Grid) -> SandwichReport:
    """Comparison sandwich s_minus <= u <= s_plus up to the discretisation
    allowance eps_h = 10 * d_rho^2 on interior nodes."""
    interior = grid.interior_mask
    up = float(np.min((as_values(s_plus) - as_values(u))[interior]))
    lo = float(np.min((as_values(u) - as_values(s_minus))[interior]))
    eps_h = 10.0 * grid.d_rho ** 2
    return SandwichReport(up, lo, eps_h, passed=bool(up >= -eps_h and lo >= -eps_h))


# --- uniqueness probe -----------------------------------------------------------


@dataclasses.dataclass
class UniquenessReport:
    max_pairwise_distance: float
    all_converged: bool
    t_monotone: bool
    runs: list


def uniqueness_probe(
    spec: ProblemSpec,
    cfg: ContinuationConfig | None = None,
    n_starts: int = 5,
    seed: int = 0,
    amplitude: float = 0.01,
) -> UniquenessReport:
    """Re-run the continuation from seeded perturbed starts and report the
    largest pairwise sup-distance between the solutions found."""
    grid = spec.grid
    rng = np.random.default_rng(seed)
    base = build_initial_guess(spec)
    rn = grid.rho_col / grid.chart.rho_max
    sols, runs = [], []
    monotone = True
    for _ in range(n_starts):
        c = rng.normal(0.0, 1.0, size=4)
        bump = (
            c[0]
            + c[1] * rn ** 2
            + (c[2] * np.cos(grid.theta_row) + c[3] * np.sin(grid.theta_row)) * rn
        )
        u0 = base * (1.0 + amplitude * bump)
        result = continuation_solve(spec, cfg, initial_guess=u0)
        ts = [s.t for s in result.steps]
        mono = all(b >= a for a, b in zip(ts, ts[1:]))
        monotone &= mono
        runs.append(
            {
                "status": result.status,
                "newton_total": result.newton_total,
                "residual_norm": result.residual_norm,
                "t_monotone": mono,
            }
        )
        if result.converged:
            sols.append(result.u)
    dist = 0.0
    for a in range(len(sols)):
        for b in range(a + 1, len(sols)):
            dist = max(dist, float(np.max(np.abs(sols[a] - sols[b]))))
    return UniquenessReport(
        max_pairwise_distance=dist,
        all_converged=len(sols) == n_starts,
        t_monotone=monotone,
        runs=runs,
    )


# --- pointwise inequality checks -------------------------------------------------


def maclaurin_ordering_margins(state: geom.ExtrinsicState, k: int, grid: Grid):
    """Pointwise margins of the normalised-mean ordering used by the barriers:

        n (sigma_k / C(n,k))^{1/k} <= sigma_1   and
        sigma_n <= (sigma_k / C(n,k))^{n/k}

    over interior nodes (n = 2).  Returns the two minima."""
    interior = grid.interior_mask
    C = math.comb(2, k)
    mean_k = (state.sigma_k(k) / C) ** (1.0 / k)
    m1 = state.sigma1 - 2.0 * mean_k
    m2 = mean_k ** 2 - state.sigma2
    return float(np.min(m1[interior])), float(np.min(m2[interior]))


def newton_inequality_min_slack(state: geom.ExtrinsicState, grid: Grid) -> float:
    """Minimum pointwise slack of the order-1 Newton inequality
    (sigma_1 / 2)^2 - sigma_2 >= 0 over interior nodes (n = 2)."""
    slack = (state.sigma1 / 2.0) ** 2 - state.sigma2
    return float(np.min(slack[grid.interior_mask]))
