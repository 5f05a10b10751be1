"""Problem data: right-hand-side families, boundary data and solver knobs.

The prescribed curvature psi(x, u, support) comes in three families:

  * ``power``        psi = support^p * h(rho, theta, u)
  * ``exponential``  psi = exp(p * support) * h(rho, theta, u)
  * ``tabulated``    psi given per node (used for manufactured solutions)

``h`` is a closed-form expression over (rho, theta, u) from a small safe
grammar: numeric constants, + - * / **, powers of u, cos/sin of theta and
polynomials in rho.  The power family with growth exponent p >= k keeps the
structural convexity condition that the curvature estimates require; p < k
is accepted but flagged.
"""

from __future__ import annotations

import ast
import dataclasses
import math

import numpy as np
from scipy.interpolate import CubicSpline

from . import geom
from .hchart import Grid

__all__ = [
    "ExpressionError",
    "Expr",
    "PsiSpec",
    "PhiSpec",
    "ProblemSpec",
    "ContinuationConfig",
    "tabulate_sigma_k",
    "manufactured_problem",
]


class ExpressionError(ValueError):
    """An expression fell outside the supported grammar."""


_ALLOWED_FUNCS = {"cos": np.cos, "sin": np.sin}
_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.USub, ast.UAdd)


class Expr:
    """A validated closed-form scalar expression over (rho, theta, u)."""

    def __init__(self, text: str, variables=("rho", "theta", "u")):
        self.text = str(text)
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {self.text!r}: {exc}") from None
        # names appearing as call targets are validated with the Call node
        call_targets = {
            id(node.func)
            for node in ast.walk(tree)
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
        }
        names = set()
        for node in ast.walk(tree):
            if isinstance(node, (ast.Expression, ast.Load)):
                continue
            if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
                continue
            if isinstance(node, _ALLOWED_BINOPS + _ALLOWED_UNARY):
                continue
            if isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
                continue
            if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
                continue
            if isinstance(node, ast.Name):
                if id(node) in call_targets:
                    continue
                if node.id in self.variables:
                    names.add(node.id)
                    continue
                raise ExpressionError(
                    f"unknown variable {node.id!r} in {self.text!r}; "
                    f"allowed: {', '.join(self.variables)}"
                )
            if isinstance(node, ast.Call):
                if (
                    isinstance(node.func, ast.Name)
                    and node.func.id in _ALLOWED_FUNCS
                    and len(node.args) == 1
                    and not node.keywords
                ):
                    continue
                raise ExpressionError(
                    f"unsupported call in {self.text!r}; allowed functions: "
                    f"{', '.join(sorted(_ALLOWED_FUNCS))}"
                )
            raise ExpressionError(
                f"unsupported syntax {type(node).__name__!r} in {self.text!r}"
            )
        self._names = frozenset(names)
        self._code = compile(tree, "<expr>", "eval")

    @property
    def is_constant(self) -> bool:
        return not self._names

    def __call__(self, rho=0.0, theta=0.0, u=0.0):
        env = dict(_ALLOWED_FUNCS)
        env.update(rho=rho, theta=theta, u=u)
        return eval(self._code, {"__builtins__": {}}, env)

    def __repr__(self):
        return f"Expr({self.text!r})"


def _as_expr(h) -> Expr:
    if isinstance(h, Expr):
        return h
    if isinstance(h, (int, float)):
        return Expr(repr(float(h)))
    return Expr(h)


@dataclasses.dataclass
class PsiSpec:
    """Prescribed-curvature right-hand side psi(x, u, support) > 0."""

    family: str
    p: float = 0.0
    h: Expr | str | float = 1.0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in ("power", "exponential", "tabulated"):
            raise ValueError(f"unknown psi family {self.family!r}")
        if self.family == "tabulated":
            if self.table is None:
                raise ValueError("tabulated psi requires node values")
            t = np.asarray(self.table, dtype=float)
            if not np.all(np.isfinite(t)) or np.any(t <= 0.0):
                raise ValueError("tabulated psi values must be finite and positive")
            self.table = t
        else:
            self.h = _as_expr(self.h)
            self.p = float(self.p)

    @property
    def is_constant(self) -> bool:
        if self.family == "tabulated":
            return bool(np.ptp(self.table) == 0.0)
        return self.p == 0.0 and self.h.is_constant

    def growth_condition_ok(self, k: int):
        """Structural check of the convexity/growth condition (p >= k);
        None when not applicable (tabulated data)."""
        if self.family == "tabulated":
            return None
        return self.p >= k

    def evaluate(self, rho, theta, u, support, check: bool = True) -> np.ndarray:
        """Evaluate psi; accepts complex inputs when ``check`` is off (used by
        the analytic linearisation)."""
        if self.family == "tabulated":
            vals = self.table + 0.0 * np.asarray(u)
        else:
            hv = self.h(rho=rho, theta=theta, u=u)
            support = np.asarray(support)
            if self.family == "power":
                vals = support ** self.p * hv
            else:
                vals = np.exp(self.p * support) * hv
        if check:
            vals = np.asarray(vals, dtype=float)
            if np.any(~np.isfinite(vals)) or np.any(vals <= 0.0):
                raise ValueError("psi must stay finite and strictly positive")
        return vals


@dataclasses.dataclass
class PhiSpec:
    """Dirichlet boundary data: constant c, or the hyperplane slice c / cosh(rho).

    Both families are spacelike for any c > 0 (the hyperplane slice has
    |D phi| / phi = tanh(rho) < 1).
    """

    family: str
    c: float

    def __post_init__(self):
        if self.family not in ("constant", "hyperplane"):
            raise ValueError(f"unknown phi family {self.family!r}")
        self.c = float(self.c)
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ValueError("boundary datum c must be finite and positive")

    def values(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.family == "constant":
            return np.full_like(rho, self.c)
        return self.c / np.cosh(rho)


@dataclasses.dataclass
class ProblemSpec:
    """A full Dirichlet problem: grid, curvature order, psi and phi."""

    grid: Grid
    k: int
    psi: PsiSpec
    phi: PhiSpec

    def __post_init__(self):
        n = self.n
        if not 1 <= self.k <= n:
            raise ValueError(f"curvature order k = {self.k} out of range 1..{n}")
        if n != 2:
            raise ValueError("grids are two-dimensional; the chart dimension must be 2")

    @property
    def n(self) -> int:
        return self.grid.chart.n

    def phi_field(self) -> np.ndarray:
        """phi extended over the whole grid by its defining closed form."""
        return self.phi.values(self.grid.rho_col) + np.zeros(self.grid.shape)

    def boundary_values(self) -> np.ndarray:
        return self.phi_field()[-1, :]

    def psi_field(self, u, support) -> np.ndarray:
        return self.psi.evaluate(
            rho=self.grid.rho_col, theta=self.grid.theta_row, u=u, support=support
        )


@dataclasses.dataclass
class ContinuationConfig:
    """Knobs of the damped-Newton/continuation driver."""

    dt_init: float = 0.25
    dt_min: float = 1e-3
    newton_tol: float | None = None  # None: 1e-10 for constant data, else 1e-8 * sup psi
    max_newton_iters: int = 30
    damping_floor: float = 2.0 ** -20
    direct_attempt: bool = True
    direct_max_iters: int = 15

    def __post_init__(self):
        if not 0.0 < self.dt_init <= 1.0:
            raise ValueError("dt_init must lie in (0, 1]")
        if not 0.0 < self.dt_min <= self.dt_init:
            raise ValueError("dt_min must lie in (0, dt_init]")
        if self.newton_tol is not None and self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")


def tabulate_sigma_k(u_fn, grid: Grid, k: int, refine: int = 4) -> np.ndarray:
    """Sample sigma_k of the graph u_fn(rho, theta) on a ``refine`` times
    finer grid and restrict the values to ``grid``.

    The fine theta lines contain the coarse ones; the radial restriction is a
    cubic spline, whose error is far below the coarse truncation level.
    """
    fine = Grid(grid.chart, refine * grid.n_rho, refine * grid.n_theta)
    U = np.asarray(u_fn(fine.rho_col, fine.theta_row), dtype=float)
    U = np.broadcast_to(U, fine.shape)
    state = geom.extrinsic_state(U, fine)
    vals = state.sigma_k(k)
    cols = vals[:, :: refine]
    spline = CubicSpline(fine.rho, cols, axis=0)
    return np.asarray(spline(grid.rho))


def manufactured_problem(u_expr, grid: Grid, k: int, refine: int = 4):
    """Build the problem whose exact solution is the radial graph ``u_expr``.

    psi is tabulated from the geometry of u on a ``refine`` times finer grid,
    and the boundary datum is the constant value of u on the outermost ring.
    Returns (spec, u_star) with u_star the exact field sampled on ``grid``.
    """
    expr = u_expr if isinstance(u_expr, Expr) else Expr(u_expr, variables=("rho", "theta"))

    def u_fn(rho, theta):
        return expr(rho=rho, theta=theta) + 0.0 * (rho + theta)

    u_star = u_fn(grid.rho_col, grid.theta_row)
    boundary = u_star[-1, :]
    if np.ptp(boundary) > 1e-12 * max(1.0, float(np.max(np.abs(boundary)))):
        raise ValueError(
            "manufactured graph must be constant on the boundary ring; "
            "use a radial u expression"
        )
    table = tabulate_sigma_k(u_fn, grid, k, refine=refine)
    spec = ProblemSpec(
        grid=grid,
        k=k,
        psi=PsiSpec(family="tabulated", table=table),
        phi=PhiSpec(family="constant", c=float(boundary[0])),
    )
    return spec, u_star
