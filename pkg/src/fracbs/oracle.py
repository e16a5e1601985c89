"""Caputo L1 finite-difference solver for the log-price equation

    D_t^alpha c = -[(sigma1^2/2) c_uu + (sigma2^2/2) c_vv + rho sigma1 sigma2 c_uv - r c]

on a rectangle with Dirichlet data, used as an independent check of the
series solution. Second-order central differences in space; the L1 formula
in time, implicit in the diffusion and reaction terms. The cross derivative
is explicit by default (``scheme="split"``) or implicit (``"implicit"``).

Marching this equation forward in t is backward-parabolic: spatial modes of
wavenumber k grow like E_alpha(+k^2 t^alpha), so the scheme amplifies
rounding error without bound once the grid resolves them.
``direction="diffusive"`` solves D_t^alpha c = +L c instead, the well-posed
sign, with exactly the same discretisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import expr as ex
from .expr import Expr
from .solver import DIRECTIONS, LOG, ModelParams
from .specfun import gamma

BoundaryFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

SCHEMES = ("split", "implicit")
RESIDUAL_TOL = 1e-10


class OracleError(ArithmeticError):
    pass


def l1_weights(alpha: float, M: int) -> np.ndarray:
    """b_j = (j+1)^(1-alpha) - j^(1-alpha), j = 0..M-1."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must satisfy 0 < alpha <= 1, got {alpha!r}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    j = np.arange(M, dtype=float)
    if alpha == 1.0:
        b = np.zeros(M)
        b[0] = 1.0
        return b
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


@dataclass(frozen=True)
class GridSpec:
    u_range: tuple[float, float] = (-1.0, 1.0)
    v_range: tuple[float, float] = (-1.0, 1.0)
    nu: int = 33
    nv: int = 33
    steps: int = 200
    t_final: float = 1.0

    def __post_init__(self):
        if self.nu < 3 or self.nv < 3:
            raise ValueError("nu and nv must be >= 3 interior nodes")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if not (self.u_range[0] < self.u_range[1] and self.v_range[0] < self.v_range[1]):
            raise ValueError("grid ranges must be increasing")



@dataclass(frozen=True)
class OracleGrid:
    u: np.ndarray          # nu + 2 nodes including the boundary
    v: np.ndarray
    t: np.ndarray          # steps + 1 time levels
    field: np.ndarray      # field[m, i, j] = c(u_i, v_j, t_m)
    dt: float
    nu: int
    nv: int

    @property
    def final(self) -> np.ndarray:
        return self.field[-1]

    def interior(self, m: int = -1) -> np.ndarray:
        return self.field[m, 1:-1, 1:-1]


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr") / h**2


def _central_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr") / (2.0 * h)


class _Stencil:
    """Discrete operator pieces on the interior of an (nu+2) x (nv+2) grid."""

    def __init__(self, p: ModelParams, grid: GridSpec, sign: float = 1.0):
        # sign = +1 discretises D c = -L c, sign = -1 discretises D c = +L c
        self.hu = (grid.u_range[1] - grid.u_range[0]) / (grid.nu + 1)
        self.hv = (grid.v_range[1] - grid.v_range[0]) / (grid.nv + 1)
        self.a_uu = sign * 0.5 * p.sigma1**2
        self.a_vv = sign * 0.5 * p.sigma2**2
        self.a_uv = sign * p.rho * p.sigma1 * p.sigma2
        self.r = sign * p.r
        nu, nv = grid.nu, grid.nv
        Iu, Iv = sp.identity(nu, format="csr"), sp.identity(nv, format="csr")
        self.diffusion = (
            self.a_uu * sp.kron(_second_difference(nu, self.hu), Iv)
            + self.a_vv * sp.kron(Iu, _second_difference(nv, self.hv))
            - self.r * sp.identity(nu * nv)
        ).tocsr()
        self.cross = (self.a_uv * sp.kron(_central_difference(nu, self.hu), _central_difference(nv, self.hv))).tocsr()

    def apply_diffusion(self, c: np.ndarray) -> np.ndarray:
        mid = c[1:-1, 1:-1]
        c_uu = (c[2:, 1:-1] - 2.0 * mid + c[:-2, 1:-1]) / self.hu**2
        c_vv = (c[1:-1, 2:] - 2.0 * mid + c[1:-1, :-2]) / self.hv**2
        return self.a_uu * c_uu + self.a_vv * c_vv - self.r * mid

    def apply_cross(self, c: np.ndarray) -> np.ndarray:
        c_uv = (c[2:, 2:] - c[2:, :-2] - c[:-2, 2:] + c[:-2, :-2]) / (4.0 * self.hu * self.hv)
        return self.a_uv * c_uv


def _boundary_only(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    out[1:-1, 1:-1] = 0.0
    return out


def _initial_field(p: ModelParams, ic: Expr, grid: GridSpec):
    if p.space_mode != LOG:
        raise ValueError("the finite-difference oracle works in log-price coordinates (space_mode='log')")
    if ex.contains_max(ic):
        raise ValueError("initial condition must be max-free")
    extra = ex.variables(ic) - {"u", "v"}
    if extra:
        raise ValueError(f"initial condition may only use u and v, found {sorted(extra)}")
    u = np.linspace(grid.u_range[0], grid.u_range[1], grid.nu + 2)
    v = np.linspace(grid.v_range[0], grid.v_range[1], grid.nv + 2)
    U, V = np.meshgrid(u, v, indexing="ij")
    c0 = ex.compile_expr(ic, ("u", "v"))(u=U, v=V)
    return u, v, U, V, c0


def solve_fd(
    p: ModelParams,
    ic: Expr,
    grid: GridSpec,
    boundary: BoundaryFn,
    *,
    scheme: str = "split",
    direction: str = "series",
    cfl_guard: bool = False,
) -> OracleGrid:
    """Integrate from c(u, v, 0) = ic to ``grid.t_final``.

    ``boundary(U, V, t)`` must return the Dirichlet values on the full mesh
    (only the edge entries are used). ``direction="series"`` is the equation
    the series solves; ``"diffusive"`` flips the sign of L.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    u, v, U, V, c0 = _initial_field(p, ic, grid)
    st = _Stencil(p, grid, sign=1.0 if direction == "series" else -1.0)
    M = grid.steps
    dt = grid.t_final / M
    alpha = p.alpha
    mu = 1.0 / (gamma(2.0 - alpha) * dt**alpha)
    if cfl_guard and scheme == "split":
        limit = abs(st.a_uv) / (mu * st.hu * st.hv)
        if limit > 1.0:
            raise OracleError(f"explicit cross term violates the step guard ({limit:.3g} > 1); refine dt")
    b = l1_weights(alpha, M)

    n = grid.nu * grid.nv
    A = mu * sp.identity(n) + st.diffusion
    if scheme == "implicit":
        A = A + st.cross
    A = A.tocsc()
    lu = splu(A)

    field = np.empty((M + 1, grid.nu + 2, grid.nv + 2))
    field[0] = c0
    # increments[k] = c^{k+1} - c^k on the interior
    increments = np.empty((M, grid.nu, grid.nv))
    for m in range(1, M + 1):
        t_m = m * dt
        edge = np.asarray(boundary(U, V, t_m), dtype=float)
        edge = np.broadcast_to(edge, U.shape)
        if not np.all(np.isfinite(edge[[0, -1], :])) or not np.all(np.isfinite(edge[:, [0, -1]])):
            raise OracleError(f"boundary data not finite at t={t_m}")
        prev = field[m - 1]
        rhs = mu * prev[1:-1, 1:-1]
        if m > 1:
            hist = np.tensordot(b[1:m], increments[m - 2::-1], axes=(0, 0))
            rhs = rhs - mu * hist
        known = _boundary_only(edge)
        rhs = rhs - st.apply_diffusion(known)
        if scheme == "split":
            rhs = rhs - st.apply_cross(prev)
        else:
            rhs = rhs - st.apply_cross(known)
        rhs_flat = rhs.ravel()
        x = lu.solve(rhs_flat)
        residual = np.linalg.norm(A @ x - rhs_flat, np.inf)
        if not np.isfinite(residual) or residual > RESIDUAL_TOL * max(1.0, np.linalg.norm(rhs_flat, np.inf)):
            hint = "; marching D c = -L c forward is ill-posed, see direction='diffusive'" if direction == "series" else ""
            raise OracleError(f"linear solve residual {residual:.3g} at step {m}{hint}")
        new = known
        new[1:-1, 1:-1] = x.reshape(grid.nu, grid.nv)
        field[m] = new
        increments[m - 1] = new[1:-1, 1:-1] - prev[1:-1, 1:-1]
    if not np.all(np.isfinite(field)):
        raise OracleError(f"finite-difference field is not finite (direction={direction!r})")
    return OracleGrid(u, v, np.linspace(0.0, grid.t_final, M + 1), field, dt, grid.nu, grid.nv)


def solve_backward_euler(
    p: ModelParams, ic: Expr, grid: GridSpec, boundary: BoundaryFn, *, direction: str = "series"
) -> OracleGrid:
    """Classical backward Euler with the explicit cross term, coded without
    any fractional memory. Used to check the alpha = 1 limit of solve_fd."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    u, v, U, V, c0 = _initial_field(p, ic, grid)
    st = _Stencil(p, grid, sign=1.0 if direction == "series" else -1.0)
    dt = grid.t_final / grid.steps
    A = (sp.identity(grid.nu * grid.nv) / dt + st.diffusion).tocsc()
    lu = splu(A)
    field = np.empty((grid.steps + 1, grid.nu + 2, grid.nv + 2))
    field[0] = c0
    for m in range(1, grid.steps + 1):
        prev = field[m - 1]
        known = _boundary_only(np.broadcast_to(np.asarray(boundary(U, V, m * dt), dtype=float), U.shape))
        rhs = prev[1:-1, 1:-1] / dt - st.apply_diffusion(known) - st.apply_cross(prev)
        new = known
        new[1:-1, 1:-1] = lu.solve(rhs.ravel()).reshape(grid.nu, grid.nv)
        field[m] = new
    return OracleGrid(u, v, np.linspace(0.0, grid.t_final, grid.steps + 1), field, dt, grid.nu, grid.nv)


def max_relative_deviation(grid: OracleGrid, reference: np.ndarray) -> float:
    """max over interior nodes of |fd - ref| / |ref| at the final time."""
    fd = grid.interior()
    ref = np.asarray(reference)[1:-1, 1:-1]
    return float(np.max(np.abs(fd - ref) / np.abs(ref)))


def write_csv(grid: OracleGrid, path, precision: int = 6) -> None:
    """Final-time field in long form with header ``u,v,value``."""
    lines = ["u,v,value"]
    final = grid.final
    for i, ui in enumerate(grid.u):
        for j, vj in enumerate(grid.v):
            lines.append(f"{ui:.{precision}g},{vj:.{precision}g},{final[i, j]:.{precision}g}")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)
