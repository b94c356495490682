"""Newton's method for ``-Lap u - u^2 = f`` with ``f = -s sin(pi x) sin(pi y)``.

Each outer step solves ``J(u) du = -F(u)`` with ``J(u) = L_D - 2 diag(u)``,
either by a sparse direct factorization (oracle mode) or by an inner
direct/NPBS iteration on a :class:`NewtonJacobianProblem`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .correction import CorrectionMap, DenseExactMap, FactorizedBornMap, OptimalScalarMap
from .fields import make_rng, sine_noise, spawn_seeds
from .iterate import Format, IterationConfig, IterationTrace, Termination, run
from .problems import NewtonJacobianProblem, five_point, five_point_matrix
from .spectral import BC, GridSpec

log = logging.getLogger(__name__)

MapSpec = Union[CorrectionMap, Callable[[NewtonJacobianProblem], CorrectionMap]]


class NewtonError(RuntimeError):
    pass


def default_grid(n: int = 63) -> GridSpec:
    return GridSpec(n, n, 1.0, 1.0, BC.DIRICHLET)


def _inner_default() -> IterationConfig:
    return IterationConfig(format=Format.NPBS, rtol=1e-4, max_iters=2000)


@dataclass
class NewtonConfig:
    """Outer/inner settings.

    ``inner_map`` is either a fixed map or a factory called with the Jacobian
    problem of each outer step (e.g. :meth:`DenseExactMap.born_inverse`).
    ``oracle=True`` bypasses the inner iteration with a sparse direct solve.
    """

    s: float = 1600.0
    outer_tol: float = 1e-8
    max_outer: int = 25
    alpha: float = 0.0
    inner: IterationConfig = field(default_factory=_inner_default)
    inner_map: MapSpec = field(default_factory=OptimalScalarMap)
    oracle: bool = False

    def __post_init__(self):
        if self.s == 0:
            raise ValueError("s must be nonzero")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class NewtonTrace:
    residuals: list = field(default_factory=list)  # ||F(u^(m))||_2, m = 0..steps
    inner_iters: list = field(default_factory=list)  # one per outer step; 0 in oracle mode
    inner_traces: list = field(default_factory=list)
    states: list = field(default_factory=list)  # iterates at which a Jacobian was formed
    u: np.ndarray | None = None
    converged: bool = False

    @property
    def steps(self) -> int:
        return len(self.inner_iters)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("outer_step,F_nl_norm,inner_iters\n")
            for m, res in enumerate(self.residuals):
                inner = self.inner_iters[m] if m < len(self.inner_iters) else ""
                fh.write(f"{m},{res:.10e},{inner}\n")


def newton_source(grid: GridSpec, s: float) -> np.ndarray:
    x, y = grid.coords()
    return -s * np.sin(np.pi * x / grid.lx) * np.sin(np.pi * y / grid.ly)


def nonlinear_residual(u, s: float, grid: GridSpec | None = None) -> np.ndarray:
    """``F(u) = L_D u - u^2 - f`` on interior nodes."""
    grid = getattr(u, "grid", grid)
    if grid is None or grid.bc is not BC.DIRICHLET:
        raise ValueError("nonlinear_residual needs a Dirichlet interior grid")
    u = np.asarray(getattr(u, "data", u), dtype=float)
    return five_point(u, grid.hx, grid.hy) - u * u - newton_source(grid, s)


def jacobian_matrix(u, grid: GridSpec) -> sp.csc_matrix:
    return (five_point_matrix(grid) - sp.diags(2.0 * np.ravel(u))).tocsc()


def _resolve_map(spec: MapSpec, problem) -> CorrectionMap:
    if isinstance(spec, CorrectionMap):
        return spec
    return spec(problem)


def newton_step(u, config: NewtonConfig, grid: GridSpec | None = None):
    """One Newton update; returns ``(u_new, inner_trace)`` (trace is None in oracle mode)."""
    grid = getattr(u, "grid", grid) or default_grid(np.shape(u)[0])
    u = np.asarray(getattr(u, "data", u), dtype=float)
    rhs = -nonlinear_residual(u, config.s, grid)
    if config.oracle:
        du = spla.spsolve(jacobian_matrix(u, grid), rhs.ravel()).reshape(grid.shape)
        return u + du, None
    problem = NewtonJacobianProblem(u, grid, alpha=config.alpha)
    if not np.any(rhs):
        return u.copy(), IterationTrace([0.0], [0.0], 0, Termination.CONVERGED)
    cmap = _resolve_map(config.inner_map, problem)
    du, trace = run(problem, cmap, rhs, config.inner)
    if trace.terminated is Termination.DIVERGED:
        raise NewtonError(
            f"inner solve diverged after {trace.iters} iterations "
            f"(relative residual {trace.final:.3e}, ubar={problem.ubar:.3f})"
        )
    if trace.terminated is not Termination.CONVERGED:
        log.warning("inner solve stopped (%s) at relative residual %.3e",
                    trace.terminated.value, trace.final)
    return u + du.real, trace


def solve_newton(u0, config: NewtonConfig | None = None, grid: GridSpec | None = None) -> NewtonTrace:
    """Undamped Newton from ``u0`` until ``||F(u)||_2 <= outer_tol`` or ``max_outer`` steps."""
    config = config or NewtonConfig()
    grid = getattr(u0, "grid", grid) or default_grid(np.shape(u0)[0])
    u = np.array(getattr(u0, "data", u0), dtype=float)
    trace = NewtonTrace()
    trace.residuals.append(float(np.linalg.norm(nonlinear_residual(u, config.s, grid))))
    for _ in range(config.max_outer):
        if trace.residuals[-1] <= config.outer_tol:
            break
        trace.states.append(u.copy())
        u, inner = newton_step(u, config, grid)
        trace.inner_iters.append(0 if inner is None else inner.iters)
        trace.inner_traces.append(inner)
        res = float(np.linalg.norm(nonlinear_residual(u, config.s, grid)))
        trace.residuals.append(res)
        if not np.isfinite(res):
            break
    trace.u = u
    trace.converged = trace.residuals[-1] <= config.outer_tol
    return trace


# -- multiple solutions ----------------------------------------------------


def low_mode(grid: GridSpec, i: int, j: int) -> np.ndarray:
    x, y = grid.coords()
    return np.sin(i * np.pi * x / grid.lx) * np.sin(j * np.pi * y / grid.ly)


# (amplitude, i, j) seeds that reach the four branches found at s = 1600
BRANCH_SEEDS = ((0.0, 1, 1), (40.0, 1, 1), (60.0, 2, 1), (60.0, 1, 2))


def relative_distance(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.finfo(float).tiny))


def distinct_solutions(solutions, tol: float = 0.1) -> list:
    """Greedy clustering: keep a solution if it is ``tol``-far (relative L2) from all kept ones."""
    kept = []
    for u in solutions:
        if all(relative_distance(u, v) > tol for v in kept):
            kept.append(u)
    return kept


def solution_bank(grid: GridSpec, s: float = 1600.0, seeds=BRANCH_SEEDS, tol: float = 1e-6) -> list:
    """Distinct roots reached by oracle Newton from scaled low-mode states."""
    cfg = NewtonConfig(s=s, oracle=True, max_outer=40)
    roots = []
    for amp, i, j in seeds:
        tr = solve_newton(amp * low_mode(grid, i, j), cfg, grid)
        if tr.converged and all(relative_distance(tr.u, r) > tol for r in roots):
            roots.append(tr.u)
    return roots


def perturbed_starts(bank, grid: GridSpec, n: int, seed: int, alpha: float = 4.0,
                     coeff_std: float = 0.1, modes: int = 4) -> list:
    """``u0_k = bank[k mod len(bank)] + sine_noise_k``, one spawned seed per start."""
    if not bank:
        raise ValueError("empty solution bank")
    starts = []
    for k, sd in enumerate(spawn_seeds(seed, n)):
        noise = sine_noise(grid, modes=modes, coeff_std=coeff_std, alpha=alpha, rng=make_rng(sd))
        starts.append(bank[k % len(bank)] + noise.data)
    return starts


def dense_born_map(problem) -> DenseExactMap:
    """Inner-map factory giving one-step-exact NPBS solves (``<= 4096`` unknowns)."""
    return DenseExactMap.born_inverse(problem)


def factorized_born_map(problem) -> FactorizedBornMap:
    """Inner-map factory with the same one-step-exact operator, via sparse LU."""
    return FactorizedBornMap(problem)
