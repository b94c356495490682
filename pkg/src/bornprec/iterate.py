"""Direct, CBS and NPBS iterations with residual traces and spectral checks."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .correction import CorrectionMap, OptimalScalarMap, ScalarMap, StepContext, apply_correction
from .problems import DENSE_CAP, assemble_dense

log = logging.getLogger(__name__)


class Format(str, enum.Enum):
    DIRECT = "direct"
    CBS = "cbs"
    NPBS = "npbs"


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"
    STAGNATED = "stagnated"


@dataclass
class IterationConfig:
    format: Format = Format.NPBS
    rtol: float = 1e-6
    max_iters: int = 1000
    stagnation_window: int = 20
    stagnation_tol: float = 1e-14
    divergence: float = 1e8

    def __post_init__(self):
        self.format = Format(self.format)
        if not 0 < self.rtol < 1:
            raise ValueError(f"rtol must lie in (0, 1), got {self.rtol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class IterationTrace:
    residual_l2: list = field(default_factory=list)
    residual_reta: list = field(default_factory=list)
    iters: int = 0
    terminated: Termination = Termination.MAX_ITERS

    @property
    def final(self) -> float:
        return self.residual_l2[-1]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,res_l2_rel,res_Reta_rel\n")
            for k, (a, b) in enumerate(zip(self.residual_l2, self.residual_reta)):
                fh.write(f"{k},{a:.10e},{b:.10e}\n")


def residual(problem, u, f):
    return np.asarray(f) - problem.apply_A(u)


def norm_reta(problem, x) -> float:
    """``||x||_{R_eta} = ||G x||_2``."""
    return float(np.linalg.norm(problem.apply_G(x)))


def born_residual(problem, u, f):
    """``G (V u + f) - u``: the integral form, one transform pair."""
    return problem.apply_G(problem.apply_V(u) + f) - u


def _check_update(u):
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite iterate")
    return u


def step_direct(problem, cmap: CorrectionMap, u, f, r=None):
    r = residual(problem, u, f) if r is None else r
    ctx = None
    if isinstance(cmap, OptimalScalarMap):
        ctx = StepContext(problem, residual=r, born_residual=problem.apply_G(r))
    return _check_update(u + apply_correction(cmap, r, ctx))


def step_npbs(problem, cmap: CorrectionMap, u, f, r=None, rbs=None):
    rbs = born_residual(problem, u, f) if rbs is None else rbs
    ctx = None
    if isinstance(cmap, OptimalScalarMap):
        if r is None:
            r = residual(problem, u, f)
        ctx = StepContext(problem, residual=r, born_residual=rbs)
    return _check_update(u + apply_correction(cmap, rbs, ctx))


def step_cbs(problem, gamma: complex, u, f):
    """Shifted-Laplacian Richardson form ``u + gamma G (f - A u)``."""
    return _check_update(u + gamma * problem.apply_G(residual(problem, u, f)))


def cbs_gamma(problem, cmap: OptimalScalarMap, r, rb) -> complex:
    """Per-step optimal relaxation for the Born residual ``rb``."""
    ctx = StepContext(problem, residual=r, born_residual=rb)
    probe = apply_correction(cmap, rb, ctx)
    nb = np.vdot(rb, rb)
    return complex(np.vdot(rb, probe) / nb) if nb != 0 else 0j


def run(problem, cmap: CorrectionMap, f, config: IterationConfig | None = None, u0=None):
    """Iterate until ``||f - A u|| / ||f|| <= rtol``; returns ``(u, trace)``."""
    config = config or IterationConfig()
    f = np.asarray(getattr(f, "data", f), dtype=complex)
    fnorm = np.linalg.norm(f)
    if fnorm == 0:
        raise ValueError("right-hand side is zero")
    gfnorm = norm_reta(problem, f)
    u = np.zeros_like(f) if u0 is None else np.array(getattr(u0, "data", u0), dtype=complex)
    if config.format is Format.CBS and not isinstance(cmap, (ScalarMap, OptimalScalarMap)):
        raise ValueError("CBS format takes a scalar map")
    trace = IterationTrace()

    def monitor(u):
        r = residual(problem, u, f)
        if config.format is Format.DIRECT:
            rb = problem.apply_G(r)
        else:
            rb = born_residual(problem, u, f)
        trace.residual_l2.append(float(np.linalg.norm(r) / fnorm))
        trace.residual_reta.append(float(np.linalg.norm(rb) / gfnorm))
        return r, rb

    r, rb = monitor(u)
    for k in range(1, config.max_iters + 1):
        rel = trace.residual_l2[-1]
        if rel <= config.rtol:
            trace.terminated = Termination.CONVERGED
            break
        if not np.isfinite(rel) or rel > config.divergence:
            trace.terminated = Termination.DIVERGED
            break
        w = config.stagnation_window
        if len(trace.residual_l2) > w:
            old = trace.residual_l2[-1 - w]
            if abs(rel - old) <= config.stagnation_tol * old:
                trace.terminated = Termination.STAGNATED
                break
        try:
            if config.format is Format.DIRECT:
                u = step_direct(problem, cmap, u, f, r=r)
            elif config.format is Format.NPBS:
                u = step_npbs(problem, cmap, u, f, r=r, rbs=rb)
            else:
                gamma = cmap.gamma if isinstance(cmap, ScalarMap) else cbs_gamma(problem, cmap, r, rb)
                u = step_cbs(problem, gamma, u, f)
        except FloatingPointError:
            trace.iters = k - 1
            trace.terminated = Termination.DIVERGED
            return u, trace
        trace.iters = k
        r, rb = monitor(u)
    else:
        rel = trace.residual_l2[-1]
        trace.terminated = Termination.CONVERGED if rel <= config.rtol else Termination.MAX_ITERS
    return u, trace


# -- spectral diagnostics --------------------------------------------------


@dataclass
class SpectralDiagnostics:
    rho_est: float
    converged: bool
    sweeps: int
    rho_dense: float | None = None
    eigenvalues: np.ndarray | None = None
    disk_ok: bool | None = None
    kappa: float | None = None
    kappa_bound: float | None = None
    kappa_ok: bool | None = None

    @property
    def contracting(self) -> bool:
        rho = self.rho_dense if self.rho_dense is not None else self.rho_est
        return rho < 1


def kappa_bound(rho: float) -> float:
    """``(1 + rho) / (1 - rho)``; infinite when ``rho >= 1``."""
    return (1 + rho) / (1 - rho) if rho < 1 else float("inf")


def estimate_gv_norm(problem, max_sweeps: int = 500, tol: float = 1e-12, seed: int = 0):
    """Power iteration on ``(GV)^H (GV)``; returns ``(norm, converged, sweeps)``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(problem.shape) + 1j * rng.standard_normal(problem.shape)
    v /= np.linalg.norm(v)
    prev = 0.0
    for sweep in range(1, max_sweeps + 1):
        w = problem.apply_G(problem.apply_V(v))
        lam = float(np.vdot(w, w).real)
        z = problem.apply_V_adj(problem.apply_G_adj(w))
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0, True, sweep
        v = z / nz
        if abs(lam - prev) <= tol * lam:
            return float(np.sqrt(lam)), True, sweep
        prev = lam
    log.warning("power iteration did not converge in %d sweeps", max_sweeps)
    return float(np.sqrt(prev)), False, max_sweeps


def spectral_diagnostics(problem, dense: bool | None = None, slack: float = 1e-8, **kw) -> SpectralDiagnostics:
    """Estimate ``||G V||_2`` and, for small problems, check the disk and condition bounds."""
    rho, ok, sweeps = estimate_gv_norm(problem, **kw)
    diag = SpectralDiagnostics(rho_est=rho, converged=ok, sweeps=sweeps)
    if dense is None:
        dense = problem.size <= DENSE_CAP
    if not dense:
        return diag
    gv = assemble_dense(problem, "G") @ assemble_dense(problem, "V")
    diag.rho_dense = float(np.linalg.norm(gv, 2))
    t = np.eye(problem.size) - gv
    diag.eigenvalues = np.linalg.eigvals(t)
    radius = diag.rho_dense + slack
    diag.disk_ok = bool(np.all(np.abs(diag.eigenvalues - 1) <= radius))
    sv = np.linalg.svd(t, compute_uv=False)
    diag.kappa = float(sv[0] / sv[-1])
    if radius < 1:
        diag.kappa_bound = kappa_bound(radius)
        diag.kappa_ok = diag.kappa <= diag.kappa_bound * (1 + 1e-6)
    return diag
