"""Discrete systems ``A u = f`` split as ``A = L_ref - V`` with fast ``G = L_ref^-1``.

All ``apply_*`` methods accept arrays of shape ``(..., nx, ny)`` and act on
the last two axes, so a stack of probes is processed in one call.  Each
operator also has an adjoint (``*_adj``) used by the trainer.
"""
from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fields import read_field, write_field
from .spectral import (
    BC,
    GridSpec,
    SpectralSymbol,
    check_invertible,
    dealias_mask,
    derivative_wavenumbers,
    forward,
    inverse,
    laplacian_symbol,
)

DENSE_CAP = 4096


class ProblemBundle:
    """Base class: subclasses set ``grid`` and ``symbol`` and define ``apply_A``/``apply_V``."""

    family = "generic"
    grid: GridSpec
    symbol: SpectralSymbol

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def kind(self):
        return self.symbol.kind

    def _check(self, u) -> np.ndarray:
        u = np.asarray(getattr(u, "data", u))
        if u.shape[-2:] != self.grid.shape:
            raise ValueError(f"array shape {u.shape} does not match problem grid {self.grid.shape}")
        return u

    def apply_Lref(self, u):
        u = self._check(u)
        return inverse(forward(u, self.kind) * self.symbol.values, self.kind)

    def apply_G(self, q):
        q = self._check(q)
        return inverse(forward(q, self.kind) / self.symbol.values, self.kind)

    def apply_Lref_adj(self, u):
        u = self._check(u)
        return inverse(forward(u, self.kind) * np.conj(self.symbol.values), self.kind)

    def apply_G_adj(self, q):
        q = self._check(q)
        return inverse(forward(q, self.kind) / np.conj(self.symbol.values), self.kind)

    def apply_A(self, u):
        raise NotImplementedError

    def apply_V(self, u):
        raise NotImplementedError

    def apply_A_adj(self, u):
        raise NotImplementedError

    def apply_V_adj(self, u):
        raise NotImplementedError

    def apply_T(self, x):
        """Preconditioned operator ``(I - G V) x``, one transform pair."""
        x = self._check(x)
        return x - self.apply_G(self.apply_V(x))

    def apply_T_adj(self, x):
        x = self._check(x)
        return x - self.apply_V_adj(self.apply_G_adj(x))


# -- Helmholtz -------------------------------------------------------------


class HelmholtzProblem(ProblemBundle):
    """``A u = -Lap u - k2 u`` (spectral Laplacian, periodic grid).

    ``k2`` may be complex; sponge damping enters as ``k^2 (1 + i d)``.
    ``L_eta = -Lap - (k0^2 + i eta)`` and ``V = k2 - k0^2 - i eta``.
    """

    family = "helmholtz"

    def __init__(self, k2, grid: GridSpec, k0: float | None = None, eta: float | None = None):
        if grid.bc is not BC.PERIODIC:
            raise ValueError("Helmholtz problems use a periodic grid")
        k2 = np.asarray(getattr(k2, "data", k2), dtype=complex)
        if k2.shape != grid.shape:
            raise ValueError("k2 does not match grid")
        self.grid = grid
        self.k2 = k2
        if k0 is None:
            k0 = default_k0(k2)
        self.k0 = float(k0)
        if eta is None:
            eta = default_eta(k2, self.k0)
        if not eta > 0:
            raise ValueError("eta must be positive")
        self.eta = float(eta)
        self.lap = laplacian_symbol(grid, "spectral").values.real
        self.symbol = SpectralSymbol(self.lap - (self.k0**2 + 1j * self.eta), grid.kind)
        check_invertible(self.symbol.values)
        self.potential = k2 - self.k0**2 - 1j * self.eta

    @classmethod
    def from_wavenumber(cls, k, grid, sponge=None, **kw):
        """Build from real ``k(x)`` and optional damping profile ``d(x)``."""
        k = np.asarray(getattr(k, "data", k), dtype=float)
        k2 = k**2 + 0j
        if sponge is not None:
            k2 = k2 * (1 + 1j * np.asarray(getattr(sponge, "data", sponge)))
        return cls(k2, grid, **kw)

    def apply_A(self, u):
        u = self._check(u)
        return np.fft.ifft2(self.lap * np.fft.fft2(u)) - self.k2 * u

    def apply_A_adj(self, u):
        u = self._check(u)
        return np.fft.ifft2(self.lap * np.fft.fft2(u)) - np.conj(self.k2) * u

    def apply_V(self, u):
        return self.potential * self._check(u)

    def apply_V_adj(self, u):
        return np.conj(self.potential) * self._check(u)

    def metadata(self) -> dict:
        return {"k0": self.k0, "eta": self.eta}


def default_k0(k2) -> float:
    """Background wavenumber with ``k0^2 = mean(Re k^2)``."""
    return float(np.sqrt(np.mean(np.real(k2))))


def default_eta(k2, k0: float, factor: float = 1.05) -> float:
    """``eta = factor * max |k^2 - k0^2|`` (floored to stay positive)."""
    dev = float(np.max(np.abs(np.asarray(k2) - k0**2)))
    return factor * dev if dev > 0 else factor * max(k0**2, 1.0) * 1e-3


# -- convection-diffusion-reaction ----------------------------------------


class CdrProblem(ProblemBundle):
    """``-div(kappa grad u) + v.grad u + sigma u`` on a periodic grid.

    Reference ``L0 = -kappa0 Lap + v0.grad + sigma0`` (Fourier diagonal);
    ``V = div(dk grad u) - dv.grad u - ds u`` with spectral gradients and
    pointwise products; ``A := L0 - V``.
    """

    family = "cdr"

    def __init__(self, kappa, vx, vy, sigma, grid: GridSpec, kappa0=None, v0=None, sigma0=None,
                 dealias: bool = False):
        if grid.bc is not BC.PERIODIC:
            raise ValueError("CDR problems use a periodic grid")
        arr = lambda a: np.asarray(getattr(a, "data", a), dtype=float) * np.ones(grid.shape)
        self.grid = grid
        self.kappa, self.vx, self.vy, self.sigma = arr(kappa), arr(vx), arr(vy), arr(sigma)
        self.kappa0 = float(_midrange(self.kappa) if kappa0 is None else kappa0)
        self.v0 = (float(np.mean(self.vx)), float(np.mean(self.vy))) if v0 is None else tuple(map(float, v0))
        self.sigma0 = float(_midrange(self.sigma) if sigma0 is None else sigma0)
        self.dealias = bool(dealias)
        self.dk = self.kappa - self.kappa0
        self.dvx = self.vx - self.v0[0]
        self.dvy = self.vy - self.v0[1]
        self.ds = self.sigma - self.sigma0
        self.lap = laplacian_symbol(grid, "spectral").values.real
        kx, ky = derivative_wavenumbers(grid)
        self.ikx = 1j * kx[:, None] * np.ones(grid.shape)
        self.iky = 1j * ky[None, :] * np.ones(grid.shape)
        self.symbol = SpectralSymbol(
            self.kappa0 * self.lap + self.v0[0] * self.ikx + self.v0[1] * self.iky + self.sigma0,
            grid.kind,
        )
        check_invertible(self.symbol.values)
        self.mask = dealias_mask(grid) if self.dealias else None

    def _proj(self, uh):
        return uh * self.mask if self.mask is not None else uh

    def apply_V(self, u):
        u = self._check(u)
        uh = self._proj(np.fft.fft2(u))
        ux, uy = np.fft.ifft2(self.ikx * uh), np.fft.ifft2(self.iky * uh)
        out = self.ikx * np.fft.fft2(self.dk * ux) + self.iky * np.fft.fft2(self.dk * uy)
        out -= np.fft.fft2(self.dvx * ux + self.dvy * uy + self.ds * np.fft.ifft2(uh))
        return np.fft.ifft2(self._proj(out))

    def apply_V_adj(self, u):
        # D^H = -D for the Nyquist-free derivative, so advection turns into div(dv w)
        u = self._check(u)
        uh = self._proj(np.fft.fft2(u))
        w = np.fft.ifft2(uh)
        ux, uy = np.fft.ifft2(self.ikx * uh), np.fft.ifft2(self.iky * uh)
        out = self.ikx * np.fft.fft2(self.dk * ux) + self.iky * np.fft.fft2(self.dk * uy)
        out += self.ikx * np.fft.fft2(self.dvx * w) + self.iky * np.fft.fft2(self.dvy * w)
        out -= np.fft.fft2(self.ds * w)
        return np.fft.ifft2(self._proj(out))

    def apply_A(self, u):
        return self.apply_Lref(u) - self.apply_V(u)

    def apply_A_adj(self, u):
        return self.apply_Lref_adj(u) - self.apply_V_adj(u)

    def metadata(self) -> dict:
        return {"kappa0": self.kappa0, "v0x": self.v0[0], "v0y": self.v0[1],
                "sigma0": self.sigma0, "dealias": self.dealias}


def _midrange(a) -> float:
    return 0.5 * (float(np.min(a)) + float(np.max(a)))


# -- Newton Jacobian -------------------------------------------------------


def five_point(u: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """``-Lap_h u`` with a zero Dirichlet halo, on the last two axes."""
    out = (2.0 / hx**2 + 2.0 / hy**2) * u
    out[..., 1:, :] -= u[..., :-1, :] / hx**2
    out[..., :-1, :] -= u[..., 1:, :] / hx**2
    out[..., :, 1:] -= u[..., :, :-1] / hy**2
    out[..., :, :-1] -= u[..., :, 1:] / hy**2
    return out


def five_point_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Sparse five-point ``-Lap_h`` in row-major (``ix`` slow) ordering."""
    def d2(n, h):
        return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    ex, ey = sp.identity(grid.nx), sp.identity(grid.ny)
    return (sp.kron(d2(grid.nx, grid.hx), ey) + sp.kron(ex, d2(grid.ny, grid.hy))).tocsr()


class NewtonJacobianProblem(ProblemBundle):
    """``J = L_D - 2 diag(u)`` on Dirichlet interior nodes.

    Reference ``J0 = L_D - 2 mean(u) + alpha`` (DST-I diagonal) and
    ``V = J0 - J = 2 (u - mean(u)) + alpha``.
    """

    family = "newton"

    def __init__(self, u_current, grid: GridSpec, alpha: float = 0.0):
        if grid.bc is not BC.DIRICHLET:
            raise ValueError("Newton Jacobian problems use a Dirichlet interior grid")
        u = np.asarray(getattr(u_current, "data", u_current), dtype=float)
        if u.shape != grid.shape:
            raise ValueError("u_current does not match grid")
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.grid = grid
        self.u_current = u
        self.alpha = float(alpha)
        self.ubar = float(np.mean(u))
        self.lap = laplacian_symbol(grid, "fdm").values.real
        self.symbol = SpectralSymbol(self.lap - 2.0 * self.ubar + self.alpha, grid.kind)
        check_invertible(self.symbol.values)
        self.potential = 2.0 * (u - self.ubar) + self.alpha

    def apply_A(self, u):
        u = self._check(u)
        return five_point(u, self.grid.hx, self.grid.hy) - 2.0 * self.u_current * u

    apply_A_adj = apply_A

    def apply_V(self, u):
        return self.potential * self._check(u)

    apply_V_adj = apply_V

    def sparse_matrix(self) -> sp.csr_matrix:
        return (five_point_matrix(self.grid) - sp.diags(2.0 * self.u_current.ravel())).tocsr()

    def metadata(self) -> dict:
        return {"ubar": self.ubar, "alpha": self.alpha}


# -- dense oracles ---------------------------------------------------------


def assemble_dense(problem, operator: str = "A", chunk: int = 512) -> np.ndarray:
    """Dense matrix whose column ``j`` is ``op(e_j)`` (row-major unknown order)."""
    n = problem.size
    if n > DENSE_CAP:
        raise ValueError(f"dense assembly capped at {DENSE_CAP} unknowns, got {n}")
    op = getattr(problem, f"apply_{operator}")
    nx, ny = problem.shape
    cols = np.empty((n, n), dtype=complex)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        basis = np.zeros((stop - start, n), dtype=complex)
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        cols[:, start:stop] = np.asarray(op(basis.reshape(-1, nx, ny))).reshape(stop - start, n).T
    return cols


# -- manifests -------------------------------------------------------------


def write_problem(problem: ProblemBundle, directory, name: str = "problem") -> Path:
    """Write ``<name>.txt`` manifest plus referenced field files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    g = problem.grid
    cfg = configparser.ConfigParser()
    cfg["grid"] = {"nx": str(g.nx), "ny": str(g.ny), "lx": repr(g.lx), "ly": repr(g.ly), "bc": g.bc.value}
    sec = {"family": problem.family}
    sec.update({k: repr(v) if isinstance(v, float) else str(v) for k, v in problem.metadata().items()})
    fields = {
        "helmholtz": {"k2": "k2"},
        "cdr": {"kappa": "kappa", "vx": "vx", "vy": "vy", "sigma": "sigma"},
        "newton": {"u_current": "u_current"},
    }[problem.family]
    for key, attr in fields.items():
        fname = f"{name}_{key}.bpf"
        write_field(directory / fname, getattr(problem, attr))
        sec[key] = fname
    cfg["problem"] = sec
    path = directory / f"{name}.txt"
    with open(path, "w") as fh:
        cfg.write(fh)
    return path


def read_problem(path) -> ProblemBundle:
    path = Path(path)
    cfg = configparser.ConfigParser()
    if not cfg.read(path):
        raise FileNotFoundError(path)
    g = cfg["grid"]
    grid = GridSpec(g.getint("nx"), g.getint("ny"), g.getfloat("lx"), g.getfloat("ly"), BC(g["bc"]))
    p = cfg["problem"]
    load = lambda key: read_field(path.parent / p[key])
    family = p["family"]
    if family == "helmholtz":
        return HelmholtzProblem(load("k2"), grid, k0=p.getfloat("k0"), eta=p.getfloat("eta"))
    if family == "cdr":
        return CdrProblem(load("kappa"), load("vx"), load("vy"), load("sigma"), grid,
                          kappa0=p.getfloat("kappa0"), v0=(p.getfloat("v0x"), p.getfloat("v0y")),
                          sigma0=p.getfloat("sigma0"), dealias=p.getboolean("dealias"))
    if family == "newton":
        return NewtonJacobianProblem(load("u_current"), grid, alpha=p.getfloat("alpha"))
    raise ValueError(f"unknown problem family {family!r}")


__all__ = [
    "DENSE_CAP", "ProblemBundle", "HelmholtzProblem", "CdrProblem", "NewtonJacobianProblem",
    "assemble_dense", "five_point", "five_point_matrix", "default_k0", "default_eta",
    "write_problem", "read_problem",
]
