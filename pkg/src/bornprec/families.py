"""Seeded problem families used by training, benchmarks and the acceptance suite.

Every builder takes a root seed and an index; the per-instance generator is
derived with :func:`numpy.random.SeedSequence` so that instance ``i`` is the
same whatever else is drawn.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import (
    gaussian_bump,
    layered_velocity,
    make_rng,
    sample_grf,
    sponge_profile,
    stream_velocity,
    wavenumber_from_velocity,
)
from .newton import NewtonConfig, default_grid, perturbed_starts, solution_bank, solve_newton
from .problems import CdrProblem, HelmholtzProblem, NewtonJacobianProblem
from .spectral import GridSpec


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return make_rng(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class HelmholtzFamily:
    """Layered media at fixed points-per-wavelength with a quadratic sponge."""

    n: int = 64
    ppw: float = 12.0
    contrast: float = 2.0
    n_layers: int = 4
    sponge_points: int = 12
    sponge_strength: float = 1.0
    eta_factor: float = 1.0  # multiplies the default eta

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.n)

    def sample(self, seed: int, index: int):
        rng = instance_rng(seed, index)
        g = self.grid
        c = layered_velocity(g, rng, n_layers=self.n_layers, contrast=self.contrast)
        k, _ = wavenumber_from_velocity(c, self.ppw)
        sponge = sponge_profile(g, self.sponge_points, self.sponge_strength)
        problem = HelmholtzProblem.from_wavenumber(k, g, sponge=sponge)
        if self.eta_factor != 1.0:
            problem = HelmholtzProblem(problem.k2, g, k0=problem.k0, eta=problem.eta * self.eta_factor)
        return problem, _bump(g, rng)


@dataclass(frozen=True)
class CdrFamily:
    """Lognormal diffusion, stream-function velocity and positive reaction on a periodic box."""

    n: int = 64
    corr: float = 0.15
    log_kappa_std: float = 0.5
    psi_std: float = 0.05
    sigma_mean: float = 1.0
    log_sigma_std: float = 0.5
    dealias: bool = False

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.n)

    def sample(self, seed: int, index: int):
        rng = instance_rng(seed, index)
        g = self.grid
        kappa = np.exp(sample_grf(g, self.corr, std=self.log_kappa_std, rng=rng).data)
        psi = sample_grf(g, self.corr, std=self.psi_std, rng=rng)
        vx, vy = stream_velocity(psi)
        sigma = self.sigma_mean * np.exp(sample_grf(g, self.corr, std=self.log_sigma_std, rng=rng).data)
        problem = CdrProblem(kappa, vx, vy, sigma, g, dealias=self.dealias)
        return problem, _bump(g, rng)


def _bump(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    center = (rng.uniform(0, grid.lx), rng.uniform(0, grid.ly))
    width = rng.uniform(0.03, 0.1) * min(grid.lx, grid.ly)
    return gaussian_bump(grid, center, width).data.astype(complex)


def sample_family(family, seed: int, indices) -> list:
    return [family.sample(seed, i) for i in indices]


@dataclass(frozen=True)
class NewtonFamily:
    """Jacobian problems at the iterates of oracle Newton runs from perturbed branch roots."""

    n: int = 63
    s: float = 1600.0
    starts: int = 4
    alpha: float = 0.0
    noise_alpha: float = 4.0

    @property
    def grid(self) -> GridSpec:
        return default_grid(self.n)

    def states(self, seed: int) -> list:
        return list(_newton_states(self.n, self.s, self.starts, self.noise_alpha, int(seed)))

    def problems(self, seed: int) -> list:
        return [NewtonJacobianProblem(u, self.grid, alpha=self.alpha) for u in self.states(seed)]

    def sample(self, seed: int, index: int):
        """Jacobian at the ``index``-th harvested state with a bump right-hand side."""
        states = self.states(seed)
        u = states[index % len(states)]
        rng = instance_rng(seed, index)
        x, y = self.grid.coords()
        cx, cy = rng.uniform(0.2, 0.8, size=2)
        w = rng.uniform(0.05, 0.15)
        f = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w**2)) + 0j
        return NewtonJacobianProblem(u, self.grid, alpha=self.alpha), f


@lru_cache(maxsize=8)
def _newton_states(n: int, s: float, starts: int, noise_alpha: float, seed: int) -> tuple:
    g = default_grid(n)
    bank = solution_bank(g, s)
    cfg = NewtonConfig(s=s, oracle=True)
    out = []
    for u0 in perturbed_starts(bank, g, starts, seed, alpha=noise_alpha):
        out.extend(solve_newton(u0, cfg, g).states)
    for u in out:
        u.setflags(write=False)
    return tuple(out)
