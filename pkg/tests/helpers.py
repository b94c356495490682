"""Small problem instances shared by the unit tests."""
import numpy as np

from bornprec.problems import CdrProblem, HelmholtzProblem, NewtonJacobianProblem
from bornprec.spectral import BC, GridSpec

TWO_PI = GridSpec(16, 16, lx=2 * np.pi, ly=2 * np.pi)


def _rng(seed=0):
    return np.random.default_rng(seed)


def _cplx(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def helmholtz(n=8, seed=0):
    rng = _rng(seed)
    g = GridSpec(n, n)
    return HelmholtzProblem(30 + 8 * rng.standard_normal(g.shape) + 2j * rng.uniform(0, 1, g.shape), g)


def cdr(n=8, seed=0):
    rng = _rng(seed)
    g = GridSpec(n, n)
    return CdrProblem(np.exp(0.3 * rng.standard_normal(g.shape)), rng.standard_normal(g.shape),
                      rng.standard_normal(g.shape), 1 + rng.uniform(0, 1, g.shape), g)


def newton(n=7, seed=0, alpha=0.0):
    g = GridSpec(n, n, bc=BC.DIRICHLET)
    return NewtonJacobianProblem(5 * _rng(seed).standard_normal(g.shape), g, alpha=alpha)


ALL = [helmholtz, cdr, newton]
