"""Linear correction maps ``M`` consumed by the direct and Born iterations."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import read_field, write_field
from .problems import assemble_dense
from .spectral import TransformKind, forward, inverse


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    RETA = "reta"


@dataclass
class StepContext:
    """Per-step data for maps that adapt to the current residual.

    ``residual`` is ``f - A u``; ``born_residual`` is ``G (f - A u)``.
    """

    problem: object
    residual: np.ndarray | None = None
    born_residual: np.ndarray | None = None
    stagnated: bool = field(default=False)


class CorrectionMap:
    """A map ``x -> M x`` that is linear in ``x``."""

    def __call__(self, x, context: StepContext | None = None):
        return apply_correction(self, x, context)


@dataclass
class ScalarMap(CorrectionMap):
    gamma: complex = 1.0


@dataclass
class OptimalScalarMap(CorrectionMap):
    """``gamma x`` with ``gamma`` the residual-minimizing scalar for this step.

    In the Euclidean metric the minimized quantity is ``||r - gamma A x||``;
    in the ``reta`` metric it is ``||G r - gamma G A x||``.  The scalar depends
    on the iterate, so the map is linear in ``x`` only for a frozen context.
    """

    metric: Metric = Metric.EUCLIDEAN

    def __post_init__(self):
        self.metric = Metric(self.metric)


@dataclass
class FourierDiagMap(CorrectionMap):
    """``F^-1 (m * F x)`` with a learnable complex per-mode multiplier."""

    m: np.ndarray
    kind: TransformKind = TransformKind.FFT

    def __post_init__(self):
        self.kind = TransformKind(self.kind)
        self.m = np.asarray(self.m, dtype=complex)
        if not np.all(np.isfinite(self.m)):
            raise ValueError("multiplier has non-finite entries")

    @classmethod
    def identity(cls, grid) -> "FourierDiagMap":
        return cls(np.ones(grid.shape, dtype=complex), grid.kind)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.m.real.ravel(), self.m.imag.ravel()])

    def with_theta(self, theta: np.ndarray) -> "FourierDiagMap":
        n = self.m.size
        m = (theta[:n] + 1j * theta[n:]).reshape(self.m.shape)
        return FourierDiagMap(m, self.kind)

    def save(self, path) -> None:
        write_field(path, self.m)

    @classmethod
    def load(cls, path, kind=TransformKind.FFT) -> "FourierDiagMap":
        return cls(read_field(path), kind)


@dataclass
class DenseExactMap(CorrectionMap):
    """Dense matrix map; the oracle for one-step exactness."""

    matrix: np.ndarray

    @classmethod
    def born_inverse(cls, problem) -> "DenseExactMap":
        """``(I - G V)^-1``: makes one Born step exact."""
        n = problem.size
        return cls(np.linalg.inv(np.eye(n) - assemble_dense(problem, "G") @ assemble_dense(problem, "V")))

    @classmethod
    def direct_inverse(cls, problem) -> "DenseExactMap":
        """``A^-1``: makes one direct step exact."""
        return cls(np.linalg.inv(assemble_dense(problem, "A")))


class FactorizedBornMap(CorrectionMap):
    """``(I - G V)^-1 x = A^-1 (L_ref x)`` through a sparse LU of ``A``.

    The same operator as :meth:`DenseExactMap.born_inverse`, for problems that
    expose ``sparse_matrix()`` and are too large to invert densely in
    reasonable time.
    """

    def __init__(self, problem):
        self.problem = problem
        self._lu = spla.splu(sp.csc_matrix(problem.sparse_matrix()))

    def solve(self, rhs):
        flat = rhs.reshape(-1, self.problem.size)
        out = np.empty(flat.shape, dtype=complex)
        for i, b in enumerate(flat):
            out[i] = self._lu.solve(np.ascontiguousarray(b.real))
            if np.iscomplexobj(b):
                out[i] += 1j * self._lu.solve(np.ascontiguousarray(b.imag))
        return out.reshape(rhs.shape)


def optimal_scalar(target, effect) -> complex:
    """``argmin_gamma ||target - gamma * effect||_2 = <effect, target> / ||effect||^2``.

    Returns 0 when ``effect`` vanishes (no descent direction).
    """
    denom = np.vdot(effect, effect).real
    if not denom > 0:
        return 0j
    return complex(np.vdot(effect, target) / denom)


def apply_correction(cmap: CorrectionMap, x, context: StepContext | None = None):
    x = np.asarray(getattr(x, "data", x))
    if isinstance(cmap, ScalarMap):
        return cmap.gamma * x
    if isinstance(cmap, FourierDiagMap):
        if x.shape[-2:] != cmap.m.shape:
            raise ValueError(f"input shape {x.shape} does not match multiplier {cmap.m.shape}")
        return inverse(cmap.m * forward(x, cmap.kind), cmap.kind)
    if isinstance(cmap, DenseExactMap):
        shape = x.shape
        n = shape[-2] * shape[-1]
        if cmap.matrix.shape != (n, n):
            raise ValueError(f"matrix {cmap.matrix.shape} does not match input of {n} unknowns")
        flat = x.reshape(-1, n)
        return (flat @ cmap.matrix.T).reshape(shape)
    if isinstance(cmap, FactorizedBornMap):
        return cmap.solve(np.asarray(cmap.problem.apply_Lref(x)))
    if isinstance(cmap, OptimalScalarMap):
        if context is None:
            raise ValueError("OptimalScalarMap needs a StepContext")
        problem = context.problem
        if cmap.metric is Metric.EUCLIDEAN:
            target, effect = context.residual, problem.apply_A(x)
        else:
            target, effect = context.born_residual, problem.apply_T(x)
        gamma = optimal_scalar(target, effect)
        context.stagnated = gamma == 0
        return gamma * x
    raise TypeError(f"unsupported correction map {type(cmap).__name__}")
