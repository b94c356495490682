"""Invariant suites behind ``bornprec verify``.

Each suite returns a list of :class:`Check` records; a suite passes when no
check has status ``fail`` (``n/a`` records a check whose hypothesis does not
hold for that instance, e.g. the condition bound when ``rho >= 1``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correction import FourierDiagMap, ScalarMap
from .families import CdrFamily, HelmholtzFamily, instance_rng
from .fields import make_rng, sample_grf
from .iterate import spectral_diagnostics
from .newton import default_grid, solution_bank
from .problems import (
    CdrProblem,
    HelmholtzProblem,
    NewtonJacobianProblem,
    assemble_dense,
    five_point_matrix,
)
from .spectral import BC, GridSpec, TransformKind, forward, inverse, laplacian_symbol
from .train import LossKind, eval_loss, eval_loss_riesz_form, loss_gradient, white_probes

SUITES = ("identity", "spectral", "riesz", "gradient", "transforms")


@dataclass
class Check:
    suite: str
    name: str
    case: str
    value: float
    threshold: float
    status: str  # pass | fail | n/a

    @property
    def ok(self) -> bool:
        return self.status != "fail"


def _check(suite, name, case, value, threshold) -> Check:
    value = float(value)
    return Check(suite, name, case, value, threshold, "pass" if value <= threshold else "fail")


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def _max_rel(a, b) -> float:
    """Largest per-probe relative error over the leading batch axis."""
    num = np.linalg.norm(a - b, axis=(-2, -1))
    den = np.linalg.norm(b, axis=(-2, -1))
    return float(np.max(num / np.maximum(den, np.finfo(float).tiny)))


def newton_state(n: int, branch: int = 0, s: float = 1600.0) -> np.ndarray:
    """A converged root of the nonlinear benchmark on an ``n x n`` interior grid."""
    bank = solution_bank(default_grid(n), s)
    return bank[min(branch, len(bank) - 1)]


def standard_problems(seed: int = 0, size: str = "full") -> dict:
    """One instance per family: 64^2 periodic / 63^2 Dirichlet (``full``) or 8^2 (``tiny``)."""
    if size == "full":
        helm = HelmholtzFamily().sample(seed, 0)[0]
        cdr = CdrFamily().sample(seed, 0)[0]
        newton = NewtonJacobianProblem(newton_state(63), default_grid(63))
        return {"helmholtz": helm, "cdr": cdr, "newton": newton}
    rng = instance_rng(seed, 7)
    g = GridSpec(8, 8)
    k2 = 30.0 + 8.0 * rng.standard_normal(g.shape) + 3j * rng.uniform(0, 1, g.shape)
    helm = HelmholtzProblem(k2, g)
    kappa = np.exp(0.3 * rng.standard_normal(g.shape))
    cdr = CdrProblem(kappa, rng.standard_normal(g.shape), rng.standard_normal(g.shape),
                     1.0 + rng.uniform(0, 1, g.shape), g)
    gd = GridSpec(8, 8, bc=BC.DIRICHLET)
    newton = NewtonJacobianProblem(5.0 * rng.standard_normal(gd.shape), gd, alpha=1.0)
    return {"helmholtz": helm, "cdr": cdr, "newton": newton}


def _probes(problem, n, rng):
    return white_probes(problem.shape, n, rng)


def suite_identity(seed: int = 0, probes: int = 100, problems: dict | None = None) -> list:
    """Splitting, inverse and key identities on one instance per family."""
    problems = problems or standard_problems(seed)
    rng = make_rng(seed)
    out = []
    for fam, p in problems.items():
        r = _probes(p, probes, rng)
        out.append(_check("identity", "key_identity", fam, _key_identity(p, r), 1e-12))
        out.append(_check("identity", "splitting", fam, _max_rel(p.apply_Lref(r) - p.apply_V(r), p.apply_A(r)), 1e-12))
        out.append(_check("identity", "green_inverse", fam, _max_rel(p.apply_Lref(p.apply_G(r)), r), 1e-12))
    return out


def _key_identity(p, r) -> float:
    """``max ||(I - G V) r - G A r|| / ||r||`` over the probe batch."""
    err = np.linalg.norm(p.apply_T(r) - p.apply_G(p.apply_A(r)), axis=(-2, -1))
    return float(np.max(err / np.linalg.norm(r, axis=(-2, -1))))


def spectral_cases(seed: int = 0) -> dict:
    """Dense-size (<= 32^2) instances with default eta / sigma0 / alpha."""
    g = GridSpec(32, 32)
    k2 = 20.0 + 5.0 * np.tanh(sample_grf(g, 0.15, rng=instance_rng(seed, 3)).data)
    gn = default_grid(31)
    bank = solution_bank(gn)
    return {
        "helmholtz-layered": HelmholtzFamily(n=32, sponge_points=6).sample(seed, 0)[0],
        "helmholtz-lowfreq": HelmholtzProblem(k2, g),
        "cdr": CdrFamily(n=32).sample(seed, 0)[0],
        "newton-branch0": NewtonJacobianProblem(bank[0], gn),
        "newton-branch1": NewtonJacobianProblem(bank[1], gn),
    }


def suite_spectral(seed: int = 0, cases: dict | None = None) -> list:
    """Disk and condition-number bounds for ``I - G V`` from dense eigen/singular values."""
    cases = cases or spectral_cases(seed)
    out = []
    for name, p in cases.items():
        d = spectral_diagnostics(p)
        radius = d.rho_dense + 1e-8
        worst = float(np.max(np.abs(d.eigenvalues - 1)))
        out.append(_check("spectral", "disk", name, worst, radius))
        gap = abs(d.rho_est - d.rho_dense) / d.rho_dense
        if d.converged:
            out.append(_check("spectral", "power_vs_dense", name, gap, 1e-6))
        else:
            out.append(Check("spectral", "power_vs_dense", name, gap, 1e-6, "n/a"))
        if d.kappa_bound is None:
            out.append(Check("spectral", "kappa_bound", name, d.kappa, float("inf"), "n/a"))
        else:
            out.append(_check("spectral", "kappa_bound", name, d.kappa, d.kappa_bound * (1 + 1e-6)))
    return out


def suite_riesz(seed: int = 0, probes: int = 50, problems: dict | None = None) -> list:
    """Integral-form vs Riesz-form metric-matched loss for scalar and diagonal maps."""
    problems = problems or standard_problems(seed)
    rng = make_rng(seed + 1)
    out = []
    for fam, p in problems.items():
        r = _probes(p, probes, rng)
        m = 1.0 + 0.3 * (rng.standard_normal(p.shape) + 1j * rng.standard_normal(p.shape))
        maps = {"scalar": ScalarMap(0.7 - 0.2j), "fourier_diag": FourierDiagMap(m, p.kind)}
        for mname, cmap in maps.items():
            a = eval_loss(LossKind.BSRETA, p, cmap, r)
            b = eval_loss_riesz_form(p, cmap, r)
            out.append(_check("riesz", f"riesz_{mname}", fam, abs(a - b) / max(abs(a), 1e-300), 1e-10))
    return out


def suite_gradient(seed: int = 0, directions: int = 10, eps: float = 1e-6) -> list:
    """Analytic gradients against central differences on 8x8 heterogeneous instances."""
    from .train import squared_loss_and_gradient

    problems = standard_problems(seed, size="tiny")
    rng = make_rng(seed + 2)
    out = []
    for fam, p in problems.items():
        probes = _probes(p, 4, rng)
        m0 = 1.0 + 0.2 * (rng.standard_normal(p.shape) + 1j * rng.standard_normal(p.shape))
        if p.kind is not TransformKind.FFT:
            m0 = m0.real + 0.1j * m0.imag
        base = FourierDiagMap(m0, p.kind)
        theta = base.theta
        for kind in LossKind:
            grad = loss_gradient(kind, p, base, probes)
            worst = 0.0
            for _ in range(directions):
                d = rng.standard_normal(theta.size)
                lp = squared_loss_and_gradient(kind, p, base.with_theta(theta + eps * d), probes)[0]
                lm = squared_loss_and_gradient(kind, p, base.with_theta(theta - eps * d), probes)[0]
                fd = (lp - lm) / (2 * eps)
                an = float(grad @ d)
                worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
            out.append(_check("gradient", f"grad_{kind.value}", fam, worst, 1e-5))
    return out


def suite_transforms(seed: int = 0) -> list:
    """Round trips, DST-I Laplacian eigenvalues and dense Green operators."""
    rng = make_rng(seed + 3)
    out = []
    for kind, bc in [(TransformKind.FFT, BC.PERIODIC), (TransformKind.DST1, BC.DIRICHLET),
                     (TransformKind.DCT, BC.NEUMANN)]:
        x = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        out.append(_check("transforms", "round_trip", kind.value, _rel(inverse(forward(x, kind), kind), x), 1e-12))
    for n in (3, 5, 7):
        g = GridSpec(n, n, bc=BC.DIRICHLET)
        dense = np.sort(np.linalg.eigvalsh(five_point_matrix(g).toarray()))
        sym = np.sort(laplacian_symbol(g).values.real.ravel())
        out.append(_check("transforms", "dst1_symbol", f"N={n}", np.max(np.abs(sym - dense) / dense), 1e-10))
    for fam, p in _green_cases(seed).items():
        g_dense = assemble_dense(p, "G")
        ref = np.linalg.inv(assemble_dense(p, "Lref"))
        out.append(_check("transforms", "green_dense", fam, _rel(g_dense, ref), 1e-10))
    return out


def _green_cases(seed: int) -> dict:
    rng = instance_rng(seed, 11)
    g = GridSpec(16, 16)
    gd = GridSpec(15, 15, bc=BC.DIRICHLET)
    return {
        "helmholtz": HelmholtzProblem(40.0 + 10.0 * rng.standard_normal(g.shape), g),
        "cdr": CdrProblem(np.exp(0.3 * rng.standard_normal(g.shape)), rng.standard_normal(g.shape),
                          rng.standard_normal(g.shape), 1.0 + rng.uniform(0, 1, g.shape), g),
        "newton": NewtonJacobianProblem(5.0 * rng.standard_normal(gd.shape), gd),
    }


def run_suite(name: str, seed: int = 0) -> list:
    fn = {
        "identity": suite_identity,
        "spectral": suite_spectral,
        "riesz": suite_riesz,
        "gradient": suite_gradient,
        "transforms": suite_transforms,
    }.get(name)
    if fn is None:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return fn(seed=seed)
