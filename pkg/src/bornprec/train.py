"""Training objectives for correction maps and a gradient-descent trainer.

Three losses, each a mean over probes ``r`` of a relative residual:

* ``dir``    ``||A M r - r|| / ||r||``
* ``bsl2``   ``||A M G r - r|| / ||r||``
* ``bsreta`` ``||(I - G V) M G r - G r|| / ||G r||``

The trainer minimizes the mean *squared* ratio; reported values are the
unsquared ratio.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .correction import CorrectionMap, FourierDiagMap, apply_correction
from .fields import make_rng
from .spectral import TransformKind, forward, inverse

log = logging.getLogger(__name__)


class LossKind(str, enum.Enum):
    DIR = "dir"
    BSL2 = "bsl2"
    BSRETA = "bsreta"


class TrainingError(RuntimeError):
    pass


def _pieces(kind: LossKind, problem, probes):
    """Return ``(x, y, B, B_adj)`` with loss residual ``e = B M x - y``."""
    kind = LossKind(kind)
    if kind is LossKind.DIR:
        return probes, probes, problem.apply_A, problem.apply_A_adj
    gr = problem.apply_G(probes)
    if kind is LossKind.BSL2:
        return gr, probes, problem.apply_A, problem.apply_A_adj
    return gr, gr, problem.apply_T, problem.apply_T_adj


def _as_batch(probes):
    probes = np.asarray(probes, dtype=complex)
    if probes.ndim == 2:
        probes = probes[None]
    if probes.shape[0] == 0:
        raise ValueError("empty probe batch")
    norms = np.linalg.norm(probes, axis=(-2, -1))
    if np.any(norms == 0):
        raise ValueError("zero probe")
    return probes


def _ratios(e, y):
    return np.linalg.norm(e, axis=(-2, -1)) / np.linalg.norm(y, axis=(-2, -1))


def eval_loss(kind: LossKind, problem, cmap: CorrectionMap, probes) -> float:
    """Mean relative residual of ``kind`` over the probe batch."""
    probes = _as_batch(probes)
    x, y, B, _ = _pieces(kind, problem, probes)
    e = B(apply_correction(cmap, x)) - y
    return float(np.mean(_ratios(e, y)))


def eval_loss_riesz_form(problem, cmap: CorrectionMap, probes) -> float:
    """``bsreta`` evaluated as ``||A M G r - r||_R / ||r||_R`` with ``||z||_R = ||G z||``."""
    probes = _as_batch(probes)
    gr = problem.apply_G(probes)
    e = problem.apply_A(apply_correction(cmap, gr)) - probes
    return float(np.mean(_ratios(problem.apply_G(e), gr)))


def _adjoint_of_inverse(z, kind: TransformKind):
    # ifft2 = F^H / N, so its adjoint is fft2 / N; the orthonormal transforms are unitary
    if kind is TransformKind.FFT:
        return np.fft.fft2(z) / (z.shape[-2] * z.shape[-1])
    return forward(z, kind)


@dataclass
class _Prepared:
    """Per-sample quantities that do not depend on the multiplier."""

    xh: np.ndarray
    y: np.ndarray
    ynorm2: np.ndarray
    B: object
    B_adj: object


def _prepare(kind, problem, probes, transform: TransformKind) -> _Prepared:
    probes = _as_batch(probes)
    x, y, B, B_adj = _pieces(kind, problem, probes)
    return _Prepared(forward(x, transform), y, np.linalg.norm(y, axis=(-2, -1)) ** 2, B, B_adj)


def _loss_grad_ratio(prep: _Prepared, cmap):
    e = prep.B(inverse(cmap.m * prep.xh, cmap.kind)) - prep.y
    ratio2 = np.linalg.norm(e, axis=(-2, -1)) ** 2 / prep.ynorm2
    jh_e = np.conj(prep.xh) * _adjoint_of_inverse(prep.B_adj(e), cmap.kind)
    grad = 2.0 * np.mean(jh_e / prep.ynorm2[:, None, None], axis=0)
    return float(np.mean(ratio2)), grad, float(np.mean(np.sqrt(ratio2)))


def squared_loss_and_gradient(kind: LossKind, problem, cmap: FourierDiagMap, probes):
    """Mean squared relative residual and its gradient in ``(Re m, Im m)``.

    Returns ``(loss, grad)`` with ``grad`` a complex array ``dL/dRe m + i dL/dIm m``.
    """
    if not isinstance(cmap, FourierDiagMap):
        raise TypeError("gradients are defined for FourierDiagMap only")
    loss, grad, _ = _loss_grad_ratio(_prepare(kind, problem, probes, cmap.kind), cmap)
    return loss, grad


def loss_gradient(kind: LossKind, problem, cmap: FourierDiagMap, probes) -> np.ndarray:
    """Gradient of the mean squared relative residual as a flat real vector ``[d Re m, d Im m]``."""
    _, g = squared_loss_and_gradient(kind, problem, cmap, probes)
    return np.concatenate([g.real.ravel(), g.imag.ravel()])


def _hessian_apply(prep: _Prepared, cmap, d):
    jd = prep.B(inverse(d * prep.xh, cmap.kind))
    out = np.conj(prep.xh) * _adjoint_of_inverse(prep.B_adj(jd), cmap.kind)
    return 2.0 * np.mean(out / prep.ynorm2[:, None, None], axis=0)


# -- probes ----------------------------------------------------------------


class ProbeKind(str, enum.Enum):
    WHITE = "white"
    REPLAY = "replay"


def white_probes(shape, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Complex white noise, ``N(0, I)`` in each of the real and imaginary parts."""
    return rng.standard_normal((batch, *shape)) + 1j * rng.standard_normal((batch, *shape))


def replay_probes(problem, f, cmap: CorrectionMap, steps: int, fmt: str = "npbs") -> np.ndarray:
    """Residuals ``f - A u^m`` collected along a rollout of the given iteration."""
    from .iterate import residual, step_direct, step_npbs

    u = np.zeros(problem.shape, dtype=complex)
    buf = []
    for _ in range(steps):
        r = residual(problem, u, f)
        if np.linalg.norm(r) == 0:
            break
        buf.append(r)
        u = step_direct(problem, cmap, u, f, r=r) if fmt == "direct" else step_npbs(problem, cmap, u, f, r=r)
    if not buf:
        raise ValueError("replay buffer is empty")
    return np.stack(buf)


# -- trainer ---------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 200
    batch: int = 32
    step_size: float = 1.0  # in units of 1/L, L the largest curvature
    step_decay: float = 0.5
    decay_every: int = 0  # 0 disables the periodic decay
    seed: int = 0
    probe_kind: ProbeKind = ProbeKind.WHITE

    def __post_init__(self):
        self.probe_kind = ProbeKind(self.probe_kind)
        if self.epochs < 0 or self.batch < 1 or not self.step_size > 0:
            raise ValueError("epochs >= 0, batch >= 1 and step_size > 0 required")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must lie in (0, 1]")


@dataclass
class TrainResult:
    cmap: FourierDiagMap
    losses: list = field(default_factory=list)  # mean unsquared ratio per epoch
    squared: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,loss,step_size\n")
            for k, (a, s) in enumerate(zip(self.losses, self.step_sizes)):
                fh.write(f"{k},{a:.10e},{s:.10e}\n")


def _total(prepared, cmap):
    loss, grad, ratio = 0.0, np.zeros_like(cmap.m), 0.0
    for prep in prepared:
        l, g, r = _loss_grad_ratio(prep, cmap)
        loss += l
        grad += g
        ratio += r
    n = len(prepared)
    return loss / n, grad / n, ratio / n


def curvature_bound(prepared, cmap, sweeps: int = 30, seed: int = 0) -> float:
    """Largest eigenvalue of the (exact, quadratic) loss Hessian by power iteration."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(cmap.m.shape) + 1j * rng.standard_normal(cmap.m.shape)
    d /= np.linalg.norm(d)
    lam = 0.0
    for _ in range(sweeps):
        hd = sum(_hessian_apply(p, cmap, d) for p in prepared) / len(prepared)
        lam = float(np.vdot(d, hd).real)
        n = np.linalg.norm(hd)
        if n == 0:
            break
        d = hd / n
    # real-parameter Hessian of a real quadratic in complex m: eigenvalue equals lam
    return max(lam, np.finfo(float).tiny)


def make_samples(problems, config: TrainConfig, probes=None):
    """Pair each problem with a probe batch drawn from the configured distribution."""
    if probes is not None:
        return [(p, _as_batch(q)) for p, q in zip(problems, probes)]
    rng = make_rng(config.seed)
    return [(p, white_probes(p.shape, config.batch, rng)) for p in problems]


def train_map(kind: LossKind, problems, config: TrainConfig | None = None, probes=None,
              init: FourierDiagMap | None = None) -> TrainResult:
    """Gradient descent on the squared loss over a family of problems.

    A step that would increase the loss is rejected and the step size halved,
    so the recorded squared loss is non-increasing.
    """
    config = config or TrainConfig()
    kind = LossKind(kind)
    problems = list(problems)
    if not problems:
        raise ValueError("no training problems")
    grid = problems[0].grid
    cmap = init if init is not None else FourierDiagMap.identity(grid)
    samples = make_samples(problems, config, probes)
    prepared = [_prepare(kind, p, q, cmap.kind) for p, q in samples]
    result = TrainResult(cmap)
    loss, grad, ratio = _total(prepared, cmap)
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss at the initial map")
    result.losses.append(ratio)
    result.squared.append(loss)
    if config.epochs == 0:
        result.step_sizes.append(0.0)
        return result
    step = config.step_size / curvature_bound(prepared, cmap, seed=config.seed)
    result.step_sizes.append(step)
    for epoch in range(1, config.epochs + 1):
        if config.decay_every and epoch % config.decay_every == 0:
            step *= config.step_decay
        for _ in range(60):
            trial = FourierDiagMap(cmap.m - step * grad, cmap.kind)
            t_loss, t_grad, t_ratio = _total(prepared, trial)
            if not np.isfinite(t_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch} (step {step:.3e})")
            if t_loss <= loss:
                break
            step *= 0.5
        else:
            log.info("no decrease found at epoch %d; stopping", epoch)
            break
        cmap, loss, grad = trial, t_loss, t_grad
        result.losses.append(t_ratio)
        result.squared.append(loss)
        result.step_sizes.append(step)
    result.cmap = cmap
    return result


def closed_form_optimum(kind: LossKind, problem) -> FourierDiagMap:
    """Per-mode minimizer for constant-coefficient problems (``V`` a constant multiple of I).

    Every operator is then diagonal in mode space and each loss vanishes at
    ``m = 1 / b`` with ``b`` the symbol of ``A`` (``dir``), ``A G`` (``bsl2``)
    or ``I - G V`` (``bsreta``).
    """
    kind = LossKind(kind)
    kind_t = problem.kind
    # symbols probed from a single delta: the operators are translation invariant
    delta = np.zeros(problem.shape, dtype=complex)
    delta[0, 0] = 1.0
    if kind_t is not TransformKind.FFT:
        raise ValueError("closed-form optimum implemented for periodic problems")
    lam = problem.symbol.values
    a_sym = np.fft.fft2(problem.apply_A(delta))
    if kind is LossKind.DIR:
        b = a_sym
    elif kind is LossKind.BSL2:
        b = a_sym / lam
    else:
        b = np.fft.fft2(problem.apply_T(delta))
    return FourierDiagMap(1.0 / b, kind_t)
