"""Field containers, random media and sources, and field file I/O."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import BC, GridSpec, derivative_wavenumbers

MAGIC = b"BPFD"
DTYPE_REAL64 = 0
DTYPE_COMPLEX128 = 1


@dataclass(frozen=True)
class Field:
    """Real or complex values on a grid (``data[ix, iy]``)."""

    data: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype.kind not in "fc":
            data = data.astype(float)
        if data.shape != self.grid.shape:
            raise ValueError(f"data shape {data.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Deterministic per-sample child seeds from one root seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


# -- random fields ---------------------------------------------------------


def sample_grf(grid: GridSpec, correlation_length: float, mean: float = 0.0, std: float = 1.0,
               rng: np.random.Generator | None = None) -> Field:
    """Gaussian random field with squared-exponential covariance.

    White noise is shaped by ``exp(-l^2 |xi|^2 / 4)`` (the square root of the
    SE spectrum) on the periodic extension of the grid.  The zero mode is
    removed so the sample mean is exactly ``mean``; the filter is scaled so
    the pointwise variance is ``std**2`` in expectation.
    """
    if correlation_length <= 0:
        raise ValueError("correlation_length must be positive")
    if std < 0:
        raise ValueError("std must be non-negative")
    if rng is None:
        rng = make_rng(0)
    noise = rng.standard_normal(grid.shape)
    if std == 0:
        return Field(np.full(grid.shape, float(mean)), grid)
    kx = 2 * np.pi * np.fft.fftfreq(grid.nx, d=grid.hx)
    ky = 2 * np.pi * np.fft.fftfreq(grid.ny, d=grid.hy)
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    amp = np.exp(-(correlation_length**2) * k2 / 4.0)
    amp[0, 0] = 0.0
    # pointwise variance of ifft(amp * fft(w)) is mean(amp**2)
    power = np.mean(amp**2)
    if power == 0:
        return Field(np.full(grid.shape, float(mean)), grid)
    amp *= std / np.sqrt(power)
    values = np.fft.ifft2(amp * np.fft.fft2(noise)).real
    return Field(mean + values, grid)


def stream_velocity(psi: Field) -> tuple[Field, Field]:
    """Divergence-free velocity ``(d psi/dy, -d psi/dx)`` by spectral derivatives."""
    grid = psi.grid
    if grid.bc is not BC.PERIODIC:
        raise ValueError("stream_velocity requires a periodic grid")
    kx, ky = derivative_wavenumbers(grid)
    p_hat = np.fft.fft2(psi.data)
    vx = np.fft.ifft2(1j * ky[None, :] * p_hat)
    vy = np.fft.ifft2(-1j * kx[:, None] * p_hat)
    return Field(vx.real, grid), Field(vy.real, grid)


def spectral_divergence(vx: np.ndarray, vy: np.ndarray, grid: GridSpec) -> np.ndarray:
    kx, ky = derivative_wavenumbers(grid)
    div = 1j * kx[:, None] * np.fft.fft2(vx) + 1j * ky[None, :] * np.fft.fft2(vy)
    return np.fft.ifft2(div).real


def gaussian_bump(grid: GridSpec, center: tuple[float, float], width: float,
                  amplitude: float = 1.0) -> Field:
    """``amplitude * exp(-|x - c|^2 / (2 width^2))``, wrapped on periodic grids."""
    if width <= 0:
        raise ValueError("width must be positive")
    x, y = grid.coords()
    dx, dy = x - center[0], y - center[1]
    if grid.bc is BC.PERIODIC:
        dx = dx - grid.lx * np.round(dx / grid.lx)
        dy = dy - grid.ly * np.round(dy / grid.ly)
    return Field(amplitude * np.exp(-(dx**2 + dy**2) / (2.0 * width**2)), grid)


def random_bump(grid: GridSpec, rng: np.random.Generator, width_range=(0.03, 0.1),
                amplitude: float = 1.0) -> Field:
    """Gaussian bump with uniformly random centre and width (width as a fraction of lx)."""
    cx = rng.uniform(0, grid.lx)
    cy = rng.uniform(0, grid.ly)
    w = rng.uniform(*width_range) * min(grid.lx, grid.ly)
    return gaussian_bump(grid, (cx, cy), w, amplitude)


def sine_noise(grid: GridSpec, modes: int = 4, coeff_std: float = 0.1, alpha: float = 4.0,
               rng: np.random.Generator | None = None, coeffs: np.ndarray | None = None) -> Field:
    """``alpha * sum_{i,j<=modes} c_ij sin(i pi x) sin(j pi y)``, ``c_ij ~ N(0, coeff_std^2)``.

    ``coeffs`` overrides the random draw (shape ``(modes, modes)``).
    """
    if grid.bc is not BC.DIRICHLET:
        raise ValueError("sine_noise requires a Dirichlet grid")
    if coeffs is None:
        if rng is None:
            rng = make_rng(0)
        coeffs = coeff_std * rng.standard_normal((modes, modes))
    coeffs = np.asarray(coeffs, dtype=float)
    x, y = grid.axes()
    idx = np.arange(1, coeffs.shape[0] + 1)
    jdx = np.arange(1, coeffs.shape[1] + 1)
    sx = np.sin(np.pi * np.outer(x / grid.lx, idx))  # (nx, modes)
    sy = np.sin(np.pi * np.outer(y / grid.ly, jdx))
    return Field(alpha * sx @ coeffs @ sy.T, grid)


def sponge_profile(grid: GridSpec, layer_points: int, strength: float) -> Field:
    """Quadratic damping ramp, ``strength`` on the outermost points, 0 inside.

    Per axis ``d = strength * ((layer - e) / layer)^2`` where ``e`` is the
    index distance to the nearest edge; the two axes are combined with max.
    """
    if layer_points < 0 or 2 * layer_points >= min(grid.nx, grid.ny):
        raise ValueError(f"sponge layer of {layer_points} points does not fit {grid.shape}")
    if strength < 0:
        raise ValueError("strength must be non-negative")
    if layer_points == 0:
        return Field(np.zeros(grid.shape), grid)

    def ramp(n):
        e = np.minimum(np.arange(n), np.arange(n)[::-1])
        return np.clip((layer_points - e) / layer_points, 0.0, None) ** 2

    prof = np.maximum(ramp(grid.nx)[:, None], ramp(grid.ny)[None, :])
    return Field(strength * prof, grid)


def layered_velocity(grid: GridSpec, rng: np.random.Generator, n_layers: int = 4,
                     c_min: float = 1500.0, contrast: float = 2.0, curvature: float = 0.1,
                     sharpness: float = 1.0) -> Field:
    """Synthetic layered velocity model with curved, sigmoid-blended interfaces.

    Layer velocities are drawn in ``[c_min, contrast * c_min]`` with the two
    extremes always present.  ``curvature`` is the interface undulation
    amplitude as a fraction of ``ly``; ``sharpness`` is the blend width in grid
    cells.
    """
    if contrast < 1:
        raise ValueError("contrast must be >= 1")
    x, y = grid.coords()
    c_max = contrast * c_min
    speeds = rng.uniform(c_min, c_max, size=n_layers)
    speeds[rng.permutation(n_layers)[:2]] = [c_min, c_max]
    depths = np.sort(rng.uniform(0.15, 0.85, size=n_layers - 1)) * grid.ly
    c = np.full(grid.shape, speeds[0])
    for i, d in enumerate(depths):
        phase = rng.uniform(0, 2 * np.pi)
        waves = rng.integers(1, 3)
        iface = d + curvature * grid.ly * np.sin(2 * np.pi * waves * x / grid.lx + phase)
        w = sharpness * grid.hy
        blend = 0.5 * (1 + np.tanh((y - iface) / w))
        c = c + (speeds[i + 1] - speeds[i]) * blend
    return Field(np.clip(c, c_min, c_max), grid)


def wavenumber_from_velocity(c: Field, ppw: float) -> tuple[Field, float]:
    """``k(x) = omega / c(x)`` with omega set so the slowest wave has ``ppw`` points per wavelength."""
    h = max(c.grid.hx, c.grid.hy)
    omega = 2 * np.pi * float(c.data.min()) / (ppw * h)
    return Field(omega / c.data, c.grid), omega


# -- serialization ---------------------------------------------------------


def write_field(path, data, grid: GridSpec | None = None) -> None:
    """Write the flat binary format: 16-byte header then row-major LE values."""
    arr = np.asarray(getattr(data, "data", data))
    if arr.ndim != 2:
        raise ValueError("fields are 2-D")
    if np.iscomplexobj(arr):
        code, body = DTYPE_COMPLEX128, arr.astype("<c16")
    else:
        code, body = DTYPE_REAL64, arr.astype("<f8")
    nx, ny = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<III", nx, ny, code))
        fh.write(np.ascontiguousarray(body).tobytes(order="C"))


def read_field(path, grid: GridSpec | None = None):
    """Read a field file; returns a ``Field`` when ``grid`` is given, else the array."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a field file")
    nx, ny, code = struct.unpack("<III", raw[4:16])
    if code == DTYPE_REAL64:
        dt = np.dtype("<f8")
    elif code == DTYPE_COMPLEX128:
        dt = np.dtype("<c16")
    else:
        raise ValueError(f"{path}: unknown dtype code {code}")
    expected = 16 + nx * ny * dt.itemsize
    if len(raw) != expected:
        raise ValueError(f"{path}: size {len(raw)} != expected {expected}")
    arr = np.frombuffer(raw, dtype=dt, offset=16).reshape(nx, ny).astype(dt.newbyteorder("="))
    if grid is not None:
        return Field(arr, grid)
    return arr


def write_field_csv(path, data) -> None:
    arr = np.asarray(getattr(data, "data", data))
    ix, iy = np.meshgrid(np.arange(arr.shape[0]), np.arange(arr.shape[1]), indexing="ij")
    with open(path, "w") as fh:
        if np.iscomplexobj(arr):
            fh.write("ix,iy,re,im\n")
            for i, j, v in zip(ix.ravel(), iy.ravel(), arr.ravel()):
                fh.write(f"{i},{j},{v.real:.17g},{v.imag:.17g}\n")
        else:
            fh.write("ix,iy,value\n")
            for i, j, v in zip(ix.ravel(), iy.ravel(), arr.ravel()):
                fh.write(f"{i},{j},{v:.17g}\n")
