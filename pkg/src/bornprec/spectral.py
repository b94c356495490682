"""Uniform-grid fast transforms, wavenumber grids and diagonal symbols.

Conventions
-----------
* Arrays are indexed ``[..., ix, iy]`` (``indexing="ij"``); leading axes are
  batch axes.  Mode arrays use the
  same layout as the transform output, FFT modes in standard (unshifted)
  order.
* ``FFT``: unnormalized forward, ``1/N`` inverse (``numpy.fft`` default).
* ``DST1`` and ``DCT``: orthonormal (``norm="ortho"``).  DST-I is then exactly
  its own inverse; DCT uses type II forward / type III inverse.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft


class BC(str, enum.Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"  # interior points only, zero halo
    NEUMANN = "neumann"  # cell-centred, reflecting halo


class TransformKind(str, enum.Enum):
    FFT = "fft"
    DST1 = "dst1"
    DCT = "dct"


_NATIVE_KIND = {
    BC.PERIODIC: TransformKind.FFT,
    BC.DIRICHLET: TransformKind.DST1,
    BC.NEUMANN: TransformKind.DCT,
}


class SingularSymbolError(ValueError):
    """Raised when dividing by a symbol with (near) zero entries."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform 2-D grid.

    For ``DIRICHLET`` the ``nx * ny`` points are the interior nodes of
    ``[0, lx] x [0, ly]`` so ``h = lx / (nx + 1)``; for ``PERIODIC`` the grid
    covers ``[0, lx)`` with ``h = lx / nx``; ``NEUMANN`` is cell-centred with
    ``h = lx / nx``.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    bc: BC = BC.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "bc", BC(self.bc))
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("nx, ny must be integers")
        # a Dirichlet grid stores interior nodes only, so 3 unknowns span 5 grid points
        least = 3 if self.bc is BC.DIRICHLET else 4
        if self.nx < least or self.ny < least:
            raise ValueError(f"{self.bc.value} grid needs at least {least} points per axis, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain lengths must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        if self.bc is BC.DIRICHLET:
            return self.lx / (self.nx + 1)
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        if self.bc is BC.DIRICHLET:
            return self.ly / (self.ny + 1)
        return self.ly / self.ny

    @property
    def kind(self) -> TransformKind:
        """Transform that diagonalizes constant-coefficient operators here."""
        return _NATIVE_KIND[self.bc]

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """1-D node coordinates along x and y."""
        ix, iy = np.arange(self.nx), np.arange(self.ny)
        if self.bc is BC.PERIODIC:
            return ix * self.hx, iy * self.hy
        if self.bc is BC.DIRICHLET:
            return (ix + 1) * self.hx, (iy + 1) * self.hy
        return (ix + 0.5) * self.hx, (iy + 0.5) * self.hy

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.axes()
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True)
class SpectralSymbol:
    """Per-mode multiplier in the layout of ``kind``'s output."""

    values: np.ndarray
    kind: TransformKind

    def __post_init__(self):
        object.__setattr__(self, "kind", TransformKind(self.kind))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))

    def inverse(self) -> "SpectralSymbol":
        check_invertible(self.values)
        return SpectralSymbol(1.0 / self.values, self.kind)


def check_invertible(values: np.ndarray, rel: float = 1e-14) -> None:
    mag = np.abs(values)
    top = mag.max()
    if top == 0 or mag.min() < rel * top:
        raise SingularSymbolError(
            f"symbol has near-zero entry: min|lambda|={mag.min():.3e}, max|lambda|={top:.3e}"
        )


def _check_kind(shape, grid: GridSpec | None, kind: TransformKind) -> None:
    if grid is None:
        return
    if tuple(shape[-2:]) != grid.shape:
        raise ValueError(f"field shape {tuple(shape)} does not match grid {grid.shape}")
    if kind is not TransformKind.FFT and grid.bc is BC.PERIODIC:
        raise ValueError(f"{kind.value} transform is not compatible with a periodic grid")


def forward(x: np.ndarray, kind: TransformKind) -> np.ndarray:
    kind = TransformKind(kind)
    if kind is TransformKind.FFT:
        return np.fft.fft2(x)
    if kind is TransformKind.DST1:
        return sfft.dstn(x, type=1, norm="ortho", axes=(-2, -1))
    return sfft.dctn(x, type=2, norm="ortho", axes=(-2, -1))


def inverse(x: np.ndarray, kind: TransformKind) -> np.ndarray:
    kind = TransformKind(kind)
    if kind is TransformKind.FFT:
        return np.fft.ifft2(x)
    if kind is TransformKind.DST1:
        return sfft.dstn(x, type=1, norm="ortho", axes=(-2, -1))
    return sfft.idctn(x, type=2, norm="ortho", axes=(-2, -1))


def forward_transform(field, kind: TransformKind | None = None, grid: GridSpec | None = None):
    """Forward transform of a field (``Field`` or array) into mode space."""
    data, grid = _unwrap(field, grid)
    if kind is None:
        if grid is None:
            raise ValueError("transform kind required when no grid is given")
        kind = grid.kind
    kind = TransformKind(kind)
    _check_kind(np.shape(data), grid, kind)
    return forward(np.asarray(data), kind)


def inverse_transform(modes: np.ndarray, kind: TransformKind, grid: GridSpec | None = None):
    kind = TransformKind(kind)
    _check_kind(np.shape(modes), grid, kind)
    return inverse(np.asarray(modes), kind)


def _unwrap(field, grid):
    data = getattr(field, "data", field)
    return data, getattr(field, "grid", grid)


def apply_symbol(field, symbol: SpectralSymbol, divide: bool = False, grid: GridSpec | None = None):
    """Multiply (or divide) ``field`` by ``symbol`` in mode space.

    With ``divide=True`` this is the Green-operator action
    ``F^-1(F(q) / lambda)``.  Returns a plain complex array.
    """
    data, grid = _unwrap(field, grid)
    if grid is not None and grid.kind is not symbol.kind:
        raise ValueError(f"symbol kind {symbol.kind.value} does not match {grid.bc.value} grid")
    if np.shape(data)[-2:] != symbol.values.shape:
        raise ValueError(f"field shape {np.shape(data)} does not match symbol {symbol.values.shape}")
    if divide:
        check_invertible(symbol.values)
        return inverse(forward(data, symbol.kind) / symbol.values, symbol.kind)
    return inverse(forward(data, symbol.kind) * symbol.values, symbol.kind)


def wavenumbers(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Physical wavenumbers per axis in the native transform's mode order.

    Periodic: ``2 pi n / L`` with ``n`` in FFT order.  Dirichlet: ``p pi / L``
    for ``p = 1..N`` (``L`` the full box).  Neumann: ``p pi / L``, ``p = 0..N-1``.
    """
    if grid.bc is BC.PERIODIC:
        return (
            2 * np.pi * np.fft.fftfreq(grid.nx, d=1.0 / grid.nx) / grid.lx,
            2 * np.pi * np.fft.fftfreq(grid.ny, d=1.0 / grid.ny) / grid.ly,
        )
    if grid.bc is BC.DIRICHLET:
        return (
            np.pi * np.arange(1, grid.nx + 1) / grid.lx,
            np.pi * np.arange(1, grid.ny + 1) / grid.ly,
        )
    return np.pi * np.arange(grid.nx) / grid.lx, np.pi * np.arange(grid.ny) / grid.ly


def derivative_wavenumbers(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Wavenumbers for odd-order spectral derivatives (Nyquist mode zeroed)."""
    if grid.bc is not BC.PERIODIC:
        raise ValueError("spectral derivatives require a periodic grid")
    kx, ky = wavenumbers(grid)
    kx, ky = kx.copy(), ky.copy()
    if grid.nx % 2 == 0:
        kx[grid.nx // 2] = 0.0
    if grid.ny % 2 == 0:
        ky[grid.ny // 2] = 0.0
    return kx, ky


def laplacian_symbol(grid: GridSpec, discretization: str = "auto") -> SpectralSymbol:
    """Symbol of the discrete ``-Laplacian``.

    ``"spectral"`` gives ``|xi|^2``; ``"fdm"`` gives the five-point stencil
    eigenvalues ``(4/h^2) sin^2(theta/2)`` summed over both axes.  ``"auto"``
    picks spectral on periodic grids and FDM otherwise.
    """
    if discretization == "auto":
        discretization = "spectral" if grid.bc is BC.PERIODIC else "fdm"
    kx, ky = wavenumbers(grid)
    if discretization == "spectral":
        lam_x, lam_y = kx**2, ky**2
    elif discretization == "fdm":
        hx, hy = grid.hx, grid.hy
        lam_x = (4.0 / hx**2) * np.sin(kx * hx / 2) ** 2
        lam_y = (4.0 / hy**2) * np.sin(ky * hy / 2) ** 2
    else:
        raise ValueError(f"unknown discretization {discretization!r}")
    return SpectralSymbol(lam_x[:, None] + lam_y[None, :], grid.kind)


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """Boolean 2/3-rule mask over FFT modes (True = kept)."""
    nx = np.abs(np.fft.fftfreq(grid.nx, d=1.0 / grid.nx))
    ny = np.abs(np.fft.fftfreq(grid.ny, d=1.0 / grid.ny))
    return (nx[:, None] < grid.nx / 3) & (ny[None, :] < grid.ny / 3)
