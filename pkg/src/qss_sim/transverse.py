"""Sampled transverse fields, Laguerre-Gauss (p = 0) modes and modal decomposition.

This is a physical cross-check of the projective measurements only; the
protocol itself works on the logical amplitudes in :mod:`qss_sim.qudit`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

DEFAULT_N = 512
DEFAULT_WAIST = 1.0
DEFAULT_EXTENT = 4.0  # half-width in waists


@dataclass(frozen=True)
class GridSpec:
    n: int = DEFAULT_N
    extent: float = DEFAULT_EXTENT * DEFAULT_WAIST

    @property
    def step(self) -> float:
        return 2.0 * self.extent / self.n

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        # cell-centred samples, symmetric about the optical axis
        x = (np.arange(self.n) + 0.5) * self.step - self.extent
        return np.meshgrid(x, x, indexing="xy")


@dataclass(frozen=True, eq=False)
class TransverseField:
    grid: np.ndarray
    extent: float

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    @property
    def cell_area(self) -> float:
        return (2.0 * self.extent / self.n) ** 2

    def power(self) -> float:
        return float(np.sum(np.abs(self.grid) ** 2) * self.cell_area)

    def normalized(self) -> "TransverseField":
        return TransverseField(self.grid / np.sqrt(self.power()), self.extent)

    def __add__(self, other: "TransverseField") -> "TransverseField":
        _check_same_grid(self, other)
        return TransverseField(self.grid + other.grid, self.extent)

    def __mul__(self, c: complex) -> "TransverseField":
        return TransverseField(self.grid * c, self.extent)

    __rmul__ = __mul__

    def to_csv(self) -> str:
        """Dump as rows of ``re,im`` pairs, one grid row per line."""
        buf = io.StringIO()
        for row in self.grid:
            buf.write(",".join(f"{v.real:.9e},{v.imag:.9e}" for v in row) + "\n")
        return buf.getvalue()


def _check_same_grid(a: TransverseField, b: TransverseField) -> None:
    if a.grid.shape != b.grid.shape or not np.isclose(a.extent, b.extent):
        raise ValueError("fields are sampled on different grids")


def oam_field(l: int, grid: GridSpec = GridSpec(), waist: float = DEFAULT_WAIST) -> TransverseField:
    """Normalised LG_{0,l} sample: ``r**|l| exp(-r**2/w**2) exp(i l phi)``."""
    X, Y = grid.coords()
    r2 = X**2 + Y**2
    amp = (np.sqrt(r2) / waist) ** abs(l) * np.exp(-r2 / waist**2)
    field = amp * np.exp(1j * l * np.arctan2(Y, X))
    return TransverseField(field, grid.extent).normalized()


def superpose(fields, coeffs) -> TransverseField:
    out = None
    for f, c in zip(fields, coeffs):
        out = c * f if out is None else out + c * f
    return out.normalized()


def modal_overlap(psi: TransverseField, phi: TransverseField) -> complex:
    """Overlap ``c = <phi|psi>``, a discrete double integral of ``conj(phi) * psi``."""
    _check_same_grid(psi, phi)
    return complex(np.sum(np.conj(phi.grid) * psi.grid) * psi.cell_area)


def onaxis_detection_prob(psi: TransverseField, phi: TransverseField) -> float:
    """Intensity at the centre of the Fourier plane behind a ``phi`` match filter.

    The filtered field ``conj(phi) * psi`` is Fourier transformed and the
    zero-frequency sample is read out, scaled by the cell area so that it is a
    probability.
    """
    _check_same_grid(psi, phi)
    spectrum = np.fft.fft2(np.conj(phi.grid) * psi.grid)
    a00 = spectrum[0, 0] * psi.cell_area
    return float(abs(a00) ** 2)
