"""Prime-dimension qudit states, mutually unbiased bases and diagonal phase operators.

States are amplitude vectors in the logical basis ``|0>, ..., |d-1>``.  Every
operator the protocol needs (the shift ``X``, the basis-change ``Y`` and all of
the optical element unitaries) is diagonal in that basis, so operators are
stored as their ``d`` unit-modulus phases.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NORM_TOL = 1e-12
PHASE_TOL = 1e-10


class DimensionError(ValueError):
    """Raised for a non-prime dimension or mismatched operand dimensions."""


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def check_dim(d: int) -> int:
    if isinstance(d, bool) or int(d) != d or not is_prime(int(d)):
        raise DimensionError(f"dimension must be prime, got {d!r}")
    return int(d)


@lru_cache(maxsize=None)
def omega(d: int) -> complex:
    """Primitive d-th root of unity exp(2*pi*i/d)."""
    return complex(np.exp(2j * np.pi / d))


def _root_powers(d: int, exponents: np.ndarray, denom: int = 1) -> np.ndarray:
    # omega**(e/denom) evaluated via the exponent modulo d*denom to avoid drift
    period = d * denom
    e = np.mod(exponents, period)
    return np.exp(2j * np.pi * e / period)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QuditState:
    """Normalised pure state of a prime-dimension qudit."""

    dim: int
    amps: np.ndarray

    def __post_init__(self):
        d = check_dim(self.dim)
        amps = _frozen(self.amps)
        if amps.shape != (d,):
            raise DimensionError(f"expected {d} amplitudes, got shape {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalised (norm^2 = {norm!r})")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amplitudes(cls, amps) -> "QuditState":
        """Build a state from unnormalised amplitudes."""
        a = np.asarray(amps, dtype=np.complex128)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("zero vector cannot be normalised")
        return cls(len(a), a / n)

    @classmethod
    def logical(cls, d: int, level: int) -> "QuditState":
        a = np.zeros(check_dim(d), dtype=np.complex128)
        a[level] = 1.0
        return cls(d, a)

    def equals_up_to_phase(self, other: "QuditState", tol: float = PHASE_TOL) -> bool:
        return self.dim == other.dim and equal_up_to_phase(self.amps, other.amps, tol)


@dataclass(frozen=True)
class MubLabel:
    """Index pair (basis j, mode k) of a mutually unbiased basis vector."""

    j: int
    k: int

    def check(self, d: int) -> "MubLabel":
        if not (0 <= self.j < d and 0 <= self.k < d):
            raise ValueError(f"MUB label {self} out of range for d={d}")
        return self


@dataclass(frozen=True, eq=False)
class DiagonalOp:
    """Unitary operator that is diagonal in the logical basis."""

    dim: int
    phases: np.ndarray

    def __post_init__(self):
        d = check_dim(self.dim)
        ph = _frozen(self.phases)
        if ph.shape != (d,):
            raise DimensionError(f"expected {d} phases, got shape {ph.shape}")
        if np.max(np.abs(np.abs(ph) - 1.0)) > NORM_TOL:
            raise ValueError("diagonal operator phases must have unit modulus")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def identity(cls, d: int) -> "DiagonalOp":
        return cls(d, np.ones(check_dim(d)))

    def __matmul__(self, other: "DiagonalOp") -> "DiagonalOp":
        if not isinstance(other, DiagonalOp):
            return NotImplemented
        _same_dim(self.dim, other.dim)
        return DiagonalOp(self.dim, self.phases * other.phases)

    def __pow__(self, n: int) -> "DiagonalOp":
        # repeated products keep |phase| = 1 to within rounding; renormalise anyway
        p = self.phases ** int(n)
        return DiagonalOp(self.dim, p / np.abs(p))

    def matrix(self) -> np.ndarray:
        return np.diag(self.phases)

    def equals_up_to_phase(self, other: "DiagonalOp", tol: float = PHASE_TOL) -> bool:
        return self.dim == other.dim and equal_up_to_phase(self.phases, other.phases, tol)


def _same_dim(a: int, b: int) -> None:
    if a != b:
        raise DimensionError(f"dimension mismatch: {a} vs {b}")


def equal_up_to_phase(a, b, tol: float = PHASE_TOL) -> bool:
    """True when ``b == exp(i*phi) * a`` elementwise within ``tol`` for some phi.

    Works for state vectors, diagonal phase lists and full matrices alike.
    """
    a = np.asarray(a, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128).ravel()
    if a.shape != b.shape:
        return False
    inner = np.vdot(a, b)
    if abs(inner) < tol:
        return bool(np.max(np.abs(a - b), initial=0.0) <= tol)
    phase = inner / abs(inner)
    return bool(np.max(np.abs(b - phase * a)) <= tol)


@lru_cache(maxsize=4096)
def mub_state(d: int, j: int, k: int) -> QuditState:
    """Mode ``k`` of mutually unbiased basis ``j``.

    For ``d = 2`` the amplitudes are ``i**(l*(j + 2k)) / sqrt(2)``; for odd prime
    ``d`` they are ``omega**(l*(k + j*l)) / sqrt(d)``.  Basis ``j = 0`` is the
    Fourier basis, so ``mub_state(d, 0, 0)`` is the uniform superposition.
    """
    d = check_dim(d)
    MubLabel(j, k).check(d)
    ell = np.arange(d)
    if d == 2:
        amps = _root_powers(2, ell * (j + 2 * k), denom=2)
    else:
        amps = _root_powers(d, ell * (k + j * ell))
    return QuditState(d, amps / np.sqrt(d))


@lru_cache(maxsize=None)
def mub_matrix(d: int, j: int) -> np.ndarray:
    """Rows are the basis vectors ``e_k^(j)`` for ``k = 0..d-1``."""
    m = np.array([mub_state(d, j, k).amps for k in range(d)])
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def op_x(d: int) -> DiagonalOp:
    d = check_dim(d)
    return DiagonalOp(d, _root_powers(d, np.arange(d)))


@lru_cache(maxsize=None)
def op_y(d: int) -> DiagonalOp:
    """Basis-changing operator: ``omega**(l/2)`` for d = 2, ``omega**(l**2)`` otherwise."""
    d = check_dim(d)
    ell = np.arange(d)
    if d == 2:
        return DiagonalOp(2, _root_powers(2, ell, denom=2))
    return DiagonalOp(d, _root_powers(d, ell * ell))


@lru_cache(maxsize=4096)
def op_xy(d: int, x: int, y: int) -> DiagonalOp:
    """The party operation ``X**x Y**y``."""
    return op_x(d) ** x @ op_y(d) ** y


def apply(op: DiagonalOp, s: QuditState) -> QuditState:
    _same_dim(op.dim, s.dim)
    return QuditState(s.dim, op.phases * s.amps)


def overlap_prob(a: QuditState, b: QuditState) -> float:
    """Transition probability ``|<a|b>|**2``."""
    _same_dim(a.dim, b.dim)
    p = abs(np.vdot(a.amps, b.amps)) ** 2
    return float(min(max(p, 0.0), 1.0))


def mub_probabilities(s: QuditState, j: int) -> np.ndarray:
    """Born-rule outcome distribution for a projective measurement in basis ``j``."""
    if not 0 <= j < s.dim:
        raise ValueError(f"basis index {j} out of range for d={s.dim}")
    p = np.abs(mub_matrix(s.dim, j).conj() @ s.amps) ** 2
    return p / p.sum()


def measure_in_mub(s: QuditState, j: int, rng: np.random.Generator) -> int:
    """Sample a mode index ``k`` with probability ``|<e_k^(j)|s>|**2``."""
    cdf = np.cumsum(mub_probabilities(s, j))
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), s.dim - 1)
