"""Linear-optics realisation of the party operators and the detectors.

d = 2 uses the spin-orbit pair ``{|R>|l>, |L>|-l>}``.  A half-waveplate at
angle ``theta`` imprints a relative phase ``exp(4i*theta)``.  In d = 3 the mode
set ``{|R>|0>, |R>|l>, |L>|-l>}`` also passes through a dove prism at angle
``gamma``, which adds a phase proportional to the OAM of each mode.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .noise import ChannelModel, apply_detection_noise_many
from .qudit import (
    DiagonalOp,
    PHASE_TOL,
    check_dim,
    equal_up_to_phase,
    mub_probabilities,
    mub_state,
    op_xy,
)

HWP_ANGLES_D3 = (0.0, math.pi / 6, 2 * math.pi / 6)
DP_ANGLES_D3 = (0.0, math.pi / 3, 2 * math.pi / 3)
# default OAM carried by logical levels 1 and 2 of the d = 3 mode set
OAM_D3 = (1, -1)


@dataclass(frozen=True)
class OpticalSettings:
    """Rotation angles (radians) of the half-waveplate and dove prism."""

    theta: float
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("theta", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v < math.pi:
                raise ValueError(f"{name} must lie in [0, pi), got {v}")


@dataclass(frozen=True)
class DetectorOutcome:
    port_probs: tuple[float, ...]

    def __post_init__(self):
        p = self.port_probs
        if any(x < -1e-15 or x > 1 + 1e-15 for x in p) or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"invalid port distribution {p}")


def _wrap_angle(a: float) -> float:
    # waveplate and dove-prism settings are defined modulo pi
    a = math.fmod(a, math.pi)
    if a < 0:
        a += math.pi
    return 0.0 if math.isclose(a, math.pi) else a


def hwp_unitary_d2(theta: float) -> DiagonalOp:
    return DiagonalOp(2, [1.0, np.exp(4j * theta)])


def spinorbit_unitary_d3(
    theta: float, gamma: float, l2: int = OAM_D3[0], l3: int = OAM_D3[1]
) -> DiagonalOp:
    """HWP + dove prism acting on ``{|R>|0>, |R>|l2>, |L>|l3>}``.

    A dove prism turned by ``gamma`` gives a mode of OAM ``l`` the phase
    ``exp(-2i*gamma*l)``.
    """
    delta = 2.0 * gamma
    return DiagonalOp(3, [1.0, np.exp(-1j * delta * l2), np.exp(-1j * (delta * l3 - 4 * theta))])


@lru_cache(maxsize=None)
def _d3_settings_table() -> dict[tuple[int, int], OpticalSettings]:
    """Search the HWP/DP grid for the setting that realises each ``X**x Y**y``."""
    table: dict[tuple[int, int], OpticalSettings] = {}
    for theta, gamma in itertools.product(HWP_ANGLES_D3, DP_ANGLES_D3):
        u = spinorbit_unitary_d3(theta, gamma)
        for x, y in itertools.product(range(3), repeat=2):
            if equal_up_to_phase(op_xy(3, x, y).phases, u.phases, PHASE_TOL):
                if (x, y) in table:
                    raise RuntimeError(f"operator X^{x}Y^{y} realised by two settings")
                table[(x, y)] = OpticalSettings(theta, gamma)
    missing = set(itertools.product(range(3), repeat=2)) - set(table)
    if missing:
        raise RuntimeError(f"no optical setting realises {sorted(missing)}")
    return table


def settings_for_op(d: int, x: int, y: int) -> OpticalSettings:
    """Optical settings realising ``X**x Y**y`` for a single, odd-positioned element."""
    if not (0 <= x < d and 0 <= y < d):
        raise ValueError(f"x, y must lie in 0..{d - 1}")
    if d == 2:
        return OpticalSettings((2 * x + y) * math.pi / 8)
    if d == 3:
        return _d3_settings_table()[(x, y)]
    raise NotImplementedError(f"no optical realisation for d={d}; use qudit.op_xy")


def settings_unitary(d: int, s: OpticalSettings) -> DiagonalOp:
    if d == 2:
        return hwp_unitary_d2(s.theta)
    if d == 3:
        return spinorbit_unitary_d3(s.theta, s.gamma)
    raise NotImplementedError(f"no optical realisation for d={d}")


# --- d = 2 HWP chains -------------------------------------------------------


def hwp_jones_circular(theta: float) -> np.ndarray:
    """Jones matrix of a half-waveplate at ``theta`` in the circular (R, L) basis.

    The plate swaps handedness, so it is off-diagonal; the ``-i`` prefactor is
    the usual retardance phase.
    """
    return -1j * np.array([[0.0, np.exp(2j * theta)], [np.exp(-2j * theta), 0.0]])


def chain_phase(thetas: Sequence[float]) -> float:
    """Relative phase ``Phi = 4 * sum((-1)**(n+1) * theta_n)`` modulo 2*pi."""
    s = sum(t if n % 2 == 0 else -t for n, t in enumerate(thetas))
    return float(np.mod(4 * s, 2 * np.pi))


def chain_global_phase(thetas: Sequence[float]) -> complex:
    s = sum(t if n % 2 == 0 else -t for n, t in enumerate(thetas))
    return complex((-1j) ** len(thetas) * np.exp(-2j * s))


def chain_state_closed_form(thetas: Sequence[float]) -> np.ndarray:
    """Final (R, L) amplitudes of ``e_0^(0)`` after an even number of HWPs."""
    if len(thetas) % 2:
        raise ValueError("closed form holds for an even number of waveplates")
    phi = chain_phase(thetas)
    return chain_global_phase(thetas) / np.sqrt(2) * np.array([1.0, np.exp(1j * phi)])


def chain_state_jones(thetas: Sequence[float], initial=None) -> np.ndarray:
    """Direct product of the HWP Jones matrices applied to the input (default ``e_0^(0)``)."""
    v = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2) if initial is None else np.asarray(initial, complex)
    for t in thetas:
        v = hwp_jones_circular(t) @ v
    return v


def settings_sequence_d2(ops: Sequence[tuple[int, int]]) -> list[OpticalSettings]:
    """Waveplate angles for consecutive parties applying ``X**x Y**y`` in order.

    Every plate reverses handedness, so even-positioned plates contribute
    ``-4*theta``; those parties rotate their plate by the negated angle.
    """
    out = []
    for n, (x, y) in enumerate(ops):
        theta = settings_for_op(2, x, y).theta
        out.append(OpticalSettings(_wrap_angle(theta if n % 2 == 0 else -theta)))
    return out


# --- detectors ------------------------------------------------------------


def interferometer_amplitudes(state_rl: Sequence[complex]) -> np.ndarray:
    """Output amplitudes of ports (c, d) for a balanced beam splitter with a pi/2 path phase."""
    bs = np.array([[1.0, -1.0], [1j, 1j]]) / np.sqrt(2)
    return bs @ np.asarray(state_rl, dtype=complex)


def interferometer_probs_d2(phi: float) -> DetectorOutcome:
    """Port probabilities for relative phase ``phi``: ``sin^2(phi/2)`` and ``cos^2(phi/2)``."""
    pc = math.sin(phi / 2) ** 2
    return DetectorOutcome((pc, 1.0 - pc))


def theta_scan(steps: int, theta_max: float = math.pi / 2, noise_floor: float = 0.0) -> np.ndarray:
    """Simulated detector response as one plate rotates in front of a fixed reference plate.

    Returns an array of rows ``(theta, I_c, I_d)``.  Intensities are the Jones
    and beam-splitter port probabilities plus an additive ``noise_floor``.
    """
    if steps < 2:
        raise ValueError("a scan needs at least two steps")
    thetas = np.linspace(0.0, theta_max, steps)
    rows = []
    for t in thetas:
        amps = interferometer_amplitudes(chain_state_jones([t, 0.0]))
        p = np.abs(amps) ** 2
        rows.append((t, p[0] + noise_floor, p[1] + noise_floor))
    return np.array(rows)


def visibility(scan) -> np.ndarray:
    """Fringe visibility ``|I_max - I_min| / (I_max + I_min)`` for every port column.

    ``scan`` has rows ``(theta, I_port0, I_port1, ...)``.
    """
    arr = np.asarray(scan, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError("scan rows must be (theta, intensity, ...)")
    intens = arr[:, 1:]
    hi, lo = intens.max(axis=0), intens.min(axis=0)
    if np.any(hi + lo <= 0):
        raise ValueError("visibility undefined for an all-zero port")
    return np.abs(hi - lo) / (hi + lo)


def noise_floor_for_visibility(v: float) -> float:
    """Additive floor that turns an ideal 0..1 fringe into visibility ``v``."""
    if not 0.0 < v <= 1.0:
        raise ValueError("visibility must lie in (0, 1]")
    return (1.0 / v - 1.0) / 2.0


def fidelity_from_visibility(v: float) -> float:
    if not 0.0 <= v <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    return (1.0 + v) / 2.0


# --- crosstalk ------------------------------------------------------------


def crosstalk_labels(d: int) -> list[tuple[int, int]]:
    return [(j, k) for j in range(d) for k in range(d)]


def crosstalk_matrix(
    d: int,
    channel: ChannelModel | None = None,
    trials: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Detection probabilities for every prepared/projected MUB pair.

    Rows are prepared states ``(j, k)`` and columns detection projectors
    ``(j', k')``, both in ``j``-major order.  Each ``d``-column block is one
    complete projective measurement, so a row sums to 1 inside each block.
    With ``trials=None`` the exact probabilities are returned (pushed through
    the symmetric channel when given).  Otherwise every (row, block) cell is
    estimated from ``trials`` simulated detections.
    """
    d = check_dim(d)
    channel = (channel or ChannelModel()).validate(d)
    f = channel.fidelity
    labels = crosstalk_labels(d)
    out = np.zeros((d * d, d * d))
    if trials is None:
        # symmetric channel as a d x d stochastic matrix
        noise = np.full((d, d), (1 - f) / (d - 1))
        np.fill_diagonal(noise, f)
        for r, (j, k) in enumerate(labels):
            s = mub_state(d, j, k)
            for jp in range(d):
                out[r, jp * d:(jp + 1) * d] = mub_probabilities(s, jp) @ noise
        return out

    if trials < 1:
        raise ValueError("trials must be positive")
    if rng is None:
        rng = np.random.default_rng()
    for r, (j, k) in enumerate(labels):
        s = mub_state(d, j, k)
        for jp in range(d):
            p = mub_probabilities(s, jp)
            hits = rng.choice(d, size=trials, p=p)
            hits = apply_detection_noise_many(hits, f, d, rng)
            out[r, jp * d:(jp + 1) * d] = np.bincount(hits, minlength=d) / trials
    return out


def crosstalk_reference(d: int) -> np.ndarray:
    """Ideal pattern: identity blocks for matching bases, uniform ``1/d`` blocks otherwise."""
    eye = np.eye(d)
    uni = np.full((d, d), 1.0 / d)
    return np.block([[eye if a == b else uni for b in range(d)] for a in range(d)])


def same_basis_fidelity(matrix: np.ndarray) -> float:
    """Mean of the diagonal entries where preparation and detection bases agree."""
    return float(np.mean(np.diag(matrix)))


def matrix_to_csv(matrix: np.ndarray, d: int) -> str:
    labels = [f"({j},{k})" for j, k in crosstalk_labels(d)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["prepared", *labels])
    for lab, row in zip(labels, matrix):
        writer.writerow([lab, *(f"{v:.6f}" for v in row)])
    return buf.getvalue()
