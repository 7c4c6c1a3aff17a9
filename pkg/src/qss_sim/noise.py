"""Detection noise, error rates, mutual information and adversary simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .qudit import check_dim

if TYPE_CHECKING:
    from .protocol import ProtocolConfig, SessionResult

# Coherent-attack QBER bounds for d = 2 and d = 3 (Cerf et al., PRL 88, 127902).
SECURITY_THRESHOLDS = {2: 0.110, 3: 0.156}

ADVERSARY_KINDS = ("none", "intercept_resend_eve", "dishonest_participant")


@dataclass(frozen=True)
class ChannelModel:
    """Symmetric d-ary detection channel with success probability ``fidelity``."""

    fidelity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError(f"fidelity must lie in [0, 1], got {self.fidelity}")

    @property
    def noiseless(self) -> bool:
        return self.fidelity >= 1.0

    def validate(self, d: int) -> "ChannelModel":
        if self.fidelity < 1.0 / d - 1e-12:
            raise ValueError(f"fidelity {self.fidelity} below 1/d for d={d}")
        return self


@dataclass(frozen=True)
class AdversaryModel:
    """Who tampers with the photon in transit.

    ``intercept_resend_eve`` picks a uniformly random link each attacked round.
    ``dishonest_participant`` always attacks the link feeding party ``target``.
    """

    kind: str = "none"
    target: int | None = None
    attack_probability: float = 1.0

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if not 0.0 <= self.attack_probability <= 1.0:
            raise ValueError("attack_probability must lie in [0, 1]")
        if self.kind == "dishonest_participant" and self.target is None:
            raise ValueError("dishonest_participant needs a target party index")

    def validate(self, n_parties: int) -> "AdversaryModel":
        if self.kind == "dishonest_participant" and not 2 <= self.target <= n_parties:
            raise ValueError(f"dishonest target must be in 2..{n_parties}, got {self.target}")
        return self

    @classmethod
    def parse(cls, text: str) -> "AdversaryModel":
        """Parse the command-line form ``none``, ``eve`` or ``dishonest:<n>``."""
        if text in ("none", ""):
            return cls()
        if text == "eve":
            return cls("intercept_resend_eve")
        if text.startswith("dishonest:"):
            return cls("dishonest_participant", target=int(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse adversary {text!r}")

    def label(self) -> str:
        if self.kind == "intercept_resend_eve":
            return "eve"
        if self.kind == "dishonest_participant":
            return f"dishonest:{self.target}"
        return "none"


def apply_detection_noise(k_true: int, fidelity: float, d: int, rng: np.random.Generator) -> int:
    """Return ``k_true`` with probability ``fidelity``, else a uniformly chosen wrong outcome."""
    if not 1.0 / d - 1e-12 <= fidelity <= 1.0:
        raise ValueError(f"fidelity {fidelity} outside [1/d, 1] for d={d}")
    if fidelity >= 1.0:
        return k_true
    if rng.random() < fidelity:
        return k_true
    shift = int(rng.integers(1, d))
    return (k_true + shift) % d


def apply_detection_noise_many(
    k_true: np.ndarray, fidelity: float, d: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorised :func:`apply_detection_noise` over an array of outcomes."""
    if not 1.0 / d - 1e-12 <= fidelity <= 1.0:
        raise ValueError(f"fidelity {fidelity} outside [1/d, 1] for d={d}")
    k_true = np.asarray(k_true)
    if fidelity >= 1.0:
        return k_true
    wrong = rng.random(k_true.shape) >= fidelity
    shift = rng.integers(1, d, size=k_true.shape)
    return np.where(wrong, (k_true + shift) % d, k_true)


def qber(fidelity: float) -> float:
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    return 1.0 - fidelity


def empirical_qber(session: "SessionResult") -> float:
    """Fraction of key dits on which the participants disagree with the distributor."""
    a, b = session.distributor_key, session.participants_key
    if not a:
        raise ValueError("session has an empty key")
    return sum(x != y for x, y in zip(a, b)) / len(a)


def _xlog2x(p: float) -> float:
    return 0.0 if p == 0.0 else p * math.log2(p)


def mutual_information(fidelity: float, d: int) -> float:
    """Bits per photon shared by distributor and participants at detection fidelity F.

    ``log2(d) + F log2 F + (1 - F) log2((1 - F)/(d - 1))`` with ``0 log 0 = 0``.
    """
    d = check_dim(d)
    if not 1.0 / d - 1e-12 <= fidelity <= 1.0:
        raise ValueError(f"fidelity {fidelity} outside [1/d, 1] for d={d}")
    err = 1.0 - fidelity
    return math.log2(d) + _xlog2x(fidelity) + _xlog2x(err) - err * math.log2(d - 1)


def security_threshold(d: int) -> float:
    try:
        return SECURITY_THRESHOLDS[d]
    except KeyError:
        raise ValueError(f"no security threshold tabulated for d={d}") from None


def is_secure(qber_value: float, d: int) -> bool:
    return qber_value < security_threshold(d)


def analysis_report(
    d: int,
    fidelity: float,
    session: "SessionResult | None" = None,
    adversary: AdversaryModel | None = None,
) -> dict:
    """JSON-ready security summary; ``secure`` judges the empirical QBER when a session is given."""
    q = qber(fidelity)
    q_emp = empirical_qber(session) if session is not None and session.distributor_key else None
    try:
        threshold = security_threshold(d)
    except ValueError:
        threshold = None
    judged = q_emp if q_emp is not None else q
    secure = None if threshold is None else judged < threshold
    if session is not None and session.mismatch_count and session.checked_subset:
        check_rate = session.mismatch_count / len(session.checked_subset)
        if threshold is not None and check_rate >= threshold:
            secure = False
    return {
        "d": d,
        "F": fidelity,
        "qber": q,
        "qber_empirical": q_emp,
        "mutual_information_bits": mutual_information(fidelity, d) if fidelity >= 1.0 / d else 0.0,
        "threshold": threshold,
        "secure": secure,
        "adversary": (adversary or AdversaryModel()).label(),
    }


def intercept_resend_error_rate(d: int) -> float:
    """Expected error rate on an attacked round: wrong basis with prob (d-1)/d, then wrong outcome with prob (d-1)/d."""
    return (d - 1) / d * (1 - 1 / d)


def simulate_adversary(
    cfg: "ProtocolConfig",
    adversary: AdversaryModel,
    rng: np.random.Generator | None = None,
) -> "SessionResult":
    """Run a full session with ``adversary`` active on the quantum channel.

    Rounds draw their randomness from per-round substreams of ``cfg.seed``; a
    supplied ``rng`` only reseeds the session (one draw) so that repeated calls
    with the same generator stay reproducible.
    """
    from .protocol import run_session

    if rng is not None:
        cfg = cfg.with_seed(int(rng.integers(0, 2**63)))
    return run_session(cfg, adversary=adversary)
