"""N-party single-qudit secret sharing rounds and sessions.

A round runs as follows.  The distributor (party 1) prepares ``e_0^(0)``.  Each
party ``n = 1..N`` then applies ``X**x_n Y**y_n`` with private random choices.
The participants broadcast their ``y_n`` in a random order and the distributor
measures in the basis that makes the outcome deterministic.  Finally the
distributor resets its ``x_1`` so that it equals the sum of the participants'
``x_n``.

A session repeats rounds and sacrifices a random subset of them to compare key
dits.  The subset always includes, for every participant, a round in which that
participant broadcast last.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .noise import AdversaryModel, ChannelModel, apply_detection_noise
from .qudit import QuditState, apply, check_dim, measure_in_mub, mub_state, op_xy, op_y

TRANSCRIPT_SCHEMA = "qss-transcript-v1"

_ROUND_STREAM = 0
_SUBSET_STREAM = 1


class SubsetError(RuntimeError):
    """The security subset cannot cover some participant as last broadcaster."""

    def __init__(self, participant: int):
        super().__init__(f"no valid round in which participant {participant} broadcast last")
        self.participant = participant


@dataclass(frozen=True)
class PartyChoice:
    x: int
    y: int


@dataclass(frozen=True)
class ProtocolConfig:
    """Session parameters.

    ``rounds`` is the number of key dits to produce; check rounds for the
    security subset are run on top of it.
    """

    d: int = 2
    N: int = 3
    rounds: int = 100
    channel: ChannelModel = field(default_factory=ChannelModel)
    seed: int = 0
    security_fraction: float = 0.1
    mean_photon_number: float | None = None  # recorded only

    def __post_init__(self):
        check_dim(self.d)
        if self.N < 3:
            raise ValueError(f"secret sharing needs at least 3 parties, got N={self.N}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 < self.security_fraction < 1.0:
            raise ValueError("security_fraction must lie strictly between 0 and 1")
        self.channel.validate(self.d)

    def with_seed(self, seed: int) -> "ProtocolConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fidelity"] = out.pop("channel")["fidelity"]
        return out


@dataclass(frozen=True)
class RoundTranscript:
    d: int
    N: int
    choices: tuple[PartyChoice, ...]
    broadcast_order: tuple[int, ...]
    J: int
    C: int
    a: int
    distributor_key_dit: int
    participants_key_dit: int
    valid: bool = True
    attacked: bool = False

    @property
    def last_broadcaster(self) -> int:
        return self.broadcast_order[-1]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "N": self.N,
            "choices": [{"x": c.x, "y": c.y} for c in self.choices],
            "broadcast_order": list(self.broadcast_order),
            "J": self.J,
            "C": self.C,
            "a": self.a,
            "distributor_key_dit": self.distributor_key_dit,
            "participants_key_dit": self.participants_key_dit,
            "valid": self.valid,
            "attacked": self.attacked,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RoundTranscript":
        return cls(
            d=doc["d"],
            N=doc["N"],
            choices=tuple(PartyChoice(c["x"], c["y"]) for c in doc["choices"]),
            broadcast_order=tuple(doc["broadcast_order"]),
            J=doc["J"],
            C=doc["C"],
            a=doc["a"],
            distributor_key_dit=doc["distributor_key_dit"],
            participants_key_dit=doc["participants_key_dit"],
            valid=doc["valid"],
            attacked=doc.get("attacked", False),
        )


@dataclass
class SessionResult:
    config: ProtocolConfig
    transcripts: list[RoundTranscript]
    distributor_key: list[int]
    participants_key: list[int]
    checked_subset: list[int]
    mismatch_count: int
    adversary: AdversaryModel = field(default_factory=AdversaryModel)

    @property
    def key_rounds(self) -> list[int]:
        checked = set(self.checked_subset)
        return [i for i, t in enumerate(self.transcripts) if t.valid and i not in checked]

    def to_json_doc(self) -> dict:
        return {
            "schema": TRANSCRIPT_SCHEMA,
            "config": {**self.config.to_dict(), "adversary": self.adversary.label()},
            "transcripts": [t.to_dict() for t in self.transcripts],
            "keys": {
                "distributor": list(self.distributor_key),
                "participants": list(self.participants_key),
                "rounds": self.key_rounds,
            },
            "checks": {
                "subset": list(self.checked_subset),
                "mismatch_count": self.mismatch_count,
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_doc(), indent=2, sort_keys=True)


def basis_select(ys: Sequence[int], d: int) -> int:
    return sum(ys) % d


def correction_c(ys: Sequence[int], J: int, d: int) -> int:
    """Count of surplus ``X`` applications accumulated by pairs of ``Y_2``.

    In d = 2, ``Y_2**2 = X_2``; once the distributor adds ``Y_2**J`` the total
    ``Y`` count is even and contributes ``(sum(ys) + J) // 2`` shifts.  In odd
    prime dimensions ``Y`` is cyclic and no correction arises.
    """
    if d != 2:
        return 0
    total = sum(ys) + J
    if total % 2:
        raise ValueError("J must make the total Y count even")
    return total // 2


def distributor_key(a: int, x1: int, C: int, d: int) -> int:
    return (a - x1 - C) % d


def participants_key(xs: Sequence[int], d: int) -> int:
    return sum(xs) % d


def round_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_ROUND_STREAM, index)))


def subset_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SUBSET_STREAM,)))


def _attacked_link(adversary: AdversaryModel, N: int, rng: np.random.Generator) -> int | None:
    """Index n of the link after party n (link N returns to the distributor), or None."""
    if adversary.kind == "none":
        return None
    if adversary.attack_probability < 1.0 and rng.random() >= adversary.attack_probability:
        return None
    if adversary.kind == "dishonest_participant":
        return adversary.target - 1
    return int(rng.integers(1, N + 1))


def execute_round(
    d: int,
    choices: Sequence[PartyChoice],
    broadcast_order: Sequence[int],
    rng: np.random.Generator,
    channel: ChannelModel = ChannelModel(),
    attack_link: int | None = None,
) -> RoundTranscript:
    """Propagate the photon for fixed choices and record the resulting transcript."""
    N = len(choices)
    amps = mub_state(d, 0, 0).amps
    for n, c in enumerate(choices, start=1):
        # diagonal operators act elementwise on the logical amplitudes
        amps = op_xy(d, c.x, c.y).phases * amps
        if attack_link == n:
            guess = int(rng.integers(d))
            amps = mub_state(d, guess, measure_in_mub(QuditState(d, amps), guess, rng)).amps
    state = QuditState(d, amps)

    ys = [c.y for c in choices]
    J = basis_select(ys, d)
    C = correction_c(ys, J, d)
    if d == 2:
        state = apply(op_y(2) ** J, state)
        k_true = measure_in_mub(state, 0, rng)
    else:
        k_true = measure_in_mub(state, J, rng)
    a = apply_detection_noise(k_true, channel.fidelity, d, rng)

    return RoundTranscript(
        d=d,
        N=N,
        choices=tuple(choices),
        broadcast_order=tuple(broadcast_order),
        J=J,
        C=C,
        a=a,
        distributor_key_dit=distributor_key(a, choices[0].x, C, d),
        participants_key_dit=participants_key([c.x for c in choices[1:]], d),
        attacked=attack_link is not None,
    )


def run_round(
    cfg: ProtocolConfig,
    rng: np.random.Generator,
    adversary: AdversaryModel = AdversaryModel(),
) -> RoundTranscript:
    d, N = cfg.d, cfg.N
    xy = rng.integers(0, d, size=(N, 2))
    choices = tuple(PartyChoice(int(x), int(y)) for x, y in xy)
    order = tuple(int(p) for p in rng.permutation(np.arange(2, N + 1)))
    link = _attacked_link(adversary, N, rng)
    return execute_round(d, choices, order, rng, cfg.channel, link)


def security_subset(
    transcripts: Sequence[RoundTranscript],
    fraction: float,
    rng: np.random.Generator,
) -> list[int]:
    """Choose the rounds to sacrifice for the consistency check.

    Draws ``ceil(fraction * len(transcripts))`` valid rounds uniformly, then
    adds one random round for every participant who was never the last
    broadcaster in the draw.  Raises :class:`SubsetError` if some participant
    was never last in any valid round.
    """
    if not transcripts:
        raise ValueError("no rounds to choose a security subset from")
    N = transcripts[0].N
    valid = np.array([i for i, t in enumerate(transcripts) if t.valid], dtype=int)
    if len(valid) < N - 1:
        raise ValueError(f"need at least {N - 1} valid rounds, have {len(valid)}")
    size = min(math.ceil(fraction * len(transcripts)), len(valid))
    chosen = set(int(i) for i in rng.choice(valid, size=size, replace=False))

    covered = {transcripts[i].last_broadcaster for i in chosen}
    for n in range(2, N + 1):
        if n in covered:
            continue
        pool = [int(i) for i in valid if transcripts[i].last_broadcaster == n and i not in chosen]
        if not pool:
            raise SubsetError(n)
        chosen.add(pool[int(rng.integers(len(pool)))])
    return sorted(chosen)


def _run_rounds(cfg, adversary, indices, executor):
    def one(i):
        return run_round(cfg, round_rng(cfg.seed, i), adversary)

    if executor is None:
        return [one(i) for i in indices]
    return list(executor.map(one, indices))


def run_session(
    cfg: ProtocolConfig,
    adversary: AdversaryModel = AdversaryModel(),
    executor: Executor | None = None,
) -> SessionResult:
    """Run enough rounds for ``cfg.rounds`` key dits plus the security check.

    Each round ``i`` draws from its own substream of ``cfg.seed``, so results
    do not depend on ``executor`` or on execution order.
    """
    adversary.validate(cfg.N)
    initial = cfg.rounds + math.ceil(cfg.security_fraction * cfg.rounds)
    transcripts = _run_rounds(cfg, adversary, range(initial), executor)
    subset = security_subset(transcripts, cfg.security_fraction, subset_rng(cfg.seed))

    deficit = cfg.rounds - (sum(t.valid for t in transcripts) - len(subset))
    while deficit > 0:
        start = len(transcripts)
        transcripts += _run_rounds(cfg, adversary, range(start, start + deficit), executor)
        deficit = cfg.rounds - (sum(t.valid for t in transcripts) - len(subset))

    mismatches = sum(
        transcripts[i].distributor_key_dit != transcripts[i].participants_key_dit for i in subset
    )
    checked = set(subset)
    key = [t for i, t in enumerate(transcripts) if t.valid and i not in checked]
    return SessionResult(
        config=cfg,
        transcripts=transcripts,
        distributor_key=[t.distributor_key_dit for t in key],
        participants_key=[t.participants_key_dit for t in key],
        checked_subset=subset,
        mismatch_count=int(mismatches),
        adversary=adversary,
    )


def load_session(doc: dict) -> SessionResult:
    """Rebuild a :class:`SessionResult` from a ``qss-transcript-v1`` document."""
    if doc.get("schema") != TRANSCRIPT_SCHEMA:
        raise ValueError(f"unsupported transcript schema {doc.get('schema')!r}")
    c = dict(doc["config"])
    adversary = AdversaryModel.parse(c.pop("adversary", "none"))
    cfg = ProtocolConfig(
        d=c["d"],
        N=c["N"],
        rounds=c["rounds"],
        channel=ChannelModel(c["fidelity"]),
        seed=c["seed"],
        security_fraction=c["security_fraction"],
        mean_photon_number=c.get("mean_photon_number"),
    )
    return SessionResult(
        config=cfg,
        transcripts=[RoundTranscript.from_dict(t) for t in doc["transcripts"]],
        distributor_key=list(doc["keys"]["distributor"]),
        participants_key=list(doc["keys"]["participants"]),
        checked_subset=list(doc["checks"]["subset"]),
        mismatch_count=doc["checks"]["mismatch_count"],
        adversary=adversary,
    )
