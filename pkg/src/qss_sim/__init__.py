"""Simulator for N-party, prime-dimension single-photon quantum secret sharing."""
from .noise import AdversaryModel, ChannelModel
from .protocol import ProtocolConfig, RoundTranscript, SessionResult, run_session
from .qudit import DiagonalOp, QuditState, mub_state, op_x, op_y

__all__ = [
    "AdversaryModel",
    "ChannelModel",
    "DiagonalOp",
    "ProtocolConfig",
    "QuditState",
    "RoundTranscript",
    "SessionResult",
    "mub_state",
    "op_x",
    "op_y",
    "run_session",
]
