"""Exact, seeded simulation of GHZ dense-coding CQSDC and MCQSDC protocols."""
from ._backend import NAME as BACKEND
from .adversary import AttackKind, AttackStrategy
from .analysis import (
    abort_probability_oracle,
    aggregate,
    detection_probability_oracle,
    eve_information,
    wilson,
)
from .protocol import ProtocolConfig, random_message, run_cqsdc, run_mcqsdc
from .report import RunReport

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AttackKind",
    "AttackStrategy",
    "ProtocolConfig",
    "RunReport",
    "abort_probability_oracle",
    "aggregate",
    "detection_probability_oracle",
    "eve_information",
    "random_message",
    "run_cqsdc",
    "run_mcqsdc",
    "wilson",
]
