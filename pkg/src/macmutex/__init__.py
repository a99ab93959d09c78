"""Simulation of randomized mutual exclusion on a shared multiple access channel."""

from .adversary import AdversaryStrategy, TransmissionSchedule, lowerbound_construct, replay_violation
from .channel import Capabilities, ChannelAction, Feedback, Message
from .protocol import ConfigError, ProcessContext, Protocol, ProtocolViolation, Section, validate_trace
from .protocols import make_protocol
from .simulator import ExecutionTrace, exclusion_report, lockout_report, makespan, run

__all__ = [
    "AdversaryStrategy",
    "TransmissionSchedule",
    "lowerbound_construct",
    "replay_violation",
    "Capabilities",
    "ChannelAction",
    "Feedback",
    "Message",
    "ConfigError",
    "ProcessContext",
    "Protocol",
    "ProtocolViolation",
    "Section",
    "validate_trace",
    "make_protocol",
    "ExecutionTrace",
    "exclusion_report",
    "lockout_report",
    "makespan",
    "run",
]
