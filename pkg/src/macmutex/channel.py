"""Single-round resolution of the multiple access channel.

A round is resolved from the vector of per-process actions: zero transmitters
give silence, one gives a successful transmission, two or more collide.  What a
process perceives depends on whether it transmitted (half-duplex: transmitters
perceive nothing) and on the collision-detection capability.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

__all__ = [
    "Label",
    "Message",
    "ActionKind",
    "ChannelAction",
    "LISTEN",
    "IDLE",
    "transmit",
    "OutcomeKind",
    "ChannelOutcome",
    "SILENCE",
    "COLLISION",
    "single",
    "FeedbackKind",
    "Feedback",
    "NOISE",
    "SILENCE_HEARD",
    "COLLISION_HEARD",
    "NO_FEEDBACK",
    "heard",
    "Capabilities",
    "resolve_round",
    "feedback_for",
]


class Label(IntEnum):
    PROTOCOL = 0
    CRITICAL = 1


@dataclass(frozen=True, slots=True)
class Message:
    sender: int
    label: Label = Label.PROTOCOL
    payload: int = 1

    @property
    def is_critical(self) -> bool:
        return self.label is Label.CRITICAL


class ActionKind(IntEnum):
    IDLE = 0
    LISTEN = 1
    TRANSMIT = 2


@dataclass(frozen=True, slots=True)
class ChannelAction:
    kind: ActionKind
    message: Optional[Message] = None

    @property
    def transmits(self) -> bool:
        return self.kind is ActionKind.TRANSMIT

    def __repr__(self) -> str:
        if self.message is None:
            return self.kind.name.capitalize()
        m = self.message
        return f"Transmit({m.label.name.lower()}:{m.payload}@{m.sender})"


LISTEN = ChannelAction(ActionKind.LISTEN)
IDLE = ChannelAction(ActionKind.IDLE)


def transmit(message: Message) -> ChannelAction:
    return ChannelAction(ActionKind.TRANSMIT, message)


class OutcomeKind(IntEnum):
    SILENCE = 0
    SINGLE = 1
    COLLISION = 2


@dataclass(frozen=True, slots=True)
class ChannelOutcome:
    kind: OutcomeKind
    message: Optional[Message] = None


SILENCE = ChannelOutcome(OutcomeKind.SILENCE)
COLLISION = ChannelOutcome(OutcomeKind.COLLISION)


def single(message: Message) -> ChannelOutcome:
    return ChannelOutcome(OutcomeKind.SINGLE, message)


class FeedbackKind(IntEnum):
    NO_FEEDBACK = 0
    NOISE = 1
    SILENCE_HEARD = 2
    COLLISION_HEARD = 3
    HEARD = 4


@dataclass(frozen=True, slots=True)
class Feedback:
    kind: FeedbackKind
    message: Optional[Message] = None

    @property
    def is_heard(self) -> bool:
        return self.kind is FeedbackKind.HEARD

    @property
    def is_silence(self) -> bool:
        return self.kind is FeedbackKind.SILENCE_HEARD

    @property
    def heard_critical(self) -> bool:
        return self.message is not None and self.message.label is Label.CRITICAL

    def payload(self) -> Optional[int]:
        """Payload of a heard message, ``None`` for anything else."""
        return None if self.message is None else self.message.payload


NO_FEEDBACK = Feedback(FeedbackKind.NO_FEEDBACK)
NOISE = Feedback(FeedbackKind.NOISE)
SILENCE_HEARD = Feedback(FeedbackKind.SILENCE_HEARD)
COLLISION_HEARD = Feedback(FeedbackKind.COLLISION_HEARD)


def heard(message: Message) -> Feedback:
    return Feedback(FeedbackKind.HEARD, message)


@dataclass(frozen=True)
class Capabilities:
    """Channel capability flags.

    ``n`` is always the true process count; protocols may only read it
    through :meth:`known_n`, which enforces the KN flag.
    """

    n: int
    cd: bool = False
    gc: bool = False
    kn: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"process count must be >= 1, got {self.n}")

    def known_n(self) -> int:
        if not self.kn:
            raise PermissionError("process count is not known in this model (kn=false)")
        return self.n

    def label(self) -> str:
        flags = [name.upper() if on else f"no-{name.upper()}"
                 for name, on in (("cd", self.cd), ("gc", self.gc), ("kn", self.kn))]
        return ",".join(flags)


def resolve_round(actions: Sequence[ChannelAction]) -> ChannelOutcome:
    sent = None
    count = 0
    for a in actions:
        if a.kind is ActionKind.TRANSMIT:
            count += 1
            if count > 1:
                return COLLISION
            sent = a.message
    if count == 0:
        return SILENCE
    return single(sent)


def feedback_for(outcome: ChannelOutcome, did_transmit: bool, caps: Capabilities) -> Feedback:
    if did_transmit:
        return NO_FEEDBACK
    if outcome.kind is OutcomeKind.SINGLE:
        return heard(outcome.message)
    if not caps.cd:
        return NOISE
    return SILENCE_HEARD if outcome.kind is OutcomeKind.SILENCE else COLLISION_HEARD
