"""Process lifecycle, the protocol interface, and trace legality rules.

Entry and exit procedures are written as generators.  Each ``yield`` hands the
simulator the action for the current round and receives back the feedback of
that same round; returning from the generator ends the section, and the process
changes section before the next round.  Returning from an entry generator means
"enter the critical section", returning from an exit generator means "go back
to the remainder section".
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum, IntEnum
from fractions import Fraction
from typing import Any, Generator, Iterable, Optional

import numpy as np

from .channel import (
    ActionKind,
    Capabilities,
    ChannelAction,
    Feedback,
    Label,
    Message,
    transmit,
)

__all__ = [
    "Section",
    "ProtocolViolation",
    "ConfigError",
    "ProcessContext",
    "ProtocolDecision",
    "SectionRunner",
    "Protocol",
    "Procedure",
    "critical_step",
    "ViolationKind",
    "Violation",
    "validate_trace",
    "LEGAL_STEPS",
    "process_seed",
    "ceil_log2",
    "parse_epsilon",
    "summarize_violations",
]

Procedure = Generator[ChannelAction, Feedback, Any]


class Section(IntEnum):
    REMAINDER = 0
    ENTRY = 1
    CRITICAL = 2
    EXIT = 3

    def successor(self) -> "Section":
        return Section((self + 1) % 4)


# Round-to-round section changes visible in a trace.  Exit and remainder may
# last zero rounds, so a process can jump over them; entry and critical cannot.
LEGAL_STEPS = frozenset({
    (Section.REMAINDER, Section.ENTRY),
    (Section.ENTRY, Section.CRITICAL),
    (Section.CRITICAL, Section.EXIT),
    (Section.CRITICAL, Section.REMAINDER),
    (Section.CRITICAL, Section.ENTRY),
    (Section.EXIT, Section.REMAINDER),
    (Section.EXIT, Section.ENTRY),
})


class ProtocolViolation(RuntimeError):
    """A protocol produced an action or transition its section forbids."""


class ConfigError(ValueError):
    pass


def process_seed(root_seed: int, *keys: int) -> int:
    """Split ``root_seed`` into an independent 128-bit seed for ``keys``.

    Uses numpy's SeedSequence hashing, so the stream of process ``p`` in trial
    ``i`` depends only on ``(root_seed, i, p)`` and never on scheduling order.
    """
    # the key count goes in too: SeedSequence ignores trailing zero words
    words = np.random.SeedSequence([int(root_seed) & (2**63 - 1), len(keys), *keys]).generate_state(4)
    return int.from_bytes(words.astype("<u4").tobytes(), "little")


def ceil_log2(x: Fraction | int) -> int:
    """Smallest integer ``j >= 0`` with ``2**j >= x``, computed exactly."""
    x = Fraction(x)
    if x <= 1:
        return 0
    j = (x.numerator // x.denominator).bit_length() - 1
    while Fraction(2) ** j < x:
        j += 1
    return j


def parse_epsilon(value: str | Fraction | float) -> Fraction:
    eps = Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(1 << 30)
    if not (0 < eps < 1):
        raise ConfigError(f"epsilon must lie in (0, 1), got {value}")
    return eps


class ProcessContext:
    """Per-process view of the world handed to protocol generators.

    Only what the model allows is reachable from here: the process id, the
    capability flags, a private random stream, the global clock when GC holds
    and the process count when KN holds.  Adversary-owned state is absent.
    """

    __slots__ = ("pid", "caps", "_seed", "_rng", "round", "section_start", "_sink", "_tx")

    def __init__(self, pid: int, caps: Capabilities, seed: int | tuple[int, ...],
                 rng: Any = None, sink: Optional[list] = None):
        self.pid = pid
        self.caps = caps
        self._seed = seed
        self._rng = rng
        self.round = 0
        self.section_start = 0
        self._sink = sink
        self._tx: dict = {}

    @property
    def rng(self):
        if self._rng is None:
            # a tuple of keys is split lazily; most processes in a long run
            # never draw a coin while resting
            seed = self._seed
            if isinstance(seed, tuple):
                seed = process_seed(*seed)
            self._rng = random.Random(seed)
        return self._rng

    @property
    def local_round(self) -> int:
        return self.round - self.section_start

    @property
    def n(self) -> int:
        return self.caps.known_n()

    def clock(self) -> int:
        if not self.caps.gc:
            raise PermissionError("no global clock in this model")
        return self.round

    def send(self, payload: int = 1) -> ChannelAction:
        """Transmit action carrying a protocol message with ``payload``."""
        act = self._tx.get(payload)
        if act is None:
            act = self._tx[payload] = transmit(Message(self.pid, Label.PROTOCOL, payload))
        return act

    def note(self, key: str, value: Any) -> None:
        if self._sink is not None:
            self._sink.append((self.round, self.pid, key, value))


@dataclass(frozen=True, slots=True)
class ProtocolDecision:
    """Action for one round, or a section change that precedes it."""

    action: Optional[ChannelAction]
    transition: Optional[Section] = None


class SectionRunner:
    """Drives one run of an entry or exit procedure one round at a time."""

    __slots__ = ("section", "gen", "started")

    def __init__(self, section: Section, gen: Procedure):
        if section not in (Section.ENTRY, Section.EXIT):
            raise ValueError("only entry and exit sections are protocol-controlled")
        self.section = section
        self.gen = gen
        self.started = False

    def step(self, prev_feedback: Optional[Feedback]) -> ProtocolDecision:
        try:
            if self.started:
                action = self.gen.send(prev_feedback)
            else:
                self.started = True
                action = next(self.gen)
        except StopIteration:
            target = Section.CRITICAL if self.section is Section.ENTRY else Section.REMAINDER
            return ProtocolDecision(None, target)
        kind = action.kind
        if kind is ActionKind.IDLE:
            raise ProtocolViolation(f"{self.section.name.lower()} procedure emitted Idle")
        if kind is ActionKind.TRANSMIT and action.message.label is Label.CRITICAL:
            raise ProtocolViolation("critical-labelled message sent outside the critical section")
        return ProtocolDecision(action)


def critical_step(ctx: ProcessContext) -> ProtocolDecision:
    # the adversary, not the protocol, ends the critical section
    act = ctx._tx.get("critical")
    if act is None:
        act = ctx._tx["critical"] = transmit(Message(ctx.pid, Label.CRITICAL, 1))
    return ProtocolDecision(act)


class Protocol:
    """Base class: subclasses implement ``entry`` (and optionally ``exit``)."""

    name = "protocol"
    requires_cd = False
    requires_kn = False
    static_only = False

    def check(self, caps: Capabilities) -> None:
        if self.requires_cd and not caps.cd:
            raise ConfigError(f"{self.name} needs collision detection")
        if self.requires_kn and not caps.kn:
            raise ConfigError(f"{self.name} needs the process count (kn)")

    def entry(self, ctx: ProcessContext) -> Procedure:
        raise NotImplementedError

    def exit(self, ctx: ProcessContext) -> Procedure:
        return
        yield  # pragma: no cover

    def describe(self) -> dict:
        return {"name": self.name}


class ViolationKind(str, Enum):
    REMAINDER_TRANSMISSION = "RemainderTransmission"
    MISSING_CRITICAL_MESSAGE = "MissingCriticalMessage"
    ILLEGAL_TRANSITION = "IllegalTransition"
    EXCLUSION = "ExclusionViolation"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    round: int
    pids: tuple[int, ...]
    detail: str = ""


def validate_trace(trace) -> list[Violation]:
    """All legality violations in ``trace``.

    ``trace`` needs ``sections`` and ``actions``: one row per round with one
    entry per process.  Processes are assumed to be in the remainder section
    before round 0.
    """
    out: list[Violation] = []
    prev: Optional[tuple] = None
    for t, (secs, acts) in enumerate(zip(trace.sections, trace.actions)):
        in_cs = []
        for p, (s, a) in enumerate(zip(secs, acts)):
            s = Section(s)
            if s is Section.REMAINDER:
                if a.kind is ActionKind.TRANSMIT:
                    out.append(Violation(ViolationKind.REMAINDER_TRANSMISSION, t, (p,)))
            elif s is Section.CRITICAL:
                in_cs.append(p)
                if a.kind is not ActionKind.TRANSMIT or a.message.label is not Label.CRITICAL:
                    out.append(Violation(ViolationKind.MISSING_CRITICAL_MESSAGE, t, (p,)))
            before = Section.REMAINDER if prev is None else Section(prev[p])
            if before is not s and (before, s) not in LEGAL_STEPS:
                out.append(Violation(ViolationKind.ILLEGAL_TRANSITION, t, (p,),
                                     f"{before.name}->{s.name}"))
        if len(in_cs) >= 2:
            out.append(Violation(ViolationKind.EXCLUSION, t, tuple(in_cs)))
        prev = secs
    return out


def summarize_violations(violations: Iterable[Violation]) -> dict[str, int]:
    counts = {k.value: 0 for k in ViolationKind}
    for v in violations:
        counts[v.kind.value] += 1
    return counts
