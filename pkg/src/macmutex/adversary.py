"""Adversary strategies and the transmission-schedule lower-bound construction.

An adversary fixes, for every process, the lengths of its remainder and
critical sections up front (it is oblivious to the protocol's coins).  The
module also contains the set-shrinking construction that, from one
transmission schedule per process, extracts a group of processes whose
simultaneous start forces two of them into the critical section together on a
channel without collision detection.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .channel import LISTEN, Capabilities
from .protocol import ConfigError, Procedure, ProcessContext, Protocol

__all__ = [
    "AdversaryStrategy",
    "SectionDriver",
    "schedule_sections",
    "TransmissionSchedule",
    "FixedPointResult",
    "lowerbound_construct",
    "check_fixed_point",
    "ScheduleProtocol",
    "replay_violation",
    "extract_schedule",
    "load_schedules",
    "random_schedules",
    "ARRIVAL_PATTERNS",
    "arrival_strategy",
    "starvation_strategy",
]

Pair = tuple[int, int]


@dataclass(frozen=True)
class AdversaryStrategy:
    """Per-process (remainder_len, critical_len) sequences.

    With ``repeat`` the sequences are cycled forever (the infinite case);
    otherwise a process stays in the remainder section after its last critical
    section.  ``repeat`` may also be one flag per process.
    """

    sequences: tuple[tuple[Pair, ...], ...]
    repeat: bool | tuple[bool, ...] = False
    name: str = "custom"

    def __post_init__(self) -> None:
        seqs = tuple(tuple((int(r), int(c)) for r, c in seq) for seq in self.sequences)
        object.__setattr__(self, "sequences", seqs)
        if not isinstance(self.repeat, bool):
            flags = tuple(bool(f) for f in self.repeat)
            if len(flags) != len(seqs):
                raise ConfigError(f"{len(flags)} repeat flags for {len(seqs)} processes")
            object.__setattr__(self, "repeat", flags)
        for p, seq in enumerate(seqs):
            for r, c in seq:
                if r < 0:
                    raise ConfigError(f"process {p}: remainder length {r} < 0")
                if c < 1:
                    raise ConfigError(f"process {p}: critical length {c} < 1")

    @property
    def n(self) -> int:
        return len(self.sequences)

    def repeats(self, pid: int) -> bool:
        return self.repeat if isinstance(self.repeat, bool) else self.repeat[pid]

    @classmethod
    def static(cls, n: int, critical: int = 1, participants: Optional[Sequence[int]] = None,
               start: int = 0) -> "AdversaryStrategy":
        """Given processes (default: all) start entry together at ``start``."""
        members = set(range(n) if participants is None else participants)
        seqs = [((start, critical),) if p in members else () for p in range(n)]
        return cls(tuple(seqs), name=f"static{n}")

    @classmethod
    def from_flat(cls, flat: Sequence[Sequence[int]], repeat: bool = False,
                  name: str = "custom") -> "AdversaryStrategy":
        """Build from interleaved ``[r, c, r, c, ...]`` lists."""
        seqs = []
        for p, row in enumerate(flat):
            if len(row) % 2:
                raise ConfigError(f"process {p}: finite sequence of odd length {len(row)}")
            seqs.append(tuple(zip(row[0::2], row[1::2])))
        return cls(tuple(seqs), repeat=repeat, name=name)

    @classmethod
    def from_json(cls, doc: dict | str) -> "AdversaryStrategy":
        if isinstance(doc, str):
            doc = json.loads(doc)
        raw = doc["strategies"]
        n = int(doc.get("n", len(raw)))
        if len(raw) != n:
            raise ConfigError(f"n={n} but {len(raw)} strategy rows given")
        seqs = []
        for p, row in enumerate(raw):
            if row and not isinstance(row[0], (list, tuple)):
                if len(row) % 2:
                    raise ConfigError(f"process {p}: finite sequence of odd length {len(row)}")
                row = list(zip(row[0::2], row[1::2]))
            for pair in row:
                if len(pair) != 2:
                    raise ConfigError(f"process {p}: pair {pair!r} is not (remainder, critical)")
            seqs.append(tuple(tuple(pair) for pair in row))
        rep = doc.get("repeat", False)
        rep = bool(rep) if isinstance(rep, bool) else tuple(bool(f) for f in rep)
        return cls(tuple(seqs), repeat=rep, name=str(doc.get("name", "custom")))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "name": self.name,
            "repeat": self.repeat if isinstance(self.repeat, bool) else list(self.repeat),
            "strategies": [[list(pair) for pair in seq] for seq in self.sequences],
        }


class SectionDriver:
    """Yields the next (remainder, critical) allotment per process on demand."""

    def __init__(self, strategy: AdversaryStrategy):
        self.strategy = strategy
        self._iters: list[Iterator[Pair]] = [
            itertools.cycle(seq) if (strategy.repeats(p) and seq) else iter(seq)
            for p, seq in enumerate(strategy.sequences)
        ]

    def next_visit(self, pid: int) -> Optional[Pair]:
        """Next allotment, or ``None`` once the process rests forever."""
        return next(self._iters[pid], None)


def schedule_sections(strategy: AdversaryStrategy, n: int) -> SectionDriver:
    if strategy.n != n:
        raise ConfigError(f"strategy covers {strategy.n} processes, expected {n}")
    return SectionDriver(strategy)


@dataclass(frozen=True)
class TransmissionSchedule:
    """Transmit (1) / listen (0) pattern of one entry run.

    ``bits[0]`` is the action in round 1 after the start, so ``bit(i)`` follows
    the construction's 1-based round numbering and ``len`` is the round at
    whose end the process enters the critical section.
    """

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.bits:
            raise ValueError("transmission schedule must be non-empty")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("schedule bits must be 0 or 1")

    @classmethod
    def parse(cls, text: str) -> "TransmissionSchedule":
        return cls(tuple(int(ch) for ch in text.strip()))

    def bit(self, i: int) -> int:
        return self.bits[i - 1] if 1 <= i <= len(self.bits) else 0

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


@dataclass(frozen=True)
class FixedPointResult:
    p_star: frozenset[int]
    iterations: int
    shortest_len: int
    history: tuple[frozenset[int], ...] = field(repr=False, default=())


def _window(n: int) -> range:
    if n < 4 or n % 2:
        raise ValueError(f"construction needs an even n >= 4, got {n}")
    return range(1, n // 2)


def _unique_transmitters(members: frozenset[int], scheds: Sequence[TransmissionSchedule],
                         window: range) -> set[int]:
    out = set()
    for i in window:
        senders = [p for p in members if scheds[p].bit(i)]
        if len(senders) == 1:
            out.add(senders[0])
    return out


def _unique_shortest(members: frozenset[int], scheds: Sequence[TransmissionSchedule],
                     window: range) -> set[int]:
    if not members:
        return set()
    shortest = min(len(scheds[p]) for p in members)
    holders = [p for p in members if len(scheds[p]) == shortest]
    return {holders[0]} if len(holders) == 1 else set()


def lowerbound_construct(schedules: Sequence[TransmissionSchedule | str], n: int) -> FixedPointResult:
    """Fixed point of the alternating removal rules over rounds ``1..n/2-1``.

    Odd steps drop every process that would be the only transmitter in some
    round of the window; even steps drop the process with the strictly shortest
    schedule, if there is one.
    """
    window = _window(n)
    scheds = [s if isinstance(s, TransmissionSchedule) else TransmissionSchedule.parse(s)
              for s in schedules]
    if len(scheds) != n:
        raise ValueError(f"expected {n} schedules, got {len(scheds)}")
    current = frozenset(range(n))
    history = [current]
    stable_at = 0
    step = 0
    quiet = 0
    while quiet < 2:
        rule = _unique_transmitters if step % 2 == 0 else _unique_shortest
        nxt = current - rule(current, scheds, window)
        step += 1
        history.append(nxt)
        if nxt == current:
            quiet += 1
        else:
            quiet = 0
            stable_at = step
        current = nxt
    shortest = min((len(scheds[p]) for p in current), default=0)
    return FixedPointResult(current, stable_at, shortest, tuple(history))


def check_fixed_point(result: FixedPointResult, schedules: Sequence[TransmissionSchedule | str],
                      n: int) -> dict[str, bool]:
    """The three properties the construction promises for its fixed point."""
    window = _window(n)
    scheds = [s if isinstance(s, TransmissionSchedule) else TransmissionSchedule.parse(s)
              for s in schedules]
    members = result.p_star
    no_single = all(sum(scheds[p].bit(i) for p in members) != 1 for i in window)
    shortest_pair = False
    if members:
        m = min(len(scheds[p]) for p in members)
        shortest_pair = sum(1 for p in members if len(scheds[p]) == m) >= 2
    return {
        "at_least_two": len(members) >= 2,
        "no_unique_transmitter": no_single,
        "shared_shortest": shortest_pair,
    }


class ScheduleProtocol(Protocol):
    """Deterministic entry that replays a fixed transmission schedule per process."""

    name = "schedule"

    def __init__(self, schedules: Sequence[TransmissionSchedule | str]):
        self.schedules = [s if isinstance(s, TransmissionSchedule) else TransmissionSchedule.parse(s)
                          for s in schedules]

    def entry(self, ctx: ProcessContext) -> Procedure:
        for b in self.schedules[ctx.pid].bits:
            yield ctx.send(1) if b else LISTEN


def replay_violation(schedules: Sequence[TransmissionSchedule | str], p_star, n: int,
                     critical_len: int = 1):
    """Run the members of ``p_star`` on their schedules from round 1.

    Processes outside ``p_star`` stay in the remainder section for the whole
    run.  The channel has no collision detection.  Returns the execution trace.
    """
    from .simulator import run

    members = set(p_star)
    if len(members) < 2:
        raise ValueError("replay needs at least two processes in the fixed point")
    proto = ScheduleProtocol(schedules)
    strategy = AdversaryStrategy(
        tuple(((1, critical_len),) if p in members else () for p in range(n)),
        name="lowerbound-replay",
    )
    caps = Capabilities(n=n, cd=False, gc=True, kn=True)
    return run(proto, strategy, caps, seed=0)


def extract_schedule(protocol: Protocol, caps: Capabilities, seed: int, pid: int = 0,
                     horizon: int = 100_000) -> TransmissionSchedule:
    """Realized schedule of ``pid`` running alone from round 1 with a fixed seed."""
    from .simulator import run
    from .protocol import Section

    strategy = AdversaryStrategy(
        tuple(((1, 1),) if p == pid else () for p in range(caps.n)), name="solo")
    trace = run(protocol, strategy, caps, seed=seed, horizon=horizon)
    bits = [int(acts[pid].transmits) for secs, acts in zip(trace.sections, trace.actions)
            if secs[pid] == Section.ENTRY]
    return TransmissionSchedule(tuple(bits))


def load_schedules(path: str | Path) -> tuple[int, list[TransmissionSchedule]]:
    doc = json.loads(Path(path).read_text())
    scheds = [TransmissionSchedule.parse(s) for s in doc["schedules"]]
    n = int(doc.get("n", len(scheds)))
    return n, scheds


def random_schedules(n: int, rng: random.Random, max_len: Optional[int] = None,
                     p_transmit: float = 0.5) -> list[TransmissionSchedule]:
    """Random schedules with lengths in ``[1, max_len]`` (default ``n/2 - 1``)."""
    top = n // 2 - 1 if max_len is None else max_len
    out = []
    for _ in range(n):
        length = rng.randint(1, top)
        out.append(TransmissionSchedule(tuple(int(rng.random() < p_transmit) for _ in range(length))))
    return out


# ---------------------------------------------------------------------------
# arrival patterns used by the Monte Carlo experiments.  ``span`` is the
# protocol's natural time scale (e.g. its listening prefix), so offsets land
# inside the windows where a latecomer can interfere.

def _simultaneous(n, span, rng):
    return [((0, 1),)] * n


def _pair(n, span, rng):
    return [((0, 1),)] * 2 + [()] * (n - 2)


def _staggered(n, span, rng):
    step = max(1, span // max(1, n - 1))
    return [((p * step, 1),) for p in range(n)]


def _late_half(n, span, rng):
    h = max(1, n // 2)
    return [((0, 1),)] * h + [((span, 1),)] * (n - h)


def _cycling(n, span, rng):
    m = min(n, 3)
    rows = [tuple((0, 1 + (p + j) % 3) for j in range(3)) for p in range(m)]
    return rows + [()] * (n - m)


def _random(n, span, rng):
    return [((rng.randrange(2 * span + 1), rng.randint(1, 3)),) for _ in range(n)]


ARRIVAL_PATTERNS = {
    "simultaneous": _simultaneous,
    "pair": _pair,
    "staggered": _staggered,
    "late-half": _late_half,
    "cycling": _cycling,
    "random": _random,
}


def arrival_strategy(pattern: str, n: int, span: int, rng: Optional[random.Random] = None) -> AdversaryStrategy:
    """One strategy of the named arrival pattern; ``rng`` drives the random one."""
    try:
        build = ARRIVAL_PATTERNS[pattern]
    except KeyError:
        raise ConfigError(f"unknown arrival pattern {pattern!r}; choose from {sorted(ARRIVAL_PATTERNS)}") from None
    if pattern == "pair" and n < 2:
        raise ConfigError("pair pattern needs n >= 2")
    rows = build(n, span, rng or random.Random(0))
    return AdversaryStrategy(tuple(rows), name=pattern)


def starvation_strategy(n: int, cycles: Optional[int] = None, critical: int = 2,
                        victim: Optional[int] = None) -> AdversaryStrategy:
    """Two processes re-enter back to back while ``victim`` (default: the
    largest id) arrives once, one round after they started.  Everybody else
    rests.  ``cycles=None`` keeps the two cycling forever.

    Against a protocol that only guarantees no-deadlock the cyclers can win
    every competition and keep the victim out.
    """
    if n < 3:
        raise ConfigError("starvation scenario needs n >= 3")
    victim = n - 1 if victim is None else victim
    cyclers = [p for p in range(n) if p != victim][:2]
    rows: list[tuple[Pair, ...]] = [()] * n
    repeat = [False] * n
    for p in cyclers:
        rows[p] = ((0, critical),) * (1 if cycles is None else cycles)
        repeat[p] = cycles is None
    rows[victim] = ((1, critical),)
    return AdversaryStrategy(tuple(rows), repeat=tuple(repeat), name=f"starve{n}")
