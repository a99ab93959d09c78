"""Synchronous round loop, execution traces, and trace metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .adversary import AdversaryStrategy, schedule_sections
from .channel import (
    COLLISION,
    IDLE,
    LISTEN,
    NO_FEEDBACK,
    SILENCE,
    ActionKind,
    Capabilities,
    ChannelAction,
    ChannelOutcome,
    Feedback,
    FeedbackKind,
    Label,
    Message,
    OutcomeKind,
    feedback_for,
    single,
    transmit,
)
from .protocol import (
    ProcessContext,
    Protocol,
    ProtocolViolation,
    Section,
    critical_step,
)

__all__ = [
    "DEFAULT_HORIZON",
    "ExecutionTrace",
    "run",
    "MakespanReport",
    "makespan",
    "Visit",
    "ExclusionReport",
    "exclusion_report",
    "lockout_report",
    "UNFULFILLED",
]

DEFAULT_HORIZON = 1_000_000
UNFULFILLED = None

_REM, _ENTRY, _CRIT, _EXIT = (int(s) for s in Section)
_HEARD = FeedbackKind.HEARD


@dataclass
class ExecutionTrace:
    """Round-by-round record of one execution.

    ``sections[t][p]`` and ``actions[t][p]`` give process ``p``'s section and
    action in round ``t``; ``outcomes[t]`` is the channel outcome.  Feedback is
    not stored: it is a pure function of outcome, action and capabilities and is
    recomputed by :meth:`feedback`.  ``events`` lists section changes as
    ``(round, pid, from, to, cause)`` where the change takes effect at the start
    of ``round``.
    """

    n: int
    caps: Capabilities
    seed: int
    protocol: str
    strategy: str
    sections: list[tuple[int, ...]] = field(default_factory=list)
    actions: list[tuple[ChannelAction, ...]] = field(default_factory=list)
    outcomes: list[ChannelOutcome] = field(default_factory=list)
    events: list[tuple[int, int, str, str, str]] = field(default_factory=list)
    notes: list[tuple[int, int, str, Any]] = field(default_factory=list)
    truncated: bool = False
    trial: int = 0

    @property
    def rounds(self) -> int:
        return len(self.sections)

    def feedback(self, t: int, p: int) -> Feedback:
        a = self.actions[t][p]
        if a.kind is ActionKind.IDLE:
            return NO_FEEDBACK
        return feedback_for(self.outcomes[t], a.kind is ActionKind.TRANSMIT, self.caps)

    def notes_for(self, key: str) -> list[tuple[int, int, Any]]:
        return [(t, p, v) for t, p, k, v in self.notes if k == key]

    # -- JSON-lines export ------------------------------------------------

    def header(self) -> dict:
        return {
            "type": "header",
            "n": self.n,
            "caps": {"cd": self.caps.cd, "gc": self.caps.gc, "kn": self.caps.kn},
            "seed": self.seed,
            "trial": self.trial,
            "protocol": self.protocol,
            "strategy": self.strategy,
            "rounds": self.rounds,
            "truncated": self.truncated,
        }

    def iter_jsonl(self) -> Iterable[str]:
        yield json.dumps(self.header())
        by_round: dict[int, list] = {}
        for t, p, a, b, cause in self.events:
            by_round.setdefault(t, []).append([p, a, b, cause])
        notes: dict[int, list] = {}
        for t, p, k, v in self.notes:
            notes.setdefault(t, []).append([p, k, v])
        for t in range(self.rounds):
            procs = []
            for p in range(self.n):
                procs.append([Section(self.sections[t][p]).name,
                              _action_json(self.actions[t][p]),
                              _feedback_json(self.feedback(t, p))])
            row = {
                "type": "round",
                "round": t,
                "outcome": _outcome_json(self.outcomes[t]),
                "procs": procs,
                "events": by_round.get(t, []),
            }
            if t in notes:
                row["notes"] = notes[t]
            yield json.dumps(row)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for line in self.iter_jsonl():
                fh.write(line + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "ExecutionTrace":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        head = lines[0]
        caps = Capabilities(n=head["n"], **head["caps"])
        trace = cls(head["n"], caps, head["seed"], head["protocol"], head["strategy"],
                    truncated=head.get("truncated", False), trial=head.get("trial", 0))
        for row in lines[1:]:
            t = row["round"]
            trace.sections.append(tuple(int(Section[s]) for s, _, _ in row["procs"]))
            trace.actions.append(tuple(_action_from_json(a) for _, a, _ in row["procs"]))
            trace.outcomes.append(_outcome_from_json(row["outcome"]))
            for p, a, b, cause in row.get("events", []):
                trace.events.append((t, p, a, b, cause))
            for p, k, v in row.get("notes", []):
                trace.notes.append((t, p, k, v))
        return trace


def _msg_json(m: Message) -> list:
    return [m.sender, m.label.name.lower(), m.payload]


def _msg_from_json(raw: list) -> Message:
    return Message(raw[0], Label[raw[1].upper()], raw[2])


def _action_json(a: ChannelAction):
    if a.kind is ActionKind.TRANSMIT:
        return {"tx": _msg_json(a.message)}
    return a.kind.name.lower()


def _action_from_json(raw) -> ChannelAction:
    if isinstance(raw, dict):
        return transmit(_msg_from_json(raw["tx"]))
    return LISTEN if raw == "listen" else IDLE


def _outcome_json(o: ChannelOutcome):
    if o.kind is OutcomeKind.SINGLE:
        return {"single": _msg_json(o.message)}
    return o.kind.name.lower()


def _outcome_from_json(raw) -> ChannelOutcome:
    if isinstance(raw, dict):
        return single(_msg_from_json(raw["single"]))
    return SILENCE if raw == "silence" else COLLISION


def _feedback_json(f: Feedback):
    if f.message is not None:
        return {"heard": _msg_json(f.message)}
    return f.kind.name.lower()


def run(protocol: Protocol, strategy: AdversaryStrategy, caps: Capabilities, seed: int,
        horizon: int = DEFAULT_HORIZON, trial: int = 0,
        stop_after_entries: Optional[int] = None) -> ExecutionTrace:
    """Execute ``protocol`` against ``strategy`` until every process rests or
    ``horizon`` rounds have elapsed.  With ``stop_after_entries`` the run also
    stops (marked truncated) after the round in which that many critical
    sections have begun.

    Process ``p`` draws its coins from ``random.Random(process_seed(seed, trial, p))``,
    so the run is a deterministic function of its arguments.
    """
    protocol.check(caps)
    n = caps.n
    driver = schedule_sections(strategy, n)
    trace = ExecutionTrace(n, caps, seed, protocol.name, strategy.name, trial=trial)
    notes = trace.notes
    events = trace.events
    ctxs = [ProcessContext(p, caps, (seed, trial, p), sink=notes) for p in range(n)]
    crit_act = [critical_step(c).action for c in ctxs]

    sec = [_REM] * n
    left = [0] * n
    crit_len = [0] * n
    gens: list = [None] * n
    fb: list[Optional[Feedback]] = [None] * n
    acts: list[ChannelAction] = [IDLE] * n
    active = []
    for p in range(n):
        visit = driver.next_visit(p)
        if visit is not None:
            left[p], crit_len[p] = visit
            active.append(p)

    silence_fb = feedback_for(SILENCE, False, caps)
    collision_fb = feedback_for(COLLISION, False, caps)
    TRANSMIT = ActionKind.TRANSMIT
    LISTEN_K = ActionKind.LISTEN
    CRITICAL = Label.CRITICAL

    sections_log = trace.sections
    actions_log = trace.actions
    outcomes_log = trace.outcomes

    entries = 0
    quota = stop_after_entries
    t = 0
    while active and t < horizon:
        retired = None
        sender = None
        count = 0
        for p in active:
            s = sec[p]
            while True:
                if s == _REM:
                    if left[p] > 0:
                        left[p] -= 1
                        a = IDLE
                        break
                    s = _ENTRY
                    ctx = ctxs[p]
                    ctx.round = ctx.section_start = t
                    events.append((t, p, "REMAINDER", "ENTRY", "adversary"))
                    gen = gens[p] = protocol.entry(ctx)
                    try:
                        a = next(gen)
                    except StopIteration:
                        raise ProtocolViolation(
                            f"process {p} left its entry section without a single round") from None
                elif s == _CRIT:
                    if left[p] > 0:
                        left[p] -= 1
                        a = crit_act[p]
                        break
                    s = _EXIT
                    ctx = ctxs[p]
                    ctx.round = ctx.section_start = t
                    events.append((t, p, "CRITICAL", "EXIT", "adversary"))
                    gen = gens[p] = protocol.exit(ctx)
                    try:
                        a = next(gen)
                    except StopIteration:
                        a = None
                else:
                    ctxs[p].round = t
                    try:
                        a = gens[p].send(fb[p])
                    except StopIteration:
                        a = None
                if a is not None:
                    kind = a.kind
                    if kind is TRANSMIT:
                        if a.message.label is CRITICAL:
                            raise ProtocolViolation(
                                f"process {p} sent a critical-labelled message in {Section(s).name}")
                    elif kind is not LISTEN_K:
                        raise ProtocolViolation(f"process {p} idled in {Section(s).name}")
                    break
                # the section's procedure finished before acting in round t
                gens[p] = None
                ctx = ctxs[p]
                ctx.section_start = t
                if s == _ENTRY:
                    s = _CRIT
                    left[p] = crit_len[p]
                    events.append((t, p, "ENTRY", "CRITICAL", "protocol"))
                    entries += 1
                    continue
                s = _REM
                events.append((t, p, "EXIT", "REMAINDER", "protocol"))
                visit = driver.next_visit(p)
                if visit is None:
                    a = IDLE
                    if retired is None:
                        retired = []
                    retired.append(p)
                    break
                left[p], crit_len[p] = visit
            sec[p] = s
            acts[p] = a
            if a.kind is TRANSMIT:
                count += 1
                sender = a.message

        if count == 0:
            outcome = SILENCE
            lfb = silence_fb
        elif count == 1:
            outcome = single(sender)
            lfb = Feedback(_HEARD, sender)
        else:
            outcome = COLLISION
            lfb = collision_fb
        for p in active:
            fb[p] = lfb if acts[p].kind is LISTEN_K else NO_FEEDBACK

        sections_log.append(tuple(sec))
        actions_log.append(tuple(acts))
        outcomes_log.append(outcome)
        if retired:
            active = [p for p in active if p not in retired]
        t += 1
        if quota is not None and entries >= quota:
            break

    trace.truncated = bool(active)
    return trace


# --------------------------------------------------------------------------
# metrics


@dataclass
class MakespanReport:
    max_gap: int
    gaps: list[tuple[int, int]]
    admissible: bool
    open_gap: bool = False


def makespan(trace: ExecutionTrace) -> MakespanReport:
    """Maximal intervals with some process in entry and none in critical.

    Gaps are inclusive ``(start, end)`` round pairs.  A gap still open when a
    truncated trace ends is reported with ``open_gap`` set.
    """
    gaps = []
    start = None
    admissible = True
    for t, row in enumerate(trace.sections):
        crit = row.count(_CRIT)
        if crit >= 2:
            admissible = False
        if crit == 0 and _ENTRY in row:
            if start is None:
                start = t
        elif start is not None:
            gaps.append((start, t - 1))
            start = None
    open_gap = start is not None
    if open_gap:
        gaps.append((start, trace.rounds - 1))
    max_gap = max((b - a + 1 for a, b in gaps), default=0)
    return MakespanReport(max_gap, gaps, admissible, open_gap and trace.truncated)


@dataclass(frozen=True)
class Visit:
    pid: int
    start: int
    end: int
    violated: bool


@dataclass
class ExclusionReport:
    visits: list[Visit]

    @property
    def total(self) -> int:
        return len(self.visits)

    @property
    def violated(self) -> int:
        return sum(v.violated for v in self.visits)


def exclusion_report(trace: ExecutionTrace) -> ExclusionReport:
    n = trace.n
    open_start = [None] * n
    open_bad = [False] * n
    visits = []
    for t, row in enumerate(trace.sections):
        crowded = row.count(_CRIT) >= 2
        for p in range(n):
            if row[p] == _CRIT:
                if open_start[p] is None:
                    open_start[p] = t
                    open_bad[p] = False
                if crowded:
                    open_bad[p] = True
            elif open_start[p] is not None:
                visits.append(Visit(p, open_start[p], t - 1, open_bad[p]))
                open_start[p] = None
    last = trace.rounds - 1
    for p in range(n):
        if open_start[p] is not None:
            visits.append(Visit(p, open_start[p], last, open_bad[p]))
    visits.sort(key=lambda v: (v.start, v.pid))
    return ExclusionReport(visits)


def lockout_report(trace: ExecutionTrace) -> dict[int, list[tuple[int, Optional[int]]]]:
    """For each process, its entry runs paired with the round it reached the
    critical section, or ``UNFULFILLED`` if the trace ended first."""
    out: dict[int, list] = {}
    pending: dict[int, int] = {}
    for t, p, a, b, _cause in trace.events:
        if b == "ENTRY":
            pending[p] = t
        elif b == "CRITICAL" and p in pending:
            out.setdefault(p, []).append((pending.pop(p), t))
    for p, t in pending.items():
        out.setdefault(p, []).append((t, UNFULFILLED))
    for runs in out.values():
        runs.sort()
    return out
