"""No-lockout transformation for entry protocols on a channel with collision detection.

The base protocol is slowed down threefold so that a newcomer can never hear
three silent rounds while a base competition is running.  A process leaving the
critical section acts as a guard: it announces itself with a 0 right after the
last critical message and, if anybody answers, referees a selection among the
waiting processes that favours the largest loss counter and then the smallest
id.

Wire conventions (payloads of protocol messages):

* ``1`` slowdown beacon and first guard round of a selection block
* ``0`` exit announcement, second guard round, competitor transmissions
"""

from __future__ import annotations

from typing import Callable, Generator, Optional

from .channel import LISTEN, Capabilities, ChannelAction, Feedback, FeedbackKind, Label
from .protocol import ConfigError, Procedure, ProcessContext, Protocol, ceil_log2

__all__ = [
    "LossWatch",
    "slowdown3",
    "selection",
    "exit_guard",
    "FairProtocol",
    "select_oracle",
]

_SILENT = FeedbackKind.SILENCE_HEARD
_HEARD = FeedbackKind.HEARD

# Loss counters never get near 2**MAX_LOSS_BITS; the cap only matters when two
# guards overlap after an exclusion failure and keep each other's probes busy.
MAX_LOSS_BITS = 62


class LossWatch:
    """Per-entry observer of the channel.

    ``loss`` counts rising edges of clearly heard critical messages, i.e. the
    number of critical sections that began while the owner was in its entry
    section.  The very first observation of an entry never counts: an occupant
    already present on arrival did not win against us.
    """

    __slots__ = ("ctx", "loss", "prev_critical", "guard_zero", "silent_run", "started")

    def __init__(self, ctx: ProcessContext):
        self.ctx = ctx
        self.loss = 0
        self.prev_critical = False
        self.guard_zero = False
        self.silent_run = 0
        self.started = False

    def observe(self, fb: Feedback) -> None:
        kind = fb.kind
        if kind is FeedbackKind.NO_FEEDBACK:
            # own transmission: nothing learned, the beacon is not silence
            self.guard_zero = False
            self.silent_run = 0
            return
        crit = kind is _HEARD and fb.message.label is Label.CRITICAL
        if crit and not self.prev_critical and self.started:
            self.loss += 1
            self.ctx.note("loss", self.loss)
        self.guard_zero = (self.prev_critical and kind is _HEARD
                           and fb.message.label is Label.PROTOCOL and fb.message.payload == 0)
        self.prev_critical = crit
        self.silent_run = self.silent_run + 1 if kind is _SILENT else 0
        self.started = True


def watched(gen: Generator, watch: LossWatch,
            stop: Optional[Callable[[Feedback], bool]] = None) -> Generator[ChannelAction, Feedback, object]:
    """Forward ``gen`` while feeding every feedback to ``watch``.

    Returns ``(stopped, value)``; ``stopped`` is True when ``stop`` fired.
    """
    try:
        act = next(gen)
    except StopIteration as done:
        return False, done.value
    while True:
        fb = yield act
        watch.observe(fb)
        if stop is not None and stop(fb):
            gen.close()
            return True, None
        try:
            act = gen.send(fb)
        except StopIteration as done:
            return False, done.value


def slowdown3(ctx: ProcessContext, base: Generator) -> Generator[ChannelAction, Feedback, object]:
    """Every base round becomes (beacon 1, listen, base action); the base only
    sees the feedback of the third round."""
    try:
        act = next(base)
    except StopIteration as done:
        return done.value
    beacon = ctx.send(1)
    while True:
        yield beacon
        yield LISTEN
        fb = yield act
        try:
            act = base.send(fb)
        except StopIteration as done:
            return done.value


def _block(guard: bool, active: bool, ctx: ProcessContext) -> Generator[ChannelAction, Feedback, bool]:
    """One three-round selection block; True iff the competition round was busy."""
    if guard:
        yield ctx.send(1)
        yield ctx.send(0)
        fb = yield LISTEN
        return fb.kind is not _SILENT
    yield LISTEN
    yield LISTEN
    if active:
        yield ctx.send(0)
        return True
    fb = yield LISTEN
    return fb.kind is not _SILENT


def selection(ctx: ProcessContext, guard: bool, loss: int, id_bits: int) -> Generator[ChannelAction, Feedback, bool]:
    """Pick the competitor with the largest ``loss``, ties to the smallest id.

    Competitors return False as soon as they know they lost and True if they
    survive every block; the guard always runs to the end and returns False.
    """
    start = ctx.round
    alive = not guard
    # phase 1: double the probe until nobody reaches it
    i = 0
    while True:
        probe = 1 << i
        busy = yield from _block(guard, alive and loss >= probe, ctx)
        if not busy:
            break
        if alive and loss < probe:
            return False
        i += 1
        if i > MAX_LOSS_BITS:
            break
    # phase 2: the maximum lies in [lo, hi)
    lo, hi = (0, 1) if i == 0 else (1 << (i - 1), 1 << i)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        busy = yield from _block(guard, alive and loss >= mid, ctx)
        if busy:
            if alive and loss < mid:
                return False
            lo = mid
        else:
            hi = mid
    if alive and loss != lo:
        return False
    # phase 3: smallest id among the holders of the maximum, MSB first
    for b in reversed(range(id_bits)):
        one = (ctx.pid >> b) & 1
        busy = yield from _block(guard, alive and not one, ctx)
        if alive and one and busy:
            return False
    if alive:
        ctx.note("selection_win", start)
    return alive


def select_oracle(candidates: dict[int, int]) -> Optional[int]:
    """Reference winner for ``{pid: loss}``: largest loss, then smallest pid."""
    if not candidates:
        return None
    return min(candidates, key=lambda p: (-candidates[p], p))


def exit_guard(ctx: ProcessContext, id_bits: int) -> Procedure:
    yield ctx.send(0)
    fb = yield LISTEN
    if fb.kind is _SILENT:
        return
    ctx.note("guard", ctx.round)
    yield from selection(ctx, True, 0, id_bits)


class FairProtocol(Protocol):
    """Wraps a no-deadlock entry protocol so that no waiting process is locked out."""

    requires_cd = True

    def __init__(self, base: Protocol, id_bits: Optional[int] = None):
        self.base = base
        self.id_bits = id_bits
        self.name = f"{base.name}+fair"
        self.static_only = base.static_only

    def check(self, caps: Capabilities) -> None:
        super().check(caps)
        self.base.check(caps)
        if self.id_bits is None and not caps.kn:
            raise ConfigError("fairness needs kn or an explicit id_bits bound for the id search")
        if self.id_bits is not None and caps.n > (1 << self.id_bits):
            raise ConfigError(f"id_bits={self.id_bits} cannot address {caps.n} processes")

    def bits(self, ctx: ProcessContext) -> int:
        if self.id_bits is not None:
            return max(1, self.id_bits)
        return max(1, ceil_log2(ctx.n))

    def entry(self, ctx: ProcessContext) -> Procedure:
        watch = LossWatch(ctx)
        bits = self.bits(ctx)
        heard_crit = lambda fb: fb.kind is _HEARD and fb.message.label is Label.CRITICAL
        mode = "listen"
        while True:
            if mode == "listen":
                window = []
                for _ in range(3):
                    fb = yield LISTEN
                    watch.observe(fb)
                    if watch.guard_zero:
                        break
                    window.append(fb)
                if watch.guard_zero:
                    mode = "join"
                elif all(f.kind is _SILENT for f in window):
                    mode = "run"
                elif _waiting_pattern(window):
                    mode = "wait"
                # anything else: listen again from scratch
            elif mode == "run":
                stopped, _ = yield from watched(slowdown3(ctx, self.base.entry(ctx)), watch, heard_crit)
                if not stopped:
                    # one more beacon: entering now would put the first critical
                    # message on top of the other runners' beacons
                    yield ctx.send(1)
                    return
                mode = "listen"
            elif mode == "wait":
                while True:
                    fb = yield LISTEN
                    watch.observe(fb)
                    if watch.guard_zero:
                        mode = "join"
                        break
                    if watch.silent_run >= 3:
                        # the release was missed; the channel is free
                        mode = "run"
                        break
            else:  # join: answer the guard, then compete
                yield ctx.send(0)
                ctx.note("compete", watch.loss)
                _, won = yield from watched(selection(ctx, False, watch.loss, bits), watch)
                if won:
                    return
                mode = "wait"

    def exit(self, ctx: ProcessContext) -> Procedure:
        return exit_guard(ctx, self.bits(ctx))

    def describe(self) -> dict:
        return {"name": self.name, "base": self.base.describe(), "id_bits": self.id_bits}


def _waiting_pattern(window: list[Feedback]) -> bool:
    """(1,1,1) or (1,1,0) in heard payloads, or an occupant heard last."""
    if window and window[-1].heard_critical:
        return True
    payloads = tuple(f.payload() if f.kind is _HEARD else None for f in window)
    return payloads in ((1, 1, 1), (1, 1, 0))
