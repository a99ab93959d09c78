"""Entry-section algorithms for the epsilon-mutual-exclusion problem.

* ``pi-mod``: listen-then-Probability_Increase for the model where the process
  count is known (no collision detection needed).
* ``cis-willard``: Check_If_Single followed by a Willard-style election run on
  a simulated full-duplex channel (collision detection, static starts).
* ``<static>-dyn``: the busy-signal reduction turning a static algorithm into
  one that tolerates arbitrary start times.
* ``id-tournament``: deterministic lowest-id-wins election (collision
  detection); no randomness, used as a no-deadlock-only baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction
from typing import Callable, Generator, Optional

from .channel import (
    COLLISION_HEARD,
    LISTEN,
    SILENCE_HEARD,
    ActionKind,
    ChannelAction,
    ChannelOutcome,
    Feedback,
    FeedbackKind,
    OutcomeKind,
    Capabilities,
    heard,
)
from .protocol import ConfigError, Procedure, ProcessContext, Protocol, ceil_log2, parse_epsilon

__all__ = [
    "PIConfig",
    "CISConfig",
    "resigned_wait",
    "probability_increase",
    "ProbabilityIncreaseModified",
    "check_if_single",
    "full_duplex_feedback",
    "duplex_simulate",
    "willard_election",
    "CheckIfSingleWillard",
    "IdTournament",
    "with_busy_signal",
    "StaticToDynamic",
    "PROTOCOLS",
    "make_protocol",
]

PAYLOAD = 1
BUSY = 2
ACK = 3


@dataclass(frozen=True)
class PIConfig:
    """Parameters of the modified Probability_Increase entry.

    ``k`` is both the length of the initial listening stretch and of the
    Probability_Increase run that follows it.
    """

    n: int
    epsilon: Fraction
    c_phase: int = 2
    c_phases: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "epsilon", parse_epsilon(self.epsilon))
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.c_phase < 1 or self.c_phases < 1:
            raise ConfigError("phase constants must be >= 1")

    @cached_property
    def phase_len(self) -> int:
        return self.c_phase * max(1, ceil_log2(1 / self.epsilon))

    @cached_property
    def num_phases(self) -> int:
        return self.c_phases * max(1, ceil_log2(self.n))

    @cached_property
    def k(self) -> int:
        return self.phase_len * self.num_phases

    def transmit_exponent(self, phase: int) -> int:
        """Phase ``i`` (1-based) transmits with probability ``2**-i``."""
        return phase


@dataclass(frozen=True)
class CISConfig:
    epsilon: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "epsilon", parse_epsilon(self.epsilon))

    @cached_property
    def pairs(self) -> int:
        return max(1, ceil_log2(1 / self.epsilon))

    @property
    def rounds(self) -> int:
        return 2 * self.pairs


def resigned_wait(ctx: ProcessContext, timeout: int) -> Procedure:
    """Listen until the channel is released.

    Release is the first round without a critical message after at least one
    was heard.  As a guard against runs where two critical sections collide
    (and no critical message is ever heard clearly), the wait also ends after
    ``timeout`` consecutive rounds in which no message at all was heard.
    """
    seen_critical = False
    quiet = 0
    while True:
        fb = yield LISTEN
        if fb.heard_critical:
            seen_critical = True
            quiet = 0
            continue
        if seen_critical:
            return
        quiet = 0 if fb.is_heard else quiet + 1
        if quiet >= timeout:
            ctx.note("release_timeout", quiet)
            return


def _bernoulli_pow2(rng, e: int) -> bool:
    # exact probability 2**-e from e fair bits
    return e == 0 or rng.getrandbits(e) == 0


def probability_increase(ctx: ProcessContext, cfg: PIConfig) -> Generator[ChannelAction, Feedback, bool]:
    """``cfg.num_phases`` phases of ``cfg.phase_len`` rounds; in phase ``i`` send
    with probability ``2**-i``, otherwise listen.  Returns False as soon as a
    message from another process is heard."""
    rng = ctx.rng
    send = ctx.send(PAYLOAD)
    for phase in range(1, cfg.num_phases + 1):
        e = cfg.transmit_exponent(phase)
        for _ in range(cfg.phase_len):
            if _bernoulli_pow2(rng, e):
                yield send
            else:
                fb = yield LISTEN
                if fb.kind is FeedbackKind.HEARD:
                    return False
    return True


class ProbabilityIncreaseModified(Protocol):
    """Listen ``k`` rounds, then run Probability_Increase for ``k`` rounds;
    resign on hearing any message, otherwise enter the critical section."""

    name = "pi-mod"
    requires_kn = True

    def __init__(self, config: PIConfig):
        self.config = config

    @classmethod
    def for_caps(cls, caps: Capabilities, epsilon, **overrides) -> "ProbabilityIncreaseModified":
        return cls(PIConfig(caps.known_n(), parse_epsilon(epsilon), **overrides))

    def check(self, caps: Capabilities) -> None:
        super().check(caps)
        if caps.n > self.config.n:
            raise ConfigError(f"configured for n={self.config.n} but {caps.n} processes exist")

    def entry(self, ctx: ProcessContext) -> Procedure:
        # written as one flat loop: this is the hot path of the Monte Carlo runs
        cfg = self.config
        k = cfg.k
        exps = [cfg.transmit_exponent(i) for i in range(1, cfg.num_phases + 1)
                for _ in range(cfg.phase_len)]
        rng = ctx.rng
        send = ctx.send(PAYLOAD)
        HEARD = FeedbackKind.HEARD
        while True:
            resigned = False
            for _ in range(k):
                if (yield LISTEN).kind is HEARD:
                    resigned = True
                    break
            if not resigned:
                for e in exps:
                    if rng.getrandbits(e) == 0:
                        yield send
                    elif (yield LISTEN).kind is HEARD:
                        resigned = True
                        break
                if not resigned:
                    return
            yield from resigned_wait(ctx, timeout=2 * k)

    def describe(self) -> dict:
        c = self.config
        return {"name": self.name, "n": c.n, "epsilon": str(c.epsilon), "k": c.k,
                "phase_len": c.phase_len, "num_phases": c.num_phases}


def check_if_single(ctx: ProcessContext, pairs: int) -> Generator[ChannelAction, Feedback, bool]:
    """One fair coin per round pair: heads sends first and listens second,
    tails the reverse.  True iff every listened round was silent."""
    rng = ctx.rng
    send = ctx.send(PAYLOAD)
    alone = True
    for _ in range(pairs):
        if rng.getrandbits(1):
            yield send
            fb = yield LISTEN
        else:
            fb = yield LISTEN
            yield send
        if fb.kind is not FeedbackKind.SILENCE_HEARD:
            alone = False
    return alone


def full_duplex_feedback(outcome: ChannelOutcome, action: ChannelAction) -> Feedback:
    """Reference channel where a transmitter also listens: it hears its own
    message when alone and a collision otherwise (collision detection on)."""
    if action.kind is ActionKind.TRANSMIT:
        if outcome.kind is OutcomeKind.SINGLE:
            return heard(outcome.message)
        return COLLISION_HEARD
    if outcome.kind is OutcomeKind.SINGLE:
        return heard(outcome.message)
    return SILENCE_HEARD if outcome.kind is OutcomeKind.SILENCE else COLLISION_HEARD


def duplex_simulate(ctx: ProcessContext, virtual: Generator) -> Generator[ChannelAction, Feedback, object]:
    """Run a full-duplex procedure on the half-duplex channel, two physical
    rounds per virtual round.

    Round A carries the virtual action.  In round B every listener that heard a
    message in A acknowledges it, so a virtual transmitter learns it was alone
    exactly when B is not silent.  Needs collision detection and at least two
    participants.
    """
    try:
        vact = next(virtual)
    except StopIteration as stop:
        return stop.value
    ack = ctx.send(ACK)
    while True:
        if vact.kind is ActionKind.TRANSMIT:
            yield vact
            fb = yield LISTEN
            if fb.kind is FeedbackKind.HEARD or fb.kind is FeedbackKind.COLLISION_HEARD:
                vfb = heard(vact.message)
            else:
                vfb = COLLISION_HEARD
        else:
            vfb = yield LISTEN
            if vfb.kind is FeedbackKind.HEARD:
                yield ack
            else:
                yield LISTEN
        try:
            vact = virtual.send(vfb)
        except StopIteration as stop:
            return stop.value


def willard_election(ctx: ProcessContext, max_exponent: int = 62) -> Generator[ChannelAction, Feedback, bool]:
    """Full-duplex election by searching the sending-probability exponent.

    Every participant sends with probability ``2**-e``.  A collision means ``e``
    is too small, silence that it is too large.  ``e`` doubles until the first
    silence, then a binary search runs between the last colliding and the
    silent exponent; when the bracket closes without a success the search
    restarts.  Returns True for the unique successful sender.
    """
    rng = ctx.rng
    send = ctx.send(PAYLOAD)
    while True:
        lo, hi, e = 0, None, 1
        while True:
            if hi is None:
                probe = e
            elif hi - lo > 1:
                probe = (lo + hi) // 2
            else:
                break
            sent = _bernoulli_pow2(rng, probe)
            fb = yield (send if sent else LISTEN)
            if fb.kind is FeedbackKind.HEARD:
                return sent
            if fb.kind is FeedbackKind.COLLISION_HEARD:
                lo = probe
                if hi is None:
                    e = min(2 * e, max_exponent)
            else:
                hi = probe
        ctx.note("willard_restart", lo)


class CheckIfSingleWillard(Protocol):
    """Static algorithm: Check_If_Single, then the simulated election.

    Processes that lose resign until the winner's critical section ends and
    then start over together.
    """

    name = "cis-willard"
    requires_cd = True
    # correct only when every participant starts in the same round
    static_only = True
    release_timeout = 4

    def __init__(self, config: CISConfig):
        self.config = config

    def compete(self, ctx: ProcessContext) -> Generator[ChannelAction, Feedback, bool]:
        if (yield from check_if_single(ctx, self.config.pairs)):
            return True
        return (yield from duplex_simulate(ctx, willard_election(ctx)))

    def entry(self, ctx: ProcessContext) -> Procedure:
        while True:
            if (yield from self.compete(ctx)):
                return
            yield from resigned_wait(ctx, timeout=self.release_timeout)

    def describe(self) -> dict:
        return {"name": self.name, "epsilon": str(self.config.epsilon), "pairs": self.config.pairs}


class IdTournament(Protocol):
    """Deterministic static election: bit-by-bit search for the smallest id.

    In the round for bit ``b`` (most significant first), surviving processes
    whose id has ``b`` cleared send; a survivor with ``b`` set that hears
    activity drops out.  ``id_bits`` defaults to ``ceil(log2 n)`` under KN.
    """

    name = "id-tournament"
    requires_cd = True
    static_only = True
    release_timeout = 4

    def __init__(self, id_bits: Optional[int] = None):
        self.id_bits = id_bits

    def bits(self, ctx: ProcessContext) -> int:
        if self.id_bits is not None:
            return max(1, self.id_bits)
        return max(1, ceil_log2(ctx.n))

    def compete(self, ctx: ProcessContext) -> Generator[ChannelAction, Feedback, bool]:
        alive = True
        send = ctx.send(PAYLOAD)
        for b in reversed(range(self.bits(ctx))):
            mine = (ctx.pid >> b) & 1
            if alive and not mine:
                yield send
            else:
                fb = yield LISTEN
                if alive and fb.kind is not FeedbackKind.SILENCE_HEARD:
                    alive = False
        return alive

    def entry(self, ctx: ProcessContext) -> Procedure:
        while True:
            if (yield from self.compete(ctx)):
                return
            yield from resigned_wait(ctx, timeout=self.release_timeout)


def with_busy_signal(ctx: ProcessContext, static: Generator) -> Generator[ChannelAction, Feedback, object]:
    """Interleave a busy transmission before every round of ``static``."""
    try:
        act = next(static)
    except StopIteration as stop:
        return stop.value
    busy = ctx.send(BUSY)
    while True:
        yield busy
        fb = yield act
        try:
            act = static.send(fb)
        except StopIteration as stop:
            return stop.value


class StaticToDynamic(Protocol):
    """Busy-signal reduction for arbitrary start times.

    A process waits until it has heard two consecutive silent rounds, then
    starts the static competition with busy rounds interleaved.  Since a
    competition or a critical section never leaves two silent rounds in a row,
    latecomers keep waiting until the channel is released, and everyone who
    observes the same release starts the next competition in the same round.
    """

    requires_cd = True

    def __init__(self, static: Protocol):
        if not hasattr(static, "compete"):
            raise ConfigError(f"{static.name} has no single-competition procedure")
        self.static = static
        self.name = f"{static.name}-dyn"

    def check(self, caps: Capabilities) -> None:
        super().check(caps)
        self.static.check(caps)

    def entry(self, ctx: ProcessContext) -> Procedure:
        while True:
            quiet = 0
            while quiet < 2:
                fb = yield LISTEN
                quiet = quiet + 1 if fb.kind is FeedbackKind.SILENCE_HEARD else 0
            if (yield from with_busy_signal(ctx, self.static.compete(ctx))):
                return

    def describe(self) -> dict:
        return {"name": self.name, "static": self.static.describe()}


def _need_eps(params: dict) -> Fraction:
    if params.get("epsilon") is None:
        raise ConfigError("this protocol needs --epsilon")
    return parse_epsilon(params["epsilon"])


def _make_pi(caps: Capabilities, params: dict) -> Protocol:
    if not caps.kn:
        raise ConfigError("pi-mod needs the process count: pass --n (KN model)")
    extra = {k: params[k] for k in ("c_phase", "c_phases") if params.get(k) is not None}
    return ProbabilityIncreaseModified(PIConfig(caps.known_n(), _need_eps(params), **extra))


def _make_cis(caps: Capabilities, params: dict) -> Protocol:
    return CheckIfSingleWillard(CISConfig(_need_eps(params)))


def _make_tournament(caps: Capabilities, params: dict) -> Protocol:
    bits = params.get("id_bits")
    if bits is None and not caps.kn:
        raise ConfigError("id-tournament needs kn or an explicit id_bits bound")
    return IdTournament(bits)


PROTOCOLS: dict[str, Callable[[Capabilities, dict], Protocol]] = {
    "pi-mod": _make_pi,
    "cis-willard": _make_cis,
    "cis-willard-dyn": lambda caps, params: StaticToDynamic(_make_cis(caps, params)),
    "id-tournament": _make_tournament,
    "id-tournament-dyn": lambda caps, params: StaticToDynamic(_make_tournament(caps, params)),
}


def make_protocol(name: str, caps: Capabilities, fairness: bool = False, **params) -> Protocol:
    """Build a protocol by name; ``fairness`` wraps it in the no-lockout transform."""
    try:
        factory = PROTOCOLS[name]
    except KeyError:
        raise ConfigError(f"unknown protocol {name!r}; choose from {sorted(PROTOCOLS)}") from None
    proto = factory(caps, params)
    if fairness:
        from .fairness import FairProtocol

        proto = FairProtocol(proto, id_bits=params.get("id_bits"))
    proto.check(caps)
    return proto
