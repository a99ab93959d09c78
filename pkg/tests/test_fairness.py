
import pytest
from hypothesis import given, strategies as st

from macmutex.adversary import AdversaryStrategy, starvation_strategy
from macmutex.channel import (
    LISTEN,
    NO_FEEDBACK,
    SILENCE_HEARD,
    ActionKind,
    Capabilities,
    Label,
    Message,
    heard,
)
from macmutex.fairness import FairProtocol, exit_guard, select_oracle, selection, slowdown3
from macmutex.protocol import ConfigError
from macmutex.protocols import check_if_single, make_protocol
from macmutex.simulator import UNFULFILLED, exclusion_report, lockout_report, run
from oracles import context, drive, selection_oracle


def _recording_base(actions, seen):
    for a in actions:
        seen.append((yield a))


def test_slowdown_listen_round():
    ctx = context(3, 4)
    seen = []
    gen = slowdown3(ctx, _recording_base([LISTEN], seen))
    out = [next(gen), gen.send(NO_FEEDBACK), gen.send(SILENCE_HEARD)]
    assert out[0].message == Message(3, Label.PROTOCOL, 1)
    assert out[1] is LISTEN and out[2] is LISTEN
    with pytest.raises(StopIteration):
        gen.send(heard(Message(1)))
    assert seen == [heard(Message(1))]


def test_slowdown_triples_length():
    ctx = context(0, 2)
    for length in range(1, 6):
        gen = slowdown3(ctx, _recording_base([LISTEN] * length, []))
        next(gen)
        count = 1
        try:
            while True:
                gen.send(SILENCE_HEARD)
                count += 1
        except StopIteration:
            pass
        assert count == 3 * length


def test_slowdown_projection_matches_base():
    """Same coins: the slowed run's every third round replays the base run."""
    m, pairs = 3, 3
    for seed in range(30):
        base = {p: check_if_single(context(p, m, seed=(seed, 0, p)), pairs) for p in range(m)}
        r1, log1 = drive(base, m)
        slow = {}
        for p in range(m):
            ctx = context(p, m, seed=(seed, 0, p))
            slow[p] = slowdown3(ctx, check_if_single(ctx, pairs))
        r2, log2 = drive(slow, m)
        assert r1 == r2
        assert len(log2) == 3 * len(log1)
        for t, row in enumerate(log1):
            assert row == log2[3 * t + 2]


def _run_selection(losses: dict[int, int], guard: int, id_bits: int):
    n = max([guard, *losses]) + 1
    gens = {guard: selection(context(guard, n), True, 0, id_bits)}
    for p, loss in losses.items():
        gens[p] = selection(context(p, n), False, loss, id_bits)
    return drive(gens, n)


def test_selection_worked_example():
    res, log = _run_selection({5: 0, 2: 3, 7: 3}, guard=0, id_bits=3)
    assert res == {0: False, 5: False, 2: True, 7: False}
    # phase 1: probes 1, 2 busy, 4 silent; phase 2: probe 3; phase 3: three bits
    assert len(log) == 3 * (3 + 1 + 3)


def test_selection_single_competitor_with_zero_loss():
    res, log = _run_selection({4: 0}, guard=1, id_bits=3)
    assert res[4] is True
    # block 0 of phase 1 is already silent
    assert log[2][1][1] is SILENCE_HEARD


def test_selection_block_structure():
    res, log = _run_selection({1: 2, 3: 2, 6: 1}, guard=0, id_bits=3)
    for b in range(len(log) // 3):
        for k, payload in ((0, 1), (1, 0)):
            row = log[3 * b + k]
            senders = [p for p, (a, _) in row.items() if a.kind is ActionKind.TRANSMIT]
            assert senders == [0]
            assert row[0][0].message.payload == payload


@given(st.dictionaries(st.integers(1, 7), st.integers(0, 9), min_size=1, max_size=7))
def test_selection_matches_oracle(losses):
    res, _ = _run_selection(losses, guard=0, id_bits=3)
    winners = [p for p, won in res.items() if won]
    assert winners == [selection_oracle(losses)]
    assert select_oracle(losses) == selection_oracle(losses)


def test_exit_guard_alone_takes_two_rounds():
    ctx = context(0, 4)
    gen = exit_guard(ctx, 2)
    assert next(gen).message.payload == 0
    assert gen.send(NO_FEEDBACK) is LISTEN
    with pytest.raises(StopIteration):
        gen.send(SILENCE_HEARD)


def test_exit_guard_with_waiter_runs_selection():
    n = 4

    def waiter(ctx):
        fb = yield LISTEN  # hears the guard's 0
        assert fb.message.payload == 0
        yield ctx.send(0)
        return (yield from selection(ctx, False, 0, 2))

    gens = {0: exit_guard(context(0, n), 2), 3: waiter(context(3, n))}
    res, log = drive(gens, n)
    assert res[3] is True
    assert len(log) == 2 + 3 * (1 + 2)


def _fair(n, base="id-tournament-dyn"):
    caps = Capabilities(n=n, cd=True, kn=True)
    return make_protocol(base, caps, fairness=True, epsilon="1/16"), caps


def _crit_starts(tr):
    return [(t, p) for t, p, a, b, _ in tr.events if b == "CRITICAL"]


def test_arrival_during_critical_joins_after_guard():
    proto, caps = _fair(2)
    strat = AdversaryStrategy((((0, 12),), ((20, 2),)))
    tr = run(proto, strat, caps, seed=0)
    (t0, p0), (t1, p1) = _crit_starts(tr)
    assert (p0, p1) == (0, 1)
    exit0 = next(t for t, p, a, b, _ in tr.events if p == 0 and b == "EXIT")
    assert 20 < exit0
    # first transmission of process 1 answers the guard's 0
    tx = [t for t in range(tr.rounds) if tr.actions[t][1].kind is ActionKind.TRANSMIT and tr.sections[t][1] == 1]
    assert tx[0] == exit0 + 1
    assert tr.outcomes[exit0].message.payload == 0


def test_loss_counter_literal_bound_counterexample():
    """X (id 3) holds the channel; p (id 2) arrives alone; q1, q2 (ids 0, 1)
    arrive later.  p loses a 0-0 tie to q1 and a 1-1 tie to q2."""
    proto, caps = _fair(4)
    X, p, q1, q2 = 3, 2, 0, 1
    rows = [None] * 4
    rows[X] = ((0, 60),)
    rows[p] = ((35, 2),)
    rows[q1] = ((45, 2),)
    rows[q2] = ((45, 2),)
    tr = run(proto, AdversaryStrategy(tuple(rows)), caps, seed=0)
    order = [q for _, q in _crit_starts(tr)]
    assert order == [X, q1, q2, p]
    p_entry = next(t for t, q, a, b, _ in tr.events if q == p and b == "ENTRY")
    in_entry = sum(tr.sections[p_entry][q] == 1 for q in range(4))
    losses = [v for t, q, k, v in tr.notes if q == p and k == "loss"]
    assert in_entry == 1 and max(losses) == 2 > in_entry


def _overtakers(tr):
    """For every entry run, the processes that entered critical meanwhile."""
    crit = _crit_starts(tr)
    out = []
    for p, runs in lockout_report(tr).items():
        for start, end in runs:
            stop = tr.rounds if end is UNFULFILLED else end
            out.append((p, [q for t, q in crit if start < t < stop and q != p]))
    return out


@pytest.mark.parametrize("base", ["id-tournament-dyn", "cis-willard-dyn"])
def test_no_process_overtakes_twice(base):
    proto, caps = _fair(5, base)
    strat = AdversaryStrategy.from_flat(
        [[0, 2] * 4, [1, 1] * 4, [3, 3] * 3, [0, 1] * 5, [7, 2] * 2], name="mixed")
    clean = 0
    for seed in range(20):
        tr = run(proto, strat, caps, seed=seed, horizon=20_000)
        assert not tr.truncated
        if exclusion_report(tr).violated:
            # the overtaking bound assumes the base never lets two in at once
            continue
        clean += 1
        for p, over in _overtakers(tr):
            assert len(over) == len(set(over)), (p, over)
            assert len(over) <= caps.n - 1
        for t, q, key, val in tr.notes:
            if key == "loss":
                assert val <= caps.n - 1
    assert clean >= 10


def test_fairness_fixes_deterministic_lockout():
    for fair in (False, True):
        caps = Capabilities(n=4, cd=True, kn=True)
        proto = make_protocol("id-tournament-dyn", caps, fairness=fair)
        tr = run(proto, starvation_strategy(4), caps, seed=0, horizon=600)
        victim = lockout_report(tr)[3]
        assert (victim[0][1] is UNFULFILLED) is (not fair)


def test_exactly_one_selection_winner_per_guard():
    proto, caps = _fair(6, "cis-willard-dyn")
    strat = AdversaryStrategy.from_flat([[0, 2] * 3] * 6, name="crowd")
    for seed in range(10):
        tr = run(proto, strat, caps, seed=seed)
        guards = [t for t, q, k, v in tr.notes if k == "guard"]
        wins = [v for t, q, k, v in tr.notes if k == "selection_win"]
        # a guard notes the round before the selection starts
        assert sorted(wins) == sorted(guards)


def test_fair_check_errors():
    with pytest.raises(ConfigError):
        make_protocol("id-tournament", Capabilities(n=4, cd=True), fairness=True, id_bits=None)
    base = make_protocol("id-tournament", Capabilities(n=4, cd=True), id_bits=2)
    with pytest.raises(ConfigError):
        FairProtocol(base, id_bits=1).check(Capabilities(n=4, cd=True))
    with pytest.raises(ConfigError):
        FairProtocol(base).check(Capabilities(n=4, cd=True))
