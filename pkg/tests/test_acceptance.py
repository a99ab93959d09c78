"""Acceptance criteria C1-C10.

Each test records a one-line ``detail`` that conftest prints in the
"acceptance criteria" section of the terminal summary.  Frozen constants:

* ``C_MAKESPAN``: pi-mod makespan constant for C4, fixed before the final run
  from a 300-trial pilot (largest observed ratio 8).
* ``C_FAIR``: no-lockout makespan constant for C9 (pilot ratio about 1.45,
  about 1.7 once the base is measured under the same horizon).
"""

from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from macmutex.adversary import (
    ARRIVAL_PATTERNS,
    AdversaryStrategy,
    arrival_strategy,
    check_fixed_point,
    lowerbound_construct,
    random_schedules,
    replay_violation,
    starvation_strategy,
)
from macmutex.batch import election_first_gap
from macmutex.channel import LISTEN, Capabilities, FeedbackKind, Message, Label, transmit
from macmutex.harness import ExperimentConfig, run_trials, summarize_trace, wilson_interval
from macmutex.protocol import ViolationKind, ceil_log2, validate_trace
from macmutex.protocols import PROTOCOLS, CISConfig, check_if_single, duplex_simulate, make_protocol
from macmutex.simulator import UNFULFILLED, lockout_report, makespan, run
from oracles import ScriptedBits, context, drive, naive_full_duplex

C_MAKESPAN = 16
C_FAIR = 2.0
LEGALITY = {ViolationKind.REMAINDER_TRANSMISSION, ViolationKind.MISSING_CRITICAL_MESSAGE,
            ViolationKind.ILLEGAL_TRANSITION}


# --------------------------------------------------------------------------- C1, C2

def _cis_hits(k: int, pairs: int) -> tuple[int, int]:
    """(coin assignments where somebody enters, total) over all k*pairs coins."""
    hits = total = 0
    for bits in itertools.product((0, 1), repeat=k * pairs):
        gens = {p: check_if_single(context(p, k, rng=ScriptedBits(bits[p * pairs:(p + 1) * pairs])), pairs)
                for p in range(k)}
        res, _ = drive(gens, k)
        hits += any(res.values())
        total += 1
    return hits, total


def test_c01_check_if_single_exactness(record_property):
    hits, total = _cis_hits(2, 1)
    exact = Fraction(hits, total)
    assert total == 4 and exact == Fraction(1, 2)
    worst = 0.0
    for k, pairs in [(2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (3, 3), (4, 1), (4, 2), (4, 3)]:
        hits, total = _cis_hits(k, pairs)
        p = Fraction(hits, total)
        assert p == Fraction(2, 2 ** k) ** pairs <= Fraction(1, 2 ** pairs)
        worst = max(worst, float(p * 2 ** pairs))
    # beyond exhaustive reach: Monte Carlo with real coins, two participants
    mc = []
    for pairs in (5, 6, 7):
        trials = 20_000
        rng = random.Random(pairs)
        hits = 0
        for _ in range(trials):
            gens = {p: check_if_single(context(p, 2, rng=random.Random(rng.getrandbits(64))), pairs)
                    for p in range(2)}
            res, _ = drive(gens, 2)
            hits += any(res.values())
        bound = 0.5 ** pairs
        rate = hits / trials
        assert rate <= bound + 3 * math.sqrt(bound * (1 - bound) / trials)
        mc.append(f"p={pairs}:{rate:.4f}")
    record_property("detail", f"k=2,p=1 exact {exact}; exhaustive k<=4 ratio to 2^-p max {worst:.3f}; "
                              f"MC {' '.join(mc)}")


def test_c02_lone_participant_always_enters(record_property):
    n = 4
    caps = Capabilities(n=n, cd=True, kn=True)
    proto = make_protocol("cis-willard", caps, epsilon="1/16")
    check_len = 2 * CISConfig("1/16").pairs
    entered = 0
    trials = 10_000
    for i in range(trials):
        pid = i % n
        tr = run(proto, AdversaryStrategy.static(n, participants=[pid]), caps, seed=17, trial=i)
        lock = lockout_report(tr)[pid]
        entered += lock == [(0, check_len)]
    assert entered == trials
    record_property("detail", f"{entered}/{trials} entered right after the {check_len}-round check")


# --------------------------------------------------------------------------- C3, C4

PI_N = (4, 8, 16)
PI_EPS = ("1/8", "1/16")
# weighted toward small n; per (eps, pattern) the three cells sum to 8400,
# so the grid has 12 * 8400 = 100800 trials
PI_TRIALS = {4: 4500, 8: 2500, 16: 1400}


@pytest.fixture(scope="module")
def pi_grid():
    out = {}
    for eps in PI_EPS:
        for n in PI_N:
            for pat in ARRIVAL_PATTERNS:
                cfg = ExperimentConfig(protocol="pi-mod", n=n, epsilon=eps, trials=PI_TRIALS[n],
                                       seed=2024, pattern=pat)
                out[n, eps, pat] = run_trials(cfg, n, pat)
    return out


@pytest.mark.slow
def test_c03_epsilon_exclusion(pi_grid, record_property):
    total = sum(len(v) for v in pi_grid.values())
    assert total >= 100_000
    worst = None
    for (n, eps, pat), res in pi_grid.items():
        visits = sum(r.visits for r in res)
        bad = sum(r.violated for r in res)
        lo, hi = wilson_interval(bad, visits)
        rate = bad / visits
        limit = float(Fraction(eps)) + 3 * (hi - lo) / 2
        assert rate <= limit, (n, eps, pat, rate, limit)
        if worst is None or rate / float(Fraction(eps)) > worst[0]:
            worst = (rate / float(Fraction(eps)), n, eps, pat, rate)
    _, n, eps, pat, rate = worst
    record_property("detail", f"{total} trials; worst cell n={n} eps={eps} {pat}: overlap rate "
                              f"{rate:.4f} vs eps {float(Fraction(eps)):.4f}")


@pytest.mark.slow
def test_c04_makespan_scaling(pi_grid, record_property):
    worst_ratio = 0.0
    means = {}
    for (n, eps, pat), res in pi_grid.items():
        gaps = [r.max_gap for r in res if r.admissible]
        unit = ceil_log2(n) * ceil_log2(1 / Fraction(eps))
        worst_ratio = max(worst_ratio, max(gaps) / unit)
        means.setdefault((n, eps), []).append(np.mean(gaps))
    assert worst_ratio <= C_MAKESPAN
    growth = []
    for eps in PI_EPS:
        ratio = np.mean(means[16, eps]) / np.mean(means[8, eps])
        assert ratio <= 1.6, (eps, ratio)
        growth.append(f"eps={eps}: {ratio:.2f}x")
    record_property("detail", f"max makespan / (log n log 1/eps) = {worst_ratio:.2f} <= C={C_MAKESPAN}; "
                              f"mean 8->16 growth {', '.join(growth)}")


# --------------------------------------------------------------------------- C5

# A virtual protocol is a small automaton: in state s with coin c it transmits
# iff ACT[s][c]; after the round it moves to NEXT[s][feedback class].
_CLASSES = 4  # own message heard, collision, silence, other message heard


def _fb_class(fb, pid):
    if fb.kind is FeedbackKind.HEARD:
        return 0 if fb.message.sender == pid else 3
    return 1 if fb.kind is FeedbackKind.COLLISION_HEARD else 2


def _automata(count, seed=5):
    rng = random.Random(seed)
    out = [((1, 1),), ((0, 1),), ((0, 0), (1, 1))]  # always send, coin, state-dependent
    tables = []
    for act in out:
        s = len(act)
        tables.append((act, tuple(tuple(rng.randrange(s) for _ in range(_CLASSES)) for _ in range(s))))
    for _ in range(count):
        s = 3
        act = tuple((rng.randrange(2), rng.randrange(2)) for _ in range(s))
        nxt = tuple(tuple(rng.randrange(s) for _ in range(_CLASSES)) for _ in range(s))
        tables.append((act, nxt))
    return tables


def _vaction(pid, bit):
    return transmit(Message(pid, Label.PROTOCOL, 1)) if bit else LISTEN


def _one_round(act):
    fb = yield act
    return fb


def _frame_mismatches(n, joint, coins, auto):
    act, nxt = auto
    vacts = [_vaction(p, act[joint[p]][coins[p]]) for p in range(n)]
    gens = {p: duplex_simulate(context(p, n), _one_round(vacts[p])) for p in range(n)}
    got, log = drive(gens, n, cd=True)
    assert len(log) == 2
    want = [naive_full_duplex(vacts, p) for p in range(n)]
    bad = sum(got[p] != want[p] for p in range(n))
    after = tuple(nxt[joint[p]][_fb_class(want[p], p)] for p in range(n))
    return bad, after


def _explore(n, length, auto):
    """Every reachable (joint state, coin vector) up to ``length`` frames.

    A frame's outcome depends only on the joint automaton state and that
    round's coins, so this covers all 2**(n*length) coin sequences."""
    frontier = {tuple(0 for _ in range(n))}
    checked = bad = 0
    for _ in range(length):
        nxt = set()
        for joint in frontier:
            for coins in itertools.product((0, 1), repeat=n):
                b, after = _frame_mismatches(n, joint, coins, auto)
                bad += b
                checked += 1
                nxt.add(after)
        frontier = nxt
    return checked, bad


def _virtual_proc(ctx, auto, length, log):
    act, nxt = auto
    s = 0
    for _ in range(length):
        fb = yield _vaction(ctx.pid, act[s][ctx.rng.getrandbits(1)])
        log.append(fb)
        s = nxt[s][_fb_class(fb, ctx.pid)]


def _reference_run(n, length, auto, bits):
    logs = {p: [] for p in range(n)}
    gens = {p: _virtual_proc(context(p, n, rng=ScriptedBits(bits[p])), auto, length, logs[p]) for p in range(n)}
    acts = [next(gens[p]) for p in range(n)]
    for _ in range(length):
        fb = [naive_full_duplex(acts, p) for p in range(n)]
        for p in range(n):
            try:
                acts[p] = gens[p].send(fb[p])
            except StopIteration:
                pass
    return logs


def _paths(n, length, auto):
    """Path-by-path comparison of complete multi-frame runs."""
    bad = 0
    count = 0
    for flat in itertools.product((0, 1), repeat=n * length):
        bits = [flat[p * length:(p + 1) * length] for p in range(n)]
        want = _reference_run(n, length, auto, bits)
        logs = {p: [] for p in range(n)}
        gens = {p: duplex_simulate(context(p, n, rng=ScriptedBits(bits[p])),
                                   _virtual_proc(context(p, n, rng=ScriptedBits(bits[p])), auto, length, logs[p]))
                for p in range(n)}
        drive(gens, n, cd=True)
        bad += sum(logs[p] != want[p] for p in range(n))
        count += 1
    return count, bad


def test_c05_duplex_equivalence(record_property):
    autos = _automata(6)
    frames = bad = 0
    for auto in autos:
        for n in (2, 3, 4):
            c, b = _explore(n, 6, auto)
            frames += c
            bad += b
    paths = 0
    for auto in autos[:3]:
        for n, length in ((2, 6), (3, 4), (4, 3)):
            c, b = _paths(n, length, auto)
            paths += c
            bad += b
    assert bad == 0
    # the check has teeth: a lone transmitter gets no ack and is told "collision"
    assert _explore(1, 1, autos[0])[1] > 0
    record_property("detail", f"{len(autos)} virtual automata, n=2..4, length 6: {frames} frame "
                              f"checks + {paths} whole paths, {bad} mismatches")


# --------------------------------------------------------------------------- C6

@pytest.mark.slow
def test_c06_static_to_dynamic(record_property):
    trials = 10_000
    ns = (1, 2, 3, 4, 8)
    bad = compared = tight = 0
    for i in range(trials):
        n = ns[i % len(ns)]
        base = "cis-willard" if i % 2 else "id-tournament"
        caps = Capabilities(n=n, cd=True, kn=True)
        st = make_protocol(base, caps, epsilon="1/16")
        dy = make_protocol(base + "-dyn", caps, epsilon="1/16")
        strat = AdversaryStrategy.static(n)
        a = makespan(run(st, strat, caps, seed=6, trial=i))
        b = makespan(run(dy, strat, caps, seed=6, trial=i))
        if not (a.admissible and b.admissible):
            continue  # makespan ignores non-admissible executions
        compared += 1
        bad += b.max_gap > 2 + 2 * a.max_gap
        tight += b.max_gap == 2 + 2 * a.max_gap
    assert bad == 0 and compared >= 9_000
    record_property("detail", f"{compared} admissible pairs of {trials}, {bad} over 2+2T, {tight} exactly 2+2T")


# --------------------------------------------------------------------------- C7

def test_c07_election_scaling(record_property):
    small = election_first_gap(16, "1/16", 4001, seed=70).median()
    large = election_first_gap(65536, "1/16", 4001, seed=71).median()
    assert large < 2 * small
    record_property("detail", f"median first gap n=16: {small:g}, n=65536: {large:g} "
                              f"(ratio {large / small:.2f} < 2)")


# --------------------------------------------------------------------------- C8

def test_c08_lower_bound_construction(record_property):
    failures = 0
    sizes = []
    for n in (4, 6, 8, 10, 12, 16):
        rng = random.Random(800 + n)
        for _ in range(1000):
            scheds = random_schedules(n, rng)
            assert all(len(s) < n / 2 for s in scheds)
            res = lowerbound_construct(scheds, n)
            ok = all(check_fixed_point(res, scheds, n).values())
            if ok:
                trace = replay_violation(scheds, res.p_star, n)
                ok = any(v.kind is ViolationKind.EXCLUSION for v in validate_trace(trace))
            failures += not ok
            sizes.append(len(res.p_star))
    assert failures == 0
    record_property("detail", f"6000 schedule sets, {failures} failures, |P*| from {min(sizes)} to {max(sizes)}")


# --------------------------------------------------------------------------- C9

def _starvation_runs(proto, n, trials, horizon, seed):
    caps = Capabilities(n=n, cd=True, kn=True)
    strat = starvation_strategy(n)
    for i in range(trials):
        yield run(proto, strat, caps, seed=seed, trial=i, horizon=horizon)


@pytest.mark.slow
def test_c09_no_lockout(record_property):
    horizon = 800
    parts = []
    for n, trials in ((4, 3334), (8, 3333), (16, 3333)):
        caps = Capabilities(n=n, cd=True, kn=True)
        base = make_protocol("cis-willard-dyn", caps, epsilon="1/16")
        fair = make_protocol("cis-willard-dyn", caps, epsilon="1/16", fairness=True)
        t_base = np.mean([summarize_trace(tr, 0).max_gap
                          for tr in _starvation_runs(base, n, 300, horizon, seed=90)])
        scale = t_base + math.log2(n)
        window = 5 * scale
        unfulfilled = 0
        gaps = []
        for tr in _starvation_runs(fair, n, trials, horizon, seed=91):
            for runs in lockout_report(tr).values():
                unfulfilled += sum(c is UNFULFILLED and s <= horizon - window for s, c in runs)
            res = summarize_trace(tr, 0)
            if res.admissible:
                gaps.append(res.max_gap)
        wrapped = float(np.mean(gaps))
        assert unfulfilled == 0, (n, unfulfilled)
        assert wrapped <= C_FAIR * scale, (n, wrapped, scale)
        parts.append(f"n={n}: T_base={t_base:.1f} wrapped={wrapped:.1f} ({wrapped / scale:.2f}x)")
    record_property("detail", f"0 UNFULFILLED in 10000 trials; C'={C_FAIR}; " + "; ".join(parts))


# --------------------------------------------------------------------------- C10

@pytest.mark.slow
def test_c10_trace_validity(record_property):
    n = 5
    caps = Capabilities(n=n, cd=True, kn=True)
    protos = []
    for name in sorted(PROTOCOLS):
        protos.append(make_protocol(name, caps, epsilon="1/8"))
        protos.append(make_protocol(name, caps, epsilon="1/8", fairness=True))
    patterns = sorted(ARRIVAL_PATTERNS) + ["starvation"]
    runs = bad = 0
    for proto in protos:
        for pat in patterns:
            for seed in range(100):
                rng = random.Random(seed)
                strat = starvation_strategy(n) if pat == "starvation" else arrival_strategy(pat, n, 12, rng)
                # static-only protocols may stall under staggered arrivals;
                # legality must hold regardless, so they run to a short horizon
                tr = run(proto, strat, caps, seed=seed, horizon=1500)
                bad += sum(v.kind in LEGALITY for v in validate_trace(tr))
                runs += 1
    assert bad == 0
    record_property("detail", f"{len(protos)} protocols x {len(patterns)} adversaries x 100 seeds = "
                              f"{runs} traces, {bad} legality violations")
