"""Vectorised engine for one static competition of ``cis-willard``.

When ``m`` processes start together, the run up to the first critical entry
collapses to a handful of binomial draws:

* Check_If_Single lets everybody in iff all coins agree in every pair (then
  all ``m`` enter at once), otherwise nobody, for ``m >= 2``;
* every election round is determined by the number of transmitters, which is
  ``Binomial(m, 2**-probe)``, and all participants follow the same probe
  sequence because they observe the same virtual outcome.

This makes n = 2**16 cheap.  ``tests/test_batch.py`` checks the distribution
against the round-by-round simulator at small ``m``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .protocols import CISConfig

__all__ = ["election_first_gap", "ElectionSample"]


class ElectionSample:
    """First-gap lengths plus how many trials let everybody in through the check."""

    def __init__(self, gaps: np.ndarray, all_passed: np.ndarray, virtual_rounds: np.ndarray):
        self.gaps = gaps
        self.all_passed = all_passed
        self.virtual_rounds = virtual_rounds

    def median(self) -> float:
        return float(np.median(self.gaps))


def election_first_gap(m: int, epsilon: Fraction | str, trials: int, seed: int,
                       max_exponent: int = 62) -> ElectionSample:
    """Rounds from a simultaneous start of ``m`` processes to the first
    critical entry, for ``trials`` independent runs."""
    if m < 1:
        raise ValueError("need at least one participant")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    pairs = CISConfig(Fraction(epsilon)).pairs
    rng = np.random.default_rng(np.random.SeedSequence([seed, m, pairs]))
    cis_rounds = 2 * pairs

    if m == 1:
        ones = np.ones(trials, dtype=bool)
        return ElectionSample(np.full(trials, cis_rounds), ones, np.zeros(trials, dtype=np.int64))

    heads = rng.binomial(m, 0.5, size=(trials, pairs))
    all_passed = np.all((heads == 0) | (heads == m), axis=1)

    lo = np.zeros(trials, dtype=np.int64)
    hi = np.full(trials, -1, dtype=np.int64)  # -1: still doubling
    e = np.ones(trials, dtype=np.int64)
    vrounds = np.zeros(trials, dtype=np.int64)
    live = ~all_passed
    while live.any():
        idx = np.flatnonzero(live)
        l, h, ee = lo[idx], hi[idx], e[idx]
        # a closed bracket restarts the search in the same round
        closed = (h >= 0) & (h - l <= 1)
        l = np.where(closed, 0, l)
        h = np.where(closed, -1, h)
        ee = np.where(closed, 1, ee)
        doubling = h < 0
        probe = np.where(doubling, ee, (l + h) // 2)
        senders = rng.binomial(m, np.ldexp(1.0, -probe))
        vrounds[idx] += 1
        won = senders == 1
        quiet = senders == 0
        busy = senders >= 2
        h = np.where(quiet, probe, h)
        l = np.where(busy, probe, l)
        ee = np.where(busy & doubling, np.minimum(2 * ee, max_exponent), ee)
        lo[idx], hi[idx], e[idx] = l, h, ee
        live[idx[won]] = False
    gaps = cis_rounds + 2 * vrounds
    return ElectionSample(gaps, all_passed, vrounds)
