"""Greedy warmstart: repeatedly apply the single augmentation with the
largest coverage increase until no feasible augmentation improves."""

from __future__ import annotations

import numpy as np

from .model import Instance, Persistence, Solution, check_domain, coverage


def _augmentations(inst: Instance, x: np.ndarray):
    """Candidate openings, ordered by (period, facility) for tie-breaking.

    With a persistence-style domain, opening facility i at period t also
    opens it for every later period, mirroring networks where installed
    infrastructure cannot be removed.
    """
    persistent = any(isinstance(c, Persistence) for c in inst.domain.constraints)
    for t in range(inst.periods):
        for i in range(inst.facility_count):
            if x[i, t] == 1:
                continue
            cand = x.copy()
            if persistent:
                cand[i, t:] = 1
            else:
                cand[i, t] = 1
            yield cand


def greedy_warmstart(inst: Instance) -> Solution | None:
    """Feasible solution built by best-gain augmentation; None only when
    even the all-closed solution is outside the domain."""
    x = np.zeros((inst.facility_count, inst.periods))
    if not check_domain(inst, Solution.from_matrix(x)):
        return None
    value = 0.0
    max_rounds = inst.facility_count * inst.periods
    for _ in range(max_rounds):
        best_gain, best_cand = 0.0, None
        for cand in _augmentations(inst, x):
            sol = Solution.from_matrix(cand)
            if not check_domain(inst, sol):
                continue
            gain = coverage(inst, sol) - value
            if gain > best_gain:
                best_gain, best_cand = gain, cand
        if best_cand is None:
            break
        x = best_cand
        value += best_gain
    return Solution.from_matrix(x)
