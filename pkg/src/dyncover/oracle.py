"""Brute-force ground truth: exhaustive search over the domain and over
local-branching neighbourhoods.  Shares nothing with the solver modules
beyond the data model, so it can arbitrate their answers."""

from __future__ import annotations

import numpy as np

from .model import EQ, GE, LE, Instance, Solution, coverage

MAX_BITS = 24
_CHUNK = 1 << 14


def _enumerate_feasible(inst: Instance, extra_mask=None):
    """Yield (values, X) chunks: approximate objective per feasible point and
    the corresponding 0/1 matrices of shape (count, facilities, periods)."""
    n = inst.facility_count * inst.periods
    if n > MAX_BITS:
        raise ValueError(f"enumeration over {n} binaries exceeds the {MAX_BITS} cap")
    I, T = inst.facility_count, inst.periods
    demand = inst.demand_matrix
    cover = inst.cover_tensor
    rows = inst.lowered_rows
    coefs = np.zeros((len(rows), I, T))
    senses, rhs = [], []
    for r, row in enumerate(rows):
        for i, t, c in row.terms:
            coefs[r, i, t] += c
        senses.append(row.sense)
        rhs.append(row.rhs)
    rhs = np.array(rhs)
    total = 1 << n
    for base in range(0, total, _CHUNK):
        count = min(_CHUNK, total - base)
        codes = np.arange(base, base + count, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(n)) & 1
        X = bits.reshape(count, I, T).astype(float)
        feas = np.ones(count, dtype=bool)
        if len(rows):
            lhs = np.einsum("xit,rit->xr", X, coefs)
            for r, sense in enumerate(senses):
                if sense == LE:
                    feas &= lhs[:, r] <= rhs[r] + 1e-9
                elif sense == GE:
                    feas &= lhs[:, r] >= rhs[r] - 1e-9
                else:
                    feas &= np.abs(lhs[:, r] - rhs[r]) <= 1e-9
        if extra_mask is not None:
            feas &= extra_mask(X)
        if not feas.any():
            continue
        Xf = X[feas]
        cnt = np.einsum("xit,jti->xjt", Xf, cover)
        vals = (np.minimum(cnt, 1.0) * demand).sum(axis=(1, 2))
        yield vals, Xf


def _pick_best(inst: Instance, chunks) -> tuple[Solution | None, float]:
    # Keep every point within a small window of the running maximum, then
    # re-evaluate the shortlist exactly; this removes any dependence on the
    # vectorised summation order.  Ties break to the lexicographically
    # smallest flattened solution.
    shortlist: list[tuple[float, np.ndarray]] = []
    best_approx = -np.inf
    for vals, X in chunks:
        hi = float(vals.max())
        if hi > best_approx:
            best_approx = hi
            shortlist = [(v, x) for v, x in shortlist if v >= best_approx - 1e-7]
        keep = np.flatnonzero(vals >= best_approx - 1e-7)
        shortlist.extend((float(vals[k]), X[k]) for k in keep)
    if not shortlist:
        return None, -np.inf
    best_sol, best_val = None, -np.inf
    for _, x in shortlist:
        sol = Solution.from_matrix(x)
        val = coverage(inst, sol)
        if val > best_val or (val == best_val and sol.x < best_sol.x):
            best_sol, best_val = sol, val
    return best_sol, best_val


def enumerate_optimum(inst: Instance) -> tuple[Solution | None, float]:
    """Exact argmax of coverage over the domain; None when it is empty."""
    return _pick_best(inst, _enumerate_feasible(inst))


def enumerate_neighborhood_optimum(
    inst: Instance,
    x_tilde: Solution,
    kappa: int,
    metric: str = "per-period",
) -> tuple[Solution | None, float]:
    """Exact optimum over the distance-`kappa` neighbourhood of x_tilde."""
    if metric not in ("per-period", "hamming"):
        raise ValueError("metric must be per-period or hamming")
    center = x_tilde.matrix

    def in_neighborhood(X):
        diff = np.abs(X - center[None, :, :])
        if metric == "hamming":
            return diff.sum(axis=(1, 2)) <= kappa + 1e-9
        return (diff.sum(axis=1) <= kappa + 1e-9).all(axis=1)

    return _pick_best(inst, _enumerate_feasible(inst, in_neighborhood))
