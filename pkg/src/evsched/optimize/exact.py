"""Exhaustive search over order-preserving assignments.

Every session's candidate placements are the ``C(width, M)`` increasing slot
tuples of its window.  The search walks the product depth-first and skips
subtrees whose bound already exceeds the incumbent.  The bound is valid
because the objective never decreases when load is added (all rates are
non-negative): the partial objective plus each remaining session's cheapest
linear cost under-estimates any completion.

Among optimal schedules the lexicographically smallest (earliest slots,
sessions in input order) is returned.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .problem import EPS, InstanceTooLargeError, Item, SlotProblem


def candidate_slots(item: Item) -> np.ndarray:
    """All increasing slot tuples for ``item``, in lexicographic order."""
    combos = list(combinations(range(item.lo, item.hi + 1), item.m))
    return np.array(combos, dtype=int).reshape(len(combos), item.m)


def candidate_loads(item: Item, slots: np.ndarray, k: int) -> np.ndarray:
    loads = np.zeros((len(slots), k))
    rows = np.repeat(np.arange(len(slots)), item.m)
    loads[rows, slots.ravel()] = np.tile(item.q, len(slots))
    return loads


def _tol(best: float) -> float:
    return EPS * max(1.0, abs(best)) if math.isfinite(best) else 0.0


def solve_exact(problem: SlotProblem, max_candidates: int | None = None):
    """Return ``(slots per item, objective, stats)`` for the optimal schedule."""
    total = problem.n_candidates
    if max_candidates is not None and total > max_candidates:
        raise InstanceTooLargeError(
            f"{total} candidate schedules exceed the exact threshold {max_candidates}; "
            "use heuristic mode"
        )
    items = problem.items
    k = len(problem.fixed)
    cands = [candidate_slots(it) for it in items]
    loads = [candidate_loads(it, c, k) for it, c in zip(items, cands)]
    lin_min = [float((ld @ problem.linear).min()) for ld in loads]
    suffix = np.zeros(len(items) + 1)
    for d in range(len(items) - 1, -1, -1):
        suffix[d] = suffix[d + 1] + lin_min[d]

    # forced[d]: (term, window-in-term slots, guaranteed block) for sessions
    # placed after depth d; an unplaced session with more blocks than window
    # slots outside a term must land its f-th smallest block inside it
    forced: list[list[tuple[int, np.ndarray, float]]] = [[] for _ in range(len(items) + 1)]
    for n, it in enumerate(items):
        for h, term in enumerate(problem.demand):
            inside = np.flatnonzero(term.mask[it.lo:it.hi + 1]) + it.lo
            f = it.m - (it.width - len(inside))
            if f > 0:
                entry = (h, inside, float(np.sort(it.q)[f - 1]))
                for d in range(n):
                    forced[d].append(entry)

    def bound_many(trial: np.ndarray, depth: int) -> np.ndarray:
        total = trial @ problem.linear
        for h, term in enumerate(problem.demand):
            level = np.maximum(term.prev, trial[:, term.mask].max(axis=1))
            for th, inside, qf in forced[depth]:
                if th == h:
                    level = np.maximum(level, trial[:, inside].min(axis=1) + qf)
            total = total + term.rate * level
        bad = np.any(trial > problem.cap + EPS, axis=1)
        return np.where(bad, np.inf, total)

    best = {"obj": math.inf, "path": None}
    nodes = 0

    if not items:
        obj = problem.objective(problem.fixed)
        return [], obj, {"candidates": 1, "nodes": 1}

    def dive(depth: int, ap: np.ndarray, path: tuple[int, ...]):
        nonlocal nodes
        trial = ap[None, :] + loads[depth]
        last = depth == len(items) - 1
        vals = problem.objective_many(trial) if last else None
        bounds = (vals if last else bound_many(trial, depth)) + suffix[depth + 1]
        for c in np.argsort(bounds, kind="stable"):
            b = bounds[c]
            if not math.isfinite(b):
                break
            tol = _tol(best["obj"])
            if b > best["obj"] + tol:
                break
            cand = path + (int(c),)
            if best["path"] is not None and b >= best["obj"] - tol \
                    and cand > best["path"][:depth + 1]:
                continue
            nodes += 1
            if last:
                v = vals[c]
                if v < best["obj"] - tol or best["path"] is None or cand < best["path"]:
                    best["obj"], best["path"] = float(v), cand
            else:
                dive(depth + 1, trial[c], cand)

    dive(0, problem.fixed.copy(), ())
    if best["path"] is None:
        return None, math.inf, {"candidates": total, "nodes": nodes}
    slots = [cands[d][c] for d, c in enumerate(best["path"])]
    return slots, best["obj"], {"candidates": total, "nodes": nodes}
