"""Gap-certified local search for slot-assignment problems.

The search re-places one session at a time against the load of all the
others.  A session's best placement under separable slot costs is found
exactly by dynamic programming over (block, slot) states.  The max-type
demand terms are not separable, so each block is priced at the marginal
demand rate for every kW it pushes a period above the level already set by
the other sessions.  That over-prices a session whose blocks raise the same
period twice, which is why every candidate is re-scored with the true
objective before it is accepted.

Moves, in order of cost:

* ``descent``: single-session re-placement until no session improves;
* ``squeeze``: pick a demand period, forbid load above a lower cap, re-place
  every session touching the capped slots;
* ``pairs``: joint exhaustive re-placement of two sessions, only for pairs
  whose joint candidate count is small.

The search stops once the relative gap to the lower bound is within the
configured tolerance after a full descent, when no move improves, or when
the time limit is hit.
"""

from __future__ import annotations

import logging
import math
import time
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .exact import candidate_loads, candidate_slots
from .problem import EPS, Item, SlotProblem, relative_gap

log = logging.getLogger(__name__)

LEVEL_WEIGHT = 1e-7
PAIR_LIMIT = 20_000


def dp_place(cost: np.ndarray) -> np.ndarray | None:
    """Cheapest increasing assignment of M blocks to W slots.

    ``cost[j, k]`` is the price of block ``j`` at relative slot ``k``.
    Returns relative slots, earliest among ties, or ``None`` if every
    assignment has infinite cost.
    """
    m, w = cost.shape
    if m > w:
        return None
    dp = np.empty((m, w))
    dp[0] = cost[0]
    for j in range(1, m):
        pm = np.minimum.accumulate(dp[j - 1])
        dp[j, 0] = np.inf
        dp[j, 1:] = cost[j, 1:] + pm[:-1]
    out = np.empty(m, dtype=int)
    k = int(np.argmin(dp[m - 1]))
    if not math.isfinite(dp[m - 1, k]):
        return None
    out[m - 1] = k
    for j in range(m - 2, -1, -1):
        k = int(np.argmin(dp[j, :out[j + 1]]))
        out[j] = k
    return out


def placement_costs(problem: SlotProblem, item: Item, resid: np.ndarray,
                    cap: np.ndarray | None = None, level: float = LEVEL_WEIGHT) -> np.ndarray:
    """Separable price of each block at each window slot given the other load."""
    win = slice(item.lo, item.hi + 1)
    r = resid[win]
    q = item.q[:, None]
    after = r[None, :] + q
    cost = q * problem.linear[win][None, :]
    for d in problem.demand:
        mask = d.mask[win]
        if not mask.any():
            continue
        current = max(d.prev, float(resid[d.mask].max()))
        over = np.maximum(0.0, after - current)
        cost = cost + d.rate * np.where(mask[None, :], over, 0.0)
        if level:
            cost = cost + level * d.rate * np.where(mask[None, :], 2 * r[None, :] * q + q * q, 0.0)
    if level and not problem.demand:
        cost = cost + level * (2 * r[None, :] * q + q * q)
    limit = problem.cap[win] if cap is None else np.minimum(problem.cap[win], cap[win])
    cost = np.where(after > limit[None, :] + EPS, np.inf, cost)
    return cost


class _Search:
    def __init__(self, problem: SlotProblem, slots, deadline: float | None):
        self.p = problem
        self.slots = [np.array(s, dtype=int) for s in slots]
        self.ap = problem.load(self.slots)
        self.obj = problem.objective(self.ap)
        self.sec = problem.secondary(self.ap)
        self.deadline = deadline
        self.moves = {"descent": 0, "squeeze": 0, "pairs": 0}

    def expired(self) -> bool:
        return self.deadline is not None and time.monotonic() > self.deadline

    def _better(self, obj: float, sec: float) -> bool:
        tol = EPS * max(1.0, abs(self.obj)) if math.isfinite(self.obj) else 0.0
        if obj < self.obj - tol:
            return True
        return obj <= self.obj + tol and sec < self.sec - EPS * max(1.0, abs(self.sec))

    def _accept(self, ap, obj, sec, changes, kind):
        for i, s in changes.items():
            self.slots[i] = s
        self.ap, self.obj, self.sec = ap, obj, sec
        self.moves[kind] += 1

    def _remove(self, ap, i):
        out = ap.copy()
        np.subtract.at(out, self.slots[i], self.p.items[i].q)
        return out

    def _place(self, ap, i, cap=None):
        it = self.p.items[i]
        rel = dp_place(placement_costs(self.p, it, ap, cap))
        if rel is None:
            return None
        return rel + it.lo

    def descent(self) -> bool:
        improved_any = False
        while True:
            improved = False
            for i, it in enumerate(self.p.items):
                if self.expired():
                    return improved_any
                resid = self._remove(self.ap, i)
                new = self._place(resid, i)
                if new is None or np.array_equal(new, self.slots[i]):
                    continue
                ap = resid.copy()
                np.add.at(ap, new, it.q)
                obj = self.p.objective(ap)
                sec = self.p.secondary(ap)
                if self._better(obj, sec):
                    self._accept(ap, obj, sec, {i: new}, "descent")
                    improved = improved_any = True
            if not improved:
                return improved_any

    def _try_cap(self, term, cap_value) -> bool:
        mask = term.mask
        hot = mask & (self.ap > cap_value + EPS)
        touching = [i for i, s in enumerate(self.slots) if hot[s].any()]
        if not touching:
            return False
        cap = np.full(len(self.ap), np.inf)
        cap[mask] = cap_value
        ap = self.ap.copy()
        for i in touching:
            np.subtract.at(ap, self.slots[i], self.p.items[i].q)
        if np.any(ap[mask] > cap_value + EPS):
            return False
        changes = {}
        for i in touching:
            new = self._place(ap, i, cap)
            if new is None:
                return False
            np.add.at(ap, new, self.p.items[i].q)
            changes[i] = new
        obj = self.p.objective(ap)
        sec = self.p.secondary(ap)
        if self._better(obj, sec):
            self._accept(ap, obj, sec, changes, "squeeze")
            return True
        return False

    def squeeze(self) -> bool:
        improved_any = False
        for term in self.p.demand:
            if term.rate <= 0 or not self.p.items:
                continue
            qmin = min(float(it.q.min()) for it in self.p.items)
            step = qmin
            while step >= qmin / 2 and not self.expired():
                peak = float(self.ap[term.mask].max())
                if peak <= term.prev + EPS:
                    break
                target = max(term.prev, peak - step)
                if self._try_cap(term, target):
                    improved_any = True
                    self.descent()
                    step *= 2
                else:
                    step /= 2
        return improved_any

    def pairs(self, limit: int = PAIR_LIMIT) -> bool:
        items = self.p.items
        sizes = [it.n_candidates for it in items]
        improved_any = False
        for a, b in combinations(range(len(items)), 2):
            if sizes[a] * sizes[b] > limit or self.expired():
                continue
            resid = self._remove(self._remove(self.ap, a), b)
            ca, cb = candidate_slots(items[a]), candidate_slots(items[b])
            la = candidate_loads(items[a], ca, len(resid))
            lb = candidate_loads(items[b], cb, len(resid))
            stack = (resid[None, None, :] + la[:, None, :] + lb[None, :, :]).reshape(-1, len(resid))
            vals = self.p.objective_many(stack)
            best = int(np.argmin(vals))
            if not math.isfinite(vals[best]):
                continue
            ap = stack[best]
            obj = float(self.p.objective(ap))
            sec = self.p.secondary(ap)
            if self._better(obj, sec):
                ia, ib = divmod(best, len(cb))
                self._accept(ap.copy(), obj, sec, {a: ca[ia], b: cb[ib]}, "pairs")
                improved_any = True
        return improved_any


def _forced_floor(problem: SlotProblem, term) -> float:
    """Integrality floor on a period's peak.

    A session with ``f`` more blocks than window slots outside the period puts
    at least ``f`` blocks inside it, so some slot of the period carries at
    least the ``f``-th smallest block (plus fixed load, which only raises it).
    """
    floor = float(problem.fixed[term.mask].max()) if term.mask.any() else 0.0
    for it in problem.items:
        window = np.zeros(len(problem.fixed), dtype=bool)
        window[it.lo:it.hi + 1] = True
        outside = int((window & ~term.mask).sum())
        forced = it.m - outside
        if forced > 0:
            floor = max(floor, float(np.sort(it.q)[forced - 1]))
    return floor


def _linear_min(problem: SlotProblem, item: Item) -> float:
    win = slice(item.lo, item.hi + 1)
    cost = item.q[:, None] * problem.linear[win][None, :]
    rel = dp_place(cost)
    return float(cost[np.arange(item.m), rel].sum())


def separable_bound(problem: SlotProblem) -> float:
    """Each session at its cheapest linear placement; demand at max(prior, floor)."""
    total = float(problem.fixed @ problem.linear)
    total += sum(_linear_min(problem, it) for it in problem.items)
    for d in problem.demand:
        total += d.rate * max(d.prev, _forced_floor(problem, d))
    return total


def _slot_block_cap(item: Item) -> np.ndarray:
    # largest block that can legally sit in each window slot
    w, m = item.width, item.m
    out = np.zeros(w)
    for j in range(m):
        lo, hi = j, w - m + j
        out[lo:hi + 1] = np.maximum(out[lo:hi + 1], item.q[j])
    return out


def lp_bound(problem: SlotProblem) -> float | None:
    """Fluid relaxation: energy spread freely over each window, per-slot power capped.

    Returns ``None`` if the LP cannot be solved.
    """
    items = problem.items
    k = len(problem.fixed)
    if not items:
        return None
    offsets = np.cumsum([0] + [it.width for it in items])
    ny = int(offsets[-1])
    nd = len(problem.demand)
    c = np.zeros(ny + nd)
    ub = np.empty(ny)
    for n, it in enumerate(items):
        c[offsets[n]:offsets[n + 1]] = problem.linear[it.lo:it.hi + 1]
        ub[offsets[n]:offsets[n + 1]] = _slot_block_cap(it)
    for h, d in enumerate(problem.demand):
        c[ny + h] = d.rate

    # slot -> list of y columns that put load there
    col_slot = np.concatenate([np.arange(it.lo, it.hi + 1) for it in items])
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for h, d in enumerate(problem.demand):
        for s in np.flatnonzero(d.mask):
            ys = np.flatnonzero(col_slot == s)
            if not len(ys):
                continue
            rows += [r] * (len(ys) + 1)
            cols += ys.tolist() + [ny + h]
            vals += [1.0] * len(ys) + [-1.0]
            rhs.append(-problem.fixed[s])
            r += 1
    # indivisible blocks: if a session puts any share of its energy into
    # period h, some slot of h carries one of its whole blocks on top of the
    # fixed load there
    for h, d in enumerate(problem.demand):
        for n, it in enumerate(items):
            in_h = np.flatnonzero(d.mask[it.lo:it.hi + 1])
            if not len(in_h):
                continue
            floor = float(it.q.min()) + float(problem.fixed[it.lo + in_h].min())
            energy = float(it.q.sum())
            rows += [r] * (len(in_h) + 1)
            cols += (offsets[n] + in_h).tolist() + [ny + h]
            vals += [floor / energy] * len(in_h) + [-1.0]
            rhs.append(0.0)
            r += 1
    finite = np.flatnonzero(np.isfinite(problem.cap))
    for s in finite:
        ys = np.flatnonzero(col_slot == s)
        if not len(ys):
            continue
        rows += [r] * len(ys)
        cols += ys.tolist()
        vals += [1.0] * len(ys)
        rhs.append(problem.cap[s] - problem.fixed[s])
        r += 1
    a_ub = sp.csr_matrix((vals, (rows, cols)), shape=(r, ny + nd)) if r else None
    eq_rows = np.repeat(np.arange(len(items)), [it.width for it in items])
    a_eq = sp.csr_matrix((np.ones(ny), (eq_rows, np.arange(ny))), shape=(len(items), ny + nd))
    b_eq = np.array([it.q.sum() for it in items])
    bounds = [(0.0, u) for u in ub]
    bounds += [(max(d.prev, _forced_floor(problem, d)), None) for d in problem.demand]
    res = linprog(c, A_ub=a_ub, b_ub=np.array(rhs) if r else None, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return None
    # HiGHS tolerances are ~1e-7; shave so the bound stays valid
    value = float(res.fun) + float(problem.fixed @ problem.linear)
    return value - 1e-7 * max(1.0, abs(value))


def lower_bound(problem: SlotProblem) -> float:
    sep = separable_bound(problem)
    lp = lp_bound(problem)
    return sep if lp is None else max(sep, lp)


def solve_heuristic(problem: SlotProblem, relative_gap_target: float = 0.05,
                    time_limit: float | None = None, init=None, bound: float | None = None):
    """Return ``(slots, objective, lower_bound, status, stats)``."""
    start = time.monotonic()
    deadline = None if time_limit is None else start + time_limit
    slots = init if init is not None else [it.initial for it in problem.items]
    search = _Search(problem, slots, deadline)
    lb = lower_bound(problem) if bound is None else bound

    def certified():
        return relative_gap(search.obj, lb) <= relative_gap_target

    rounds = 0
    while True:
        rounds += 1
        changed = search.descent()
        if search.expired():
            break
        changed |= search.squeeze()
        if certified() or search.expired():
            break
        changed |= search.pairs()
        if not changed or search.expired():
            break
    gap = relative_gap(search.obj, lb)
    if gap <= EPS:
        status = "optimal"
    elif gap <= relative_gap_target:
        status = "gap-feasible"
    else:
        status = "time-limit"
    # "time-limit" also covers a search that ran out of improving moves before
    # certifying the gap; ``stopped`` says which one happened
    stopped = "time" if search.expired() else ("gap" if gap <= relative_gap_target
                                               else "no-improving-move")
    stats = {"rounds": rounds, "moves": dict(search.moves), "stopped": stopped,
             "seconds": round(time.monotonic() - start, 3)}
    return search.slots, search.obj, min(lb, search.obj), status, stats
