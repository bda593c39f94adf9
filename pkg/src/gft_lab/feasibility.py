"""Downward-closed feasibility constraints over item index sets.

Variants: additive, unit-demand, k-uniform, matroid (rank oracle), matching
(items are edges of a graph), knapsack (sizes in [0,1], capacity 1),
intersection, and size-floor (|S| >= h, the one sanctioned non-downward-closed
family, used only as a purchase subconstraint).

Exact solvers throughout: greedy where a matroid structure makes it optimal,
branch and bound / exhaustive search elsewhere at desk scale. Tie-breaking is
global and deterministic: smallest total weight-attaining set by cardinality,
then lexicographically smallest index tuple.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

BRUTE_FORCE_LIMIT = 24  # capacity guard for exhaustive variants
POLYTOPE_ENUM_LIMIT = 20

__all__ = [
    "Constraint",
    "additive",
    "unit_demand",
    "k_uniform",
    "matroid_oracle",
    "matching",
    "knapsack",
    "intersection",
    "size_floor",
    "is_feasible",
    "max_weight_set",
    "restrict",
    "reindex_restrict",
    "in_scaled_polytope",
    "feasible_sets",
    "constraint_to_json",
    "constraint_from_json",
]


class CapacityError(RuntimeError):
    """Ground set too large for an exact search on this variant."""


@dataclass(frozen=True)
class Constraint:
    variant: str
    ground: tuple[int, ...]
    k: int = 0
    rank_fn: Callable[[frozenset[int]], int] | None = field(default=None, compare=False)
    edge_ends: tuple[tuple[int, int], ...] = ()  # aligned with ground (matching)
    sizes: tuple[float, ...] = ()  # aligned with ground (knapsack)
    members: tuple["Constraint", ...] = ()
    base: "Constraint | None" = None
    h: int = 0

    def index_of(self, item: int) -> int:
        return self.ground.index(item)


def _norm_ground(ground: Iterable[int]) -> tuple[int, ...]:
    g = tuple(sorted(set(int(i) for i in ground)))
    if not g:
        raise ValueError("ground set must be nonempty")
    return g


def additive(ground: Iterable[int]) -> Constraint:
    return Constraint("additive", _norm_ground(ground))


def unit_demand(ground: Iterable[int]) -> Constraint:
    return Constraint("unit_demand", _norm_ground(ground))


def k_uniform(k: int, ground: Iterable[int]) -> Constraint:
    if k < 1:
        raise ValueError("k must be >= 1")
    return Constraint("k_uniform", _norm_ground(ground), k=int(k))


def matroid_oracle(rank_fn: Callable[[frozenset[int]], int], ground: Iterable[int]) -> Constraint:
    return Constraint("matroid", _norm_ground(ground), rank_fn=rank_fn)


def matching(edges: Mapping[int, tuple] | Sequence[tuple]) -> Constraint:
    """Items are edges; a set is feasible iff its edges form a matching.

    ``edges`` maps item -> (u, v) vertex pair, or is a sequence of pairs
    (items then numbered 0..len-1).
    """
    if isinstance(edges, Mapping):
        items = _norm_ground(edges.keys())
        ends = tuple(tuple(edges[i]) for i in items)
    else:
        items = tuple(range(len(edges)))
        ends = tuple(tuple(e) for e in edges)
    for u, v in ends:
        if u == v:
            raise ValueError("self-loop edge cannot appear in a matching")
    return Constraint("matching", items, edge_ends=ends)


def knapsack(sizes: Mapping[int, float] | Sequence[float]) -> Constraint:
    if isinstance(sizes, Mapping):
        items = _norm_ground(sizes.keys())
        sz = tuple(float(sizes[i]) for i in items)
    else:
        items = tuple(range(len(sizes)))
        sz = tuple(float(c) for c in sizes)
    if any(not 0.0 <= c <= 1.0 for c in sz):
        raise ValueError("knapsack sizes must lie in [0,1]")
    return Constraint("knapsack", items, sizes=sz)


def intersection(*members: Constraint) -> Constraint:
    if not members:
        raise ValueError("need at least one member")
    ground = members[0].ground
    if any(m.ground != ground for m in members):
        raise ValueError("all members must share the ground set")
    return Constraint("intersection", ground, members=tuple(members))


def size_floor(base: Constraint, h: int) -> Constraint:
    if h < 1:
        raise ValueError("size floor h must be >= 1")
    return Constraint("size_floor", base.ground, base=base, h=int(h))


# -- membership -------------------------------------------------------------


def is_feasible(c: Constraint, S: Iterable[int]) -> bool:
    s = frozenset(int(i) for i in S)
    if not s <= set(c.ground):
        raise ValueError(f"set {sorted(s)} not within ground {c.ground}")
    return _feasible(c, s)


def _feasible(c: Constraint, s: frozenset[int]) -> bool:
    if c.variant == "additive":
        return True
    if c.variant == "unit_demand":
        return len(s) <= 1
    if c.variant == "k_uniform":
        return len(s) <= c.k
    if c.variant == "matroid":
        return c.rank_fn(s) == len(s)
    if c.variant == "matching":
        seen = set()
        for i in s:
            u, v = c.edge_ends[c.index_of(i)]
            if u in seen or v in seen:
                return False
            seen.add(u)
            seen.add(v)
        return True
    if c.variant == "knapsack":
        return sum(c.sizes[c.index_of(i)] for i in s) <= 1.0 + 1e-12
    if c.variant == "intersection":
        return all(_feasible(m, s) for m in c.members)
    if c.variant == "size_floor":
        return _feasible(c.base, s) and (len(s) == 0 or len(s) >= c.h)
    raise ValueError(f"unknown variant {c.variant}")


# -- max weight feasible set --------------------------------------------------


def _weights_dict(c: Constraint, w) -> dict[int, float]:
    if isinstance(w, Mapping):
        return {int(i): float(w.get(i, 0.0)) for i in c.ground}
    w = list(w)
    if len(w) != len(c.ground):
        raise ValueError("weight vector length must match ground size")
    return {i: float(x) for i, x in zip(c.ground, w)}


def _better(cand: tuple[float, tuple[int, ...]], best: tuple[float, tuple[int, ...]] | None) -> bool:
    if best is None:
        return True
    val, items = cand
    bval, bitems = best
    if val > bval + 1e-12:
        return True
    if val < bval - 1e-12:
        return False
    return (len(items), items) < (len(bitems), bitems)


def max_weight_set(c: Constraint, w) -> tuple[tuple[int, ...], float]:
    """Exact argmax_{S feasible} sum of weights; ties to the smallest set,
    then lexicographic. Negative-weight items are never useful for
    downward-closed variants and only enter under a size floor."""
    wd = _weights_dict(c, w)
    if c.variant in ("additive", "unit_demand", "k_uniform", "matroid"):
        chosen = _greedy_matroid(c, wd)
    elif c.variant == "knapsack":
        chosen = _knapsack_best(c, wd)
    elif c.variant in ("matching", "intersection"):
        chosen = _search_best(c, wd)
    elif c.variant == "size_floor":
        chosen = _size_floor_best(c, wd)
    else:
        raise ValueError(f"unknown variant {c.variant}")
    total = sum(wd[i] for i in chosen)
    return chosen, total


def _greedy_matroid(c: Constraint, wd: dict[int, float]) -> tuple[int, ...]:
    order = sorted((i for i in c.ground if wd[i] > 0.0), key=lambda i: (-wd[i], i))
    if c.variant == "additive":
        return tuple(sorted(order))
    if c.variant == "unit_demand":
        return (order[0],) if order else ()
    if c.variant == "k_uniform":
        return tuple(sorted(order[: c.k]))
    chosen: list[int] = []
    cur = frozenset()
    for i in order:
        if c.rank_fn(cur | {i}) == len(cur) + 1:
            chosen.append(i)
            cur = cur | {i}
    return tuple(sorted(chosen))


def _knapsack_best(c: Constraint, wd: dict[int, float]) -> tuple[int, ...]:
    items = [i for i in c.ground if wd[i] > 0.0]
    if len(items) > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"knapsack search over {len(items)} items exceeds {BRUTE_FORCE_LIMIT}")
    # branch and bound, items by density; fractional relaxation as the bound
    items.sort(key=lambda i: (-wd[i] / max(c.sizes[c.index_of(i)], 1e-15), i))
    sizes = [c.sizes[c.index_of(i)] for i in items]
    vals = [wd[i] for i in items]
    best: tuple[float, tuple[int, ...]] | None = (0.0, ())

    def relax(j: int, cap: float) -> float:
        out = 0.0
        for t in range(j, len(items)):
            if sizes[t] <= cap:
                out += vals[t]
                cap -= sizes[t]
            else:
                out += vals[t] * (cap / sizes[t]) if sizes[t] > 0 else 0.0
                break
        return out

    def dfs(j: int, cap: float, acc: float, taken: list[int]) -> None:
        nonlocal best
        cand = (acc, tuple(sorted(taken)))
        if _better(cand, best):
            best = cand
        if j == len(items):
            return
        # prune only when strictly worse; ties keep exploring so the
        # cardinality/lex tie-break stays globally exact
        if acc + relax(j, cap) < best[0] - 1e-12:
            return
        if sizes[j] <= cap + 1e-12:
            taken.append(items[j])
            dfs(j + 1, cap - sizes[j], acc + vals[j], taken)
            taken.pop()
        dfs(j + 1, cap, acc, taken)

    dfs(0, 1.0, 0.0, [])
    return best[1]


def _search_best(c: Constraint, wd: dict[int, float]) -> tuple[int, ...]:
    items = sorted((i for i in c.ground if wd[i] > 0.0), key=lambda i: (-wd[i], i))
    if len(items) > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"search over {len(items)} items exceeds {BRUTE_FORCE_LIMIT}")
    best: tuple[float, tuple[int, ...]] | None = (0.0, ())

    def dfs(j: int, acc: float, taken: list[int]) -> None:
        nonlocal best
        cand = (acc, tuple(sorted(taken)))
        if _better(cand, best):
            best = cand
        if j == len(items):
            return
        rest = sum(wd[i] for i in items[j:])
        if acc + rest < best[0] - 1e-12:
            return
        nxt = frozenset(taken) | {items[j]}
        if _feasible(c, nxt):  # downward closure makes this pruning sound
            taken.append(items[j])
            dfs(j + 1, acc + wd[items[j]], taken)
            taken.pop()
        dfs(j + 1, acc, taken)

    dfs(0, 0.0, [])
    return best[1]


def _size_floor_best(c: Constraint, wd: dict[int, float]) -> tuple[int, ...]:
    """Max weight over {S in base : |S| >= h} plus the empty set.

    Negative weights matter here (reaching the floor may require them), so the
    search runs over the full ground set.
    """
    base, h = c.base, c.h
    if base.variant == "additive":
        pos = sorted((i for i in base.ground if wd[i] > 0.0), key=lambda i: (-wd[i], i))
        if len(pos) >= h:
            return tuple(sorted(pos))
        ranked = sorted(base.ground, key=lambda i: (-wd[i], i))
        cand = tuple(sorted(ranked[:h]))
        return cand if _better((sum(wd[i] for i in cand), cand), (0.0, ())) else ()
    items = sorted(base.ground)
    if len(items) > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"size-floor search over {len(items)} items exceeds {BRUTE_FORCE_LIMIT}")
    best: tuple[float, tuple[int, ...]] | None = (0.0, ())

    def dfs(j: int, acc: float, taken: list[int]) -> None:
        nonlocal best
        if len(taken) >= h:
            cand = (acc, tuple(sorted(taken)))
            if _better(cand, best):
                best = cand
        if j == len(items):
            return
        if len(taken) + (len(items) - j) < h:
            return
        nxt = frozenset(taken) | {items[j]}
        if _feasible(base, nxt):
            taken.append(items[j])
            dfs(j + 1, acc + wd[items[j]], taken)
            taken.pop()
        dfs(j + 1, acc, taken)

    dfs(0, 0.0, [])
    return best[1]


# -- restriction -------------------------------------------------------------


def restrict(c: Constraint, T: Iterable[int]) -> Constraint:
    t = tuple(sorted(set(int(i) for i in T)))
    if not set(t) <= set(c.ground):
        raise ValueError(f"restriction {t} not within ground {c.ground}")
    if not t:
        # empty markets come up when no seller is willing; keep a sentinel item-free family
        t = ()
    if c.variant in ("additive", "unit_demand"):
        return Constraint(c.variant, t)
    if c.variant == "k_uniform":
        return Constraint("k_uniform", t, k=c.k)
    if c.variant == "matroid":
        return Constraint("matroid", t, rank_fn=c.rank_fn)
    if c.variant == "matching":
        ends = tuple(c.edge_ends[c.index_of(i)] for i in t)
        return Constraint("matching", t, edge_ends=ends)
    if c.variant == "knapsack":
        sz = tuple(c.sizes[c.index_of(i)] for i in t)
        return Constraint("knapsack", t, sizes=sz)
    if c.variant == "intersection":
        return Constraint("intersection", t, members=tuple(restrict(m, t) for m in c.members))
    if c.variant == "size_floor":
        return Constraint("size_floor", t, base=restrict(c.base, t), h=c.h)
    raise ValueError(f"unknown variant {c.variant}")


def reindex_restrict(c: Constraint, T: Iterable[int]) -> Constraint:
    """Restrict to T and relabel its items as 0..len(T)-1 (sorted order), so
    the result can ground a standalone sub-market."""
    t = tuple(sorted(set(int(i) for i in T)))
    sub = restrict(c, t)
    pos = {i: j for j, i in enumerate(t)}
    back = {j: i for i, j in pos.items()}
    new_ground = tuple(range(len(t)))
    if sub.variant in ("additive", "unit_demand"):
        return Constraint(sub.variant, new_ground)
    if sub.variant == "k_uniform":
        return Constraint("k_uniform", new_ground, k=sub.k)
    if sub.variant == "knapsack":
        return Constraint("knapsack", new_ground, sizes=sub.sizes)
    if sub.variant == "matching":
        return Constraint("matching", new_ground, edge_ends=sub.edge_ends)
    if sub.variant == "matroid":
        rank = sub.rank_fn

        def relabeled(S: frozenset[int]) -> int:
            return rank(frozenset(back[j] for j in S))

        return Constraint("matroid", new_ground, rank_fn=relabeled)
    if sub.variant == "intersection":
        return Constraint(
            "intersection", new_ground, members=tuple(reindex_restrict(m, t) for m in sub.members)
        )
    raise ValueError(f"cannot reindex variant {sub.variant}")


# -- scaled polytope membership ----------------------------------------------


def feasible_sets(c: Constraint) -> list[frozenset[int]]:
    """Every feasible set; capacity-guarded enumeration."""
    if len(c.ground) > POLYTOPE_ENUM_LIMIT:
        raise CapacityError(f"enumeration over {len(c.ground)} items exceeds {POLYTOPE_ENUM_LIMIT}")
    out = []
    for r in range(len(c.ground) + 1):
        for comb in combinations(c.ground, r):
            s = frozenset(comb)
            if _feasible(c, s):
                out.append(s)
    return out


def in_scaled_polytope(c: Constraint, q, delta: float) -> bool:
    """Whether q lies in delta * P, P = convex hull of feasible-set indicators."""
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must be in (0,1]")
    qd = _weights_dict(c, q)
    vals = np.array([qd[i] for i in c.ground])
    if np.any(vals < -1e-12) or np.any(vals > 1.0 + 1e-12):
        raise ValueError("q must lie in [0,1]^n")
    x = vals / delta
    tol = 1e-9
    if c.variant == "additive":
        return bool(np.all(x <= 1.0 + tol))
    if c.variant == "unit_demand":
        return bool(x.sum() <= 1.0 + tol)
    if c.variant == "k_uniform":
        return bool(x.sum() <= c.k + tol and np.all(x <= 1.0 + tol))
    if c.variant == "knapsack":
        sz = np.array(c.sizes)
        return bool(np.dot(x, sz) <= 1.0 + tol and np.all(x <= 1.0 + tol))
    if c.variant == "matroid":
        if len(c.ground) > POLYTOPE_ENUM_LIMIT:
            raise CapacityError("matroid polytope check is exact only for small grounds")
        for r in range(1, len(c.ground) + 1):
            for comb in combinations(c.ground, r):
                rank = c.rank_fn(frozenset(comb))
                if sum(x[c.index_of(i)] for i in comb) > rank + tol:
                    return False
        return True
    if c.variant in ("matching", "intersection"):
        return _in_hull_lp(c, x, tol)
    raise ValueError(f"scaled-polytope membership undefined for {c.variant}")


def _in_hull_lp(c: Constraint, x: np.ndarray, tol: float) -> bool:
    """LP feasibility for downward-closed families: x is in the hull iff some
    distribution over feasible sets dominates it coordinatewise."""
    from scipy.optimize import linprog

    sets = feasible_sets(c)
    a_ub = np.zeros((len(c.ground), len(sets)))
    for j, s in enumerate(sets):
        for i in s:
            a_ub[c.index_of(i), j] = -1.0
    a_eq = np.ones((1, len(sets)))
    res = linprog(
        np.zeros(len(sets)),
        A_ub=a_ub,
        b_ub=-(x - tol),
        A_eq=a_eq,
        b_eq=[1.0],
        bounds=(0, None),
        method="highs",
    )
    return res.status == 0


# -- JSON --------------------------------------------------------------------


def constraint_to_json(c: Constraint) -> dict:
    out: dict = {"variant": c.variant, "ground": list(c.ground)}
    if c.variant == "k_uniform":
        out["k"] = c.k
    elif c.variant == "matching":
        out["edges"] = [list(e) for e in c.edge_ends]
    elif c.variant == "knapsack":
        out["sizes"] = list(c.sizes)
    elif c.variant == "intersection":
        out["members"] = [constraint_to_json(m) for m in c.members]
    elif c.variant == "size_floor":
        out["base"] = constraint_to_json(c.base)
        out["h"] = c.h
    elif c.variant == "matroid":
        if len(c.ground) > 16:
            raise ValueError("matroid serialization uses an explicit rank table; ground too large")
        table = {}
        for r in range(len(c.ground) + 1):
            for comb in combinations(c.ground, r):
                table[",".join(map(str, comb))] = c.rank_fn(frozenset(comb))
        out["rank_table"] = table
    return out


def constraint_from_json(obj: dict) -> Constraint:
    variant = obj["variant"]
    ground = obj["ground"]
    if variant == "additive":
        return additive(ground)
    if variant == "unit_demand":
        return unit_demand(ground)
    if variant == "k_uniform":
        return k_uniform(obj["k"], ground)
    if variant == "matching":
        return matching({i: tuple(e) for i, e in zip(sorted(ground), obj["edges"])})
    if variant == "knapsack":
        return knapsack({i: s for i, s in zip(sorted(ground), obj["sizes"])})
    if variant == "intersection":
        return intersection(*(constraint_from_json(m) for m in obj["members"]))
    if variant == "size_floor":
        return size_floor(constraint_from_json(obj["base"]), obj["h"])
    if variant == "matroid":
        table = {frozenset(int(x) for x in k.split(",") if x): v for k, v in obj["rank_table"].items()}
        return matroid_oracle(lambda s: table[frozenset(s)], ground)
    raise ValueError(f"unknown variant {variant}")
