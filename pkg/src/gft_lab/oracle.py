"""Linear-programming ground truth for small discrete markets.

second_best_lp solves for the best GFT attainable by any interim-incentive-
compatible, interim-individually-rational, (ex-ante by default) weakly
budget-balanced mechanism, with the allocation relaxed per profile to the
constraint polytope. That relaxation is exact whenever the per-profile
polytope has integral vertices (additive, unit-demand, k-uniform, matroid);
for intersections the value is a labeled upper bound.

opt_s_lp drops the seller-side constraints entirely: the designer sees costs,
pays them at face value, and only the buyer's incentives bind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import feasibility as fea
from .feasibility import CapacityError, Constraint
from .mechanisms import MarketInstance, buyer_grid, seller_grid

__all__ = [
    "DiscreteMarket",
    "second_best_lp",
    "opt_s_lp",
    "lp_text",
    "opt_s_partition_check",
    "verify_ub_chain",
]

TYPE_SPACE_CAP = 10**5


@dataclass(frozen=True)
class DiscreteMarket:
    """A fully discrete instance with its enumerated type spaces."""

    inst: MarketInstance

    def __post_init__(self):
        if not self.inst.is_discrete:
            raise ValueError("LP oracle needs a fully discrete instance")
        size = len(self.btypes) * len(self.stypes)
        if size > TYPE_SPACE_CAP:
            raise CapacityError(f"type-space product {size} exceeds {TYPE_SPACE_CAP}")

    @cached_property
    def _bgrid(self):
        return buyer_grid(self.inst)

    @cached_property
    def _sgrid(self):
        return seller_grid(self.inst)

    @property
    def btypes(self) -> np.ndarray:
        return self._bgrid[0]

    @property
    def bprobs(self) -> np.ndarray:
        return self._bgrid[1]

    @property
    def stypes(self) -> np.ndarray:
        return self._sgrid[0]

    @property
    def sprobs(self) -> np.ndarray:
        return self._sgrid[1]


def _polytope_rows(c: Constraint) -> list[tuple[dict[int, float], float]]:
    """Rows (coef-by-item, rhs) describing sum coef*x <= rhs; the box 0<=x<=1
    is handled separately."""
    v = c.variant
    if v == "additive":
        return []
    if v == "unit_demand":
        return [({i: 1.0 for i in c.ground}, 1.0)]
    if v == "k_uniform":
        return [({i: 1.0 for i in c.ground}, float(c.k))]
    if v == "knapsack":
        return [({i: float(c.sizes[c.index_of(i)]) for i in c.ground}, 1.0)]
    if v == "matroid":
        rows = []
        ground = list(c.ground)
        if len(ground) > 16:
            raise CapacityError("matroid polytope rows need at most 16 items")
        for r in range(1, len(ground) + 1):
            for T in combinations(ground, r):
                rows.append(({i: 1.0 for i in T}, float(c.rank_fn(frozenset(T)))))
        return rows
    if v == "intersection":
        rows = []
        for m in c.members:
            rows.extend(_polytope_rows(m))
        return rows
    raise ValueError(f"no polytope description for variant {v!r}")


class _LpBuilder:
    """Collects named variables and <=-rows, then solves or pretty-prints."""

    def __init__(self):
        self.var_names: list[str] = []
        self.obj: dict[int, float] = {}
        self.rows: list[tuple[str, dict[int, float], float]] = []

    def var(self, name: str) -> int:
        self.var_names.append(name)
        return len(self.var_names) - 1

    def add_row(self, name: str, coefs: dict[int, float], rhs: float) -> None:
        self.rows.append((name, {k: v for k, v in coefs.items() if v != 0.0}, rhs))

    def maximize(self, bounds: list[tuple]) -> tuple[float, np.ndarray]:
        nv = len(self.var_names)
        cvec = np.zeros(nv)
        for j, w in self.obj.items():
            cvec[j] = -w
        if self.rows:
            A = np.zeros((len(self.rows), nv))
            b = np.zeros(len(self.rows))
            for r, (_, coefs, rhs) in enumerate(self.rows):
                for j, w in coefs.items():
                    A[r, j] = w
                b[r] = rhs
        else:
            A = b = None
        res = linprog(cvec, A_ub=A, b_ub=b, bounds=bounds, method="highs")
        if not res.success:
            raise RuntimeError(f"LP solve failed: {res.message}")
        return float(-res.fun), res.x

    def text(self) -> str:
        def term(j: int, w: float) -> str:
            sign = "+" if w >= 0 else "-"
            return f"{sign} {abs(w):.6g} {self.var_names[j]}"

        lines = ["maximize"]
        lines.append("  " + " ".join(term(j, w) for j, w in sorted(self.obj.items())))
        lines.append("subject to")
        for name, coefs, rhs in self.rows:
            expr = " ".join(term(j, w) for j, w in sorted(coefs.items()))
            lines.append(f"  {name}: {expr} <= {rhs:.6g}")
        return "\n".join(lines)


def _fmt(vals: Sequence[float]) -> str:
    return ",".join(f"{v:g}" for v in vals)


def _build_second_best(m: DiscreteMarket, budget: str) -> _LpBuilder:
    if budget not in ("exante", "expost"):
        raise ValueError("budget must be 'exante' or 'expost'")
    inst = m.inst
    n = inst.n
    B, pB = m.btypes, m.bprobs
    S, pS = m.stypes, m.sprobs
    nb, ns = len(B), len(S)
    lp = _LpBuilder()
    xid = np.empty((nb, ns, n), dtype=int)
    pbid = np.empty((nb, ns), dtype=int)
    psid = np.empty((nb, ns, n), dtype=int)
    for a in range(nb):
        for k in range(ns):
            tag = f"({_fmt(B[a])}|{_fmt(S[k])})"
            for i in range(n):
                xid[a, k, i] = lp.var(f"x[{i}]{tag}")
            pbid[a, k] = lp.var(f"pB{tag}")
            for i in range(n):
                psid[a, k, i] = lp.var(f"pS[{i}]{tag}")

    for a in range(nb):
        for k in range(ns):
            w = pB[a] * pS[k]
            for i in range(n):
                lp.obj[xid[a, k, i]] = lp.obj.get(xid[a, k, i], 0.0) + w * (B[a, i] - S[k, i])

    prows = _polytope_rows(inst.constraint)
    for a in range(nb):
        for k in range(ns):
            for ridx, (coefs, rhs) in enumerate(prows):
                lp.add_row(
                    f"feas[{ridx}]({_fmt(B[a])}|{_fmt(S[k])})",
                    {xid[a, k, i]: c for i, c in coefs.items()},
                    rhs,
                )

    # buyer interim incentive and participation
    for a in range(nb):
        truth: dict[int, float] = {}
        for k in range(ns):
            for i in range(n):
                truth[xid[a, k, i]] = truth.get(xid[a, k, i], 0.0) + pS[k] * B[a, i]
            truth[pbid[a, k]] = truth.get(pbid[a, k], 0.0) - pS[k]
        lp.add_row(f"buyerIR({_fmt(B[a])})", {j: -w for j, w in truth.items()}, 0.0)
        for a2 in range(nb):
            if a2 == a:
                continue
            row = {j: -w for j, w in truth.items()}
            for k in range(ns):
                for i in range(n):
                    row[xid[a2, k, i]] = row.get(xid[a2, k, i], 0.0) + pS[k] * B[a, i]
                row[pbid[a2, k]] = row.get(pbid[a2, k], 0.0) - pS[k]
            lp.add_row(f"buyerBIC({_fmt(B[a])}->{_fmt(B[a2])})", row, 0.0)

    # seller interim incentive and participation
    sidx = {tuple(S[k]): k for k in range(ns)}
    for i in range(n):
        atoms = inst.seller_dists[i].values
        gi = dict(zip(atoms, inst.seller_dists[i].probs))
        for a_true in atoms:
            truth = {}
            for k in range(ns):
                if S[k, i] != a_true:
                    continue
                wout = pS[k] / gi[a_true]
                for a in range(nb):
                    w = pB[a] * wout
                    truth[psid[a, k, i]] = truth.get(psid[a, k, i], 0.0) + w
                    truth[xid[a, k, i]] = truth.get(xid[a, k, i], 0.0) - w * a_true
            lp.add_row(f"sellerIR[{i}]({a_true:g})", {j: -w for j, w in truth.items()}, 0.0)
            for a_rep in atoms:
                if a_rep == a_true:
                    continue
                row = {j: -w for j, w in truth.items()}
                for k in range(ns):
                    if S[k, i] != a_true:
                        continue
                    rep = list(S[k])
                    rep[i] = a_rep
                    k2 = sidx[tuple(rep)]
                    wout = pS[k] / gi[a_true]
                    for a in range(nb):
                        w = pB[a] * wout
                        row[psid[a, k2, i]] = row.get(psid[a, k2, i], 0.0) + w
                        row[xid[a, k2, i]] = row.get(xid[a, k2, i], 0.0) - w * a_true
                lp.add_row(f"sellerBIC[{i}]({a_true:g}->{a_rep:g})", row, 0.0)

    if budget == "exante":
        row = {}
        for a in range(nb):
            for k in range(ns):
                w = pB[a] * pS[k]
                row[pbid[a, k]] = row.get(pbid[a, k], 0.0) - w
                for i in range(n):
                    row[psid[a, k, i]] = row.get(psid[a, k, i], 0.0) + w
        lp.add_row("budget(exante)", row, 0.0)
    else:
        for a in range(nb):
            for k in range(ns):
                row = {pbid[a, k]: -1.0}
                for i in range(n):
                    row[psid[a, k, i]] = 1.0
                lp.add_row(f"budget({_fmt(B[a])}|{_fmt(S[k])})", row, 0.0)

    lp._bounds = [
        (0.0, 1.0) if name.startswith("x[") else (None, None) for name in lp.var_names
    ]
    return lp


def second_best_lp(m: DiscreteMarket, budget: str = "exante") -> float:
    lp = _build_second_best(m, budget)
    val, _ = lp.maximize(lp._bounds)
    return val


def lp_text(m: DiscreteMarket, budget: str = "exante") -> str:
    return _build_second_best(m, budget).text()


def opt_s_lp(m: DiscreteMarket) -> float:
    """Best E[buyer payment - allocated costs] under buyer BIC/IR only, with
    the allocation free to depend on the full cost profile."""
    inst = m.inst
    n = inst.n
    B, pB = m.btypes, m.bprobs
    S, pS = m.stypes, m.sprobs
    nb, ns = len(B), len(S)
    lp = _LpBuilder()
    xid = np.empty((nb, ns, n), dtype=int)
    pbid = np.empty((nb, ns), dtype=int)
    for a in range(nb):
        for k in range(ns):
            tag = f"({_fmt(B[a])}|{_fmt(S[k])})"
            for i in range(n):
                xid[a, k, i] = lp.var(f"x[{i}]{tag}")
            pbid[a, k] = lp.var(f"pB{tag}")

    for a in range(nb):
        for k in range(ns):
            w = pB[a] * pS[k]
            lp.obj[pbid[a, k]] = lp.obj.get(pbid[a, k], 0.0) + w
            for i in range(n):
                lp.obj[xid[a, k, i]] = lp.obj.get(xid[a, k, i], 0.0) - w * S[k, i]

    prows = _polytope_rows(inst.constraint)
    for a in range(nb):
        for k in range(ns):
            for ridx, (coefs, rhs) in enumerate(prows):
                lp.add_row(f"feas[{ridx}]", {xid[a, k, i]: c for i, c in coefs.items()}, rhs)

    for a in range(nb):
        truth: dict[int, float] = {}
        for k in range(ns):
            for i in range(n):
                truth[xid[a, k, i]] = truth.get(xid[a, k, i], 0.0) + pS[k] * B[a, i]
            truth[pbid[a, k]] = truth.get(pbid[a, k], 0.0) - pS[k]
        lp.add_row(f"buyerIR({_fmt(B[a])})", {j: -w for j, w in truth.items()}, 0.0)
        for a2 in range(nb):
            if a2 == a:
                continue
            row = {j: -w for j, w in truth.items()}
            for k in range(ns):
                for i in range(n):
                    row[xid[a2, k, i]] = row.get(xid[a2, k, i], 0.0) + pS[k] * B[a, i]
                row[pbid[a2, k]] = row.get(pbid[a2, k], 0.0) - pS[k]
            lp.add_row(f"buyerBIC({_fmt(B[a])}->{_fmt(B[a2])})", row, 0.0)

    bounds = [(0.0, 1.0) if name.startswith("x[") else (None, None) for name in lp.var_names]
    val, _ = lp.maximize(bounds)
    return val


def opt_s_partition_check(m: DiscreteMarket, tol: float = 1e-6) -> dict:
    """OPT-S over all items is at most OPT-S on one part plus first best on the
    complement, for every 1/(n-1)-style split of a two-item market."""
    from . import audits
    from .bounds import sub_instance

    inst = m.inst
    if inst.n != 2:
        raise ValueError("partition check written for two-item markets")
    whole = opt_s_lp(m)
    results = {}
    for keep in (0, 1):
        drop = 1 - keep
        part = opt_s_lp(DiscreteMarket(sub_instance(inst, [keep])))
        fb = audits.first_best_gft(sub_instance(inst, [drop]), "exact")
        results[f"keep{keep}"] = (whole, part + fb, whole <= part + fb + tol)
    return results


def verify_ub_chain(m: DiscreteMarket, mechanisms: Sequence | None = None, tol: float = 1e-6) -> dict:
    """Recompute the bound chain on one market: every implemented mechanism's
    exact GFT <= SB <= min(FB, OPT-B + OPT-S)."""
    from . import audits, bounds
    from .mechanisms import BuyerOffering, Fpp, Sapp, SellerOffering, reduction_rule, sapp_build

    inst = m.inst
    sb = second_best_lp(m)
    fb = audits.first_best_gft(inst, "exact")
    ob = bounds.opt_b(inst, "exact")
    os_ = opt_s_lp(m)
    report = {
        "sb": sb,
        "fb": fb,
        "opt_b": ob,
        "opt_s": os_,
        "sb_le_fb": sb <= fb + tol,
        "sb_le_optb_plus_opts": sb <= ob + os_ + tol,
        "mechanisms": {},
    }
    if mechanisms is None:
        mechanisms = []
        prices = sorted({float(v) for d in inst.buyer_dists + inst.seller_dists for v in d.values})
        for p in prices:
            pv = np.full(inst.n, p)
            try:
                mechanisms.append(Fpp(inst, pv, pv, name=f"fpp[{p:g}]"))
            except ValueError:
                pass
        mechanisms.append(BuyerOffering(inst))
        if inst.n == 1:
            mechanisms.append(SellerOffering(inst))
        try:
            mechanisms.append(Sapp(inst, sapp_build(inst, reduction_rule(inst))))
        except ValueError:
            pass
    for mech in mechanisms:
        g = audits.exact_gft(mech, inst)
        report["mechanisms"][getattr(mech, "name", type(mech).__name__)] = (g, g <= sb + tol)
    return report
