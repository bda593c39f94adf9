"""Estimation and verification: GFT estimates, first-best accounting, budget
balance, individual rationality, and seller incentive audits.

Monte Carlo checks quote mean and standard error so callers can apply
three-sigma bands; `with_rerun` implements the one-retry-at-4x policy used by
the statistical test suite. Exact paths enumerate discrete profile grids and
defer to a mechanism's own coin-integrated accounting when it provides one.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import feasibility as fea
from .mechanisms import MarketInstance, Outcome, buyer_grid, seller_grid

__all__ = [
    "estimate_gft",
    "exact_gft",
    "first_best_gft",
    "budget_audit",
    "BudgetReport",
    "ir_audit",
    "dsic_audit_sellers",
    "AuditReport",
    "audit_report",
    "with_rerun",
]

GRID_CAP = 10**7


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()) if len(x) else 0.0, 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def _accepts_rng(mechanism) -> bool:
    try:
        return "rng" in inspect.signature(mechanism.run).parameters
    except (TypeError, ValueError):
        return False


def estimate_gft(mechanism, inst: MarketInstance, samples: int = 10**4, seed: int = 0) -> tuple[float, float]:
    """Sample-mean GFT of a mechanism and its standard error."""
    rng = np.random.default_rng(seed)
    B, S = inst.sample_profiles(rng, samples)
    batch = getattr(mechanism, "run_batch", None)
    if callable(batch):
        vals = batch(B, S, rng=rng)
        if vals is not None:
            return _mean_stderr(np.asarray(vals, dtype=float))
    use_rng = _accepts_rng(mechanism)
    vals = np.empty(samples)
    for t in range(samples):
        out = mechanism.run(B[t], S[t], rng=rng) if use_rng else mechanism.run(B[t], S[t])
        vals[t] = out.gft
    return _mean_stderr(vals)


def exact_gft(mechanism, inst: MarketInstance) -> float:
    """Exact expected GFT on a fully discrete instance. Uses the mechanism's
    per-profile expectation (which integrates internal randomness)."""
    B, pB = buyer_grid(inst)
    S, pS = seller_grid(inst)
    if len(B) * len(S) > GRID_CAP:
        raise fea.CapacityError("profile grid too large for exact evaluation")
    fn = getattr(mechanism, "expected_gft_given_profile", None)
    if fn is None:
        fn = lambda b, s: mechanism.run(b, s).gft
    total = 0.0
    for kk in range(len(S)):
        for mm in range(len(B)):
            w = pS[kk] * pB[mm]
            if w > 0.0:
                total += w * fn(B[mm], S[kk])
    return total


def _fb_values(inst: MarketInstance, B: np.ndarray, S: np.ndarray) -> np.ndarray:
    gain = np.maximum(B - S, 0.0)
    variant = inst.constraint.variant
    if variant == "additive":
        return gain.sum(axis=1)
    if variant == "unit_demand":
        return gain.max(axis=1)
    if variant == "k_uniform":
        k = inst.constraint.k
        if k >= inst.n:
            return gain.sum(axis=1)
        part = np.partition(gain, inst.n - k, axis=1)
        return part[:, inst.n - k:].sum(axis=1)
    out = np.empty(len(B))
    for t in range(len(B)):
        w = {i: gain[t, i] for i in range(inst.n) if gain[t, i] > 0}
        _, val = fea.max_weight_set(inst.constraint, w)
        out[t] = val
    return out


def first_best_gft(inst: MarketInstance, mode: str = "exact", samples: int = 10**5, seed: int = 0):
    """E[max over feasible sets of the positive-part surplus].

    mode="exact" enumerates discrete grids and returns a float; mode="mc"
    returns (mean, stderr).
    """
    if mode == "exact":
        B, pB = buyer_grid(inst)
        S, pS = seller_grid(inst)
        if len(B) * len(S) > GRID_CAP:
            raise fea.CapacityError("profile grid too large for exact evaluation")
        vals = _fb_values(inst, np.repeat(B, len(S), axis=0), np.tile(S, (len(B), 1)))
        w = np.outer(pB, pS).reshape(-1)
        return float(np.dot(w, vals))
    if mode != "mc":
        raise ValueError("mode must be 'exact' or 'mc'")
    rng = np.random.default_rng(seed)
    B, S = inst.sample_profiles(rng, samples)
    return _mean_stderr(_fb_values(inst, B, S))


@dataclass(frozen=True)
class BudgetReport:
    expost_min_slack: float
    exante_slack: float
    exante_stderr: float

    @property
    def expost_ok(self) -> bool:
        return self.expost_min_slack >= -1e-9


def budget_audit(mechanism, inst: MarketInstance, samples: int = 10**4, seed: int = 0) -> BudgetReport:
    """Buyer payment minus total seller payments, ex post (min) and ex ante."""
    rng = np.random.default_rng(seed)
    B, S = inst.sample_profiles(rng, samples)
    use_rng = _accepts_rng(mechanism)
    slack = np.empty(samples)
    for t in range(samples):
        out = mechanism.run(B[t], S[t], rng=rng) if use_rng else mechanism.run(B[t], S[t])
        slack[t] = out.buyer_payment - sum(out.seller_payments)
    mean, err = _mean_stderr(slack)
    return BudgetReport(float(slack.min()), mean, err)


def ir_audit(mechanism, inst: MarketInstance, samples: int = 4096, seed: int = 0) -> tuple[float, float]:
    """Minimum ex-post utility slack over samples: (buyer, worst seller)."""
    rng = np.random.default_rng(seed)
    B, S = inst.sample_profiles(rng, samples)
    use_rng = _accepts_rng(mechanism)
    buyer_min, seller_min = np.inf, np.inf
    for t in range(samples):
        out = mechanism.run(B[t], S[t], rng=rng) if use_rng else mechanism.run(B[t], S[t])
        buyer_min = min(buyer_min, sum(B[t][i] for i in out.traded) - out.buyer_payment)
        for i in range(inst.n):
            got = out.seller_payments[i]
            seller_min = min(seller_min, got - S[t][i] if i in out.traded else got)
    return float(buyer_min), float(seller_min)


def _deviation_grid(inst: MarketInstance, i: int, points: int = 33) -> np.ndarray:
    d = inst.seller_dists[i]
    if d.kind == "discrete":
        return np.asarray(d.values, dtype=float)
    from .distributions import quantile

    return np.array([quantile(d, (j + 0.5) / points) for j in range(points)])


def dsic_audit_sellers(
    mechanism,
    inst: MarketInstance,
    samples: int = 2000,
    seed: int = 0,
    deviations: Sequence[np.ndarray] | None = None,
    prefer_exact: bool = True,
) -> float:
    """Largest estimated expected gain from a unilateral seller misreport.

    Prefers a mechanism-provided exact deviation scan on discrete instances;
    otherwise Monte Carlo with common random numbers (shared profiles, and
    shared coins for coin-flipping mechanisms) across deviations.
    """
    if prefer_exact and inst.is_discrete and hasattr(mechanism, "exact_dsic_gain"):
        return float(mechanism.exact_dsic_gain())
    rng = np.random.default_rng(seed)
    B, S = inst.sample_profiles(rng, samples)
    takes_coins = False
    try:
        takes_coins = "coins" in inspect.signature(mechanism.run).parameters
    except (TypeError, ValueError):
        pass
    coins = rng.random((samples, inst.n)) if takes_coins else None

    def util(i: int, t: int, s_vec: np.ndarray) -> float:
        if takes_coins:
            out = mechanism.run(B[t], s_vec, coins=coins[t])
        else:
            out = mechanism.run(B[t], s_vec)
        pay = out.seller_payments[i]
        return pay - S[t][i] if i in out.traded else pay

    worst = -np.inf
    for i in range(inst.n):
        grid = deviations[i] if deviations is not None else _deviation_grid(inst, i)
        truth = np.array([util(i, t, S[t]) for t in range(samples)])
        for z in grid:
            dev = np.empty(samples)
            for t in range(samples):
                s_vec = S[t].copy()
                s_vec[i] = z
                dev[t] = util(i, t, s_vec)
            worst = max(worst, float((dev - truth).mean()))
    return worst


@dataclass(frozen=True)
class AuditReport:
    mechanism: str
    gft: float
    gft_stderr: float
    expost_budget_min: float
    exante_budget: float
    exante_budget_stderr: float
    buyer_ir_min: float
    seller_ir_min: float
    exact: bool = False

    def as_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "gft": self.gft,
            "gft_stderr": self.gft_stderr,
            "expost_budget_min": self.expost_budget_min,
            "exante_budget": self.exante_budget,
            "exante_budget_stderr": self.exante_budget_stderr,
            "buyer_ir_min": self.buyer_ir_min,
            "seller_ir_min": self.seller_ir_min,
            "exact": self.exact,
        }

    CSV_FIELDS = (
        "mechanism",
        "gft",
        "gft_stderr",
        "expost_budget_min",
        "exante_budget",
        "exante_budget_stderr",
        "buyer_ir_min",
        "seller_ir_min",
        "exact",
    )


def audit_report(mechanism, inst: MarketInstance, samples: int = 10**4, seed: int = 0, exact: bool = False) -> AuditReport:
    if exact:
        gft, err = exact_gft(mechanism, inst), 0.0
    else:
        gft, err = estimate_gft(mechanism, inst, samples, seed)
    bud = budget_audit(mechanism, inst, min(samples, 10**4), seed + 1)
    bir, sir = ir_audit(mechanism, inst, min(samples, 4096), seed + 2)
    name = getattr(mechanism, "name", type(mechanism).__name__)
    return AuditReport(name, gft, err, bud.expost_min_slack, bud.exante_slack, bud.exante_stderr, bir, sir, exact)


def with_rerun(check: Callable[[int], tuple[bool, str]], samples: int, factor: int = 4) -> tuple[bool, str]:
    """Run a statistical check; on failure retry once with factor-x samples."""
    ok, detail = check(samples)
    if ok:
        return ok, detail
    ok2, detail2 = check(samples * factor)
    return ok2, f"{detail2} (after {factor}x rerun; first try: {detail})"
