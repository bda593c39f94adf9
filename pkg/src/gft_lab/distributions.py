"""Value and cost distributions: quantiles, virtual values, ironing, ladders.

A ``Dist`` is either a finite atom list or a continuous distribution given by
closed-form (cdf, density, quantile) closures on a bounded support. All the
quantile conventions used by the mechanisms live here so they are fixed in one
place:

* ``quantile(d, q)``    = inf{v : cdf(v) >= q}        (generalized inverse)
* ``upper_quantile``    = largest v with Pr[X >= v] >= q

Buyer-side constructions (price ladders, the x_i of the trade-probability
pair check) use the upper quantile; seller-side ones use the lower quantile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

ATOL = 1e-12

__all__ = [
    "Dist",
    "IronedVirtual",
    "discrete",
    "point_mass",
    "smooth_point_mass",
    "uniform",
    "exponential_truncated",
    "exponential_truncated_reversed",
    "lognormal",
    "builtin",
    "dist_to_json",
    "dist_from_json",
    "quantile",
    "upper_quantile",
    "trade_probability",
    "buyer_virtual",
    "seller_virtual",
    "iron",
    "quantile_ladder",
    "quantile_pair_check",
]


@dataclass(frozen=True)
class Dist:
    """A buyer value or seller cost distribution.

    kind == "discrete": ``values``/``probs`` hold the atoms (strictly
    increasing values, masses summing to 1 within 1e-12).

    kind == "continuous": ``cdf_fn``, ``pdf_fn``, ``quantile_fn`` are scalar
    closures, vectorized over numpy arrays where convenient, with support
    [lo, hi]. Point masses inside continuous inputs are not representable;
    callers smooth them (``smooth_point_mass``) or go discrete.
    """

    kind: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    cdf_fn: Callable[[float], float] | None = None
    pdf_fn: Callable[[float], float] | None = None
    quantile_fn: Callable[[float], float] | None = None
    lo: float = 0.0
    hi: float = 0.0
    name: str = ""
    params: tuple[tuple[str, float], ...] = field(default=(), compare=False)

    # -- shared probability helpers -------------------------------------

    def cdf(self, v: float) -> float:
        """Pr[X <= v]."""
        if self.kind == "discrete":
            vals = np.asarray(self.values)
            return float(np.sum(np.asarray(self.probs)[vals <= v + ATOL]))
        return float(min(1.0, max(0.0, self.cdf_fn(v))))

    def tail(self, v: float) -> float:
        """Pr[X >= v]."""
        if self.kind == "discrete":
            vals = np.asarray(self.values)
            return float(np.sum(np.asarray(self.probs)[vals >= v - ATOL]))
        return 1.0 - self.cdf(v)

    def pdf(self, v: float) -> float:
        if self.kind == "discrete":
            raise ValueError("density undefined for discrete Dist; use mass()")
        return float(self.pdf_fn(v))

    def mass(self, v: float) -> float:
        """Probability mass at an atom (0 if v is not an atom)."""
        if self.kind != "discrete":
            return 0.0
        for val, p in zip(self.values, self.probs):
            if abs(val - v) <= ATOL * max(1.0, abs(v)):
                return p
        return 0.0

    def support(self) -> tuple[float, float]:
        if self.kind == "discrete":
            return self.values[0], self.values[-1]
        return self.lo, self.hi

    def mean(self) -> float:
        if self.kind == "discrete":
            return float(np.dot(self.values, self.probs))
        val, _ = integrate.quad(lambda v: v * self.pdf_fn(v), self.lo, self.hi, limit=200)
        return val

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-transform sampling, so equal seeds couple across calls."""
        u = rng.random(size)
        return self.ppf(u)

    def ppf(self, u):
        """Vectorized generalized-inverse cdf."""
        u = np.asarray(u, dtype=float)
        if self.kind == "discrete":
            cum = np.cumsum(self.probs)
            idx = np.searchsorted(cum, u - ATOL, side="left")
            idx = np.minimum(idx, len(self.values) - 1)
            out = np.asarray(self.values)[idx]
        else:
            fn = np.vectorize(self.quantile_fn)
            out = fn(np.clip(u, 0.0, 1.0))
        return out if out.shape else float(out)


# -- constructors --------------------------------------------------------


def discrete(values: Sequence[float], probs: Sequence[float]) -> Dist:
    vals = [float(v) for v in values]
    ps = [float(p) for p in probs]
    if len(vals) != len(ps) or not vals:
        raise ValueError("values and probs must be equal-length and nonempty")
    order = np.argsort(vals)
    vals = [vals[i] for i in order]
    ps = [ps[i] for i in order]
    if any(vals[i] >= vals[i + 1] for i in range(len(vals) - 1)):
        raise ValueError("atom values must be strictly increasing")
    if any(p <= 0 for p in ps):
        raise ValueError("atom masses must be positive")
    total = sum(ps)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"atom masses sum to {total}, expected 1")
    ps = [p / total for p in ps]
    return Dist(kind="discrete", values=tuple(vals), probs=tuple(ps))


def point_mass(v: float) -> Dist:
    return Dist(kind="discrete", values=(float(v),), probs=(1.0,))


def smooth_point_mass(v: float, eps: float) -> Dist:
    """Uniform on [v-eps, v+eps]; the standard fix for an atom inside a
    continuous model. eps is caller-chosen."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return uniform(v - eps, v + eps)


def uniform(lo: float, hi: float) -> Dist:
    if not hi > lo:
        raise ValueError("need hi > lo")
    w = hi - lo
    return Dist(
        kind="continuous",
        cdf_fn=lambda v: (v - lo) / w,
        pdf_fn=lambda v: 1.0 / w if lo <= v <= hi else 0.0,
        quantile_fn=lambda q: lo + q * w,
        lo=lo,
        hi=hi,
        name="uniform",
        params=(("lo", lo), ("hi", hi)),
    )


def exponential_truncated(t: float) -> Dist:
    """Exponential truncated to [0, t], rescaled: cdf(v) = lam*(1 - e^{-v})."""
    if t <= 0:
        raise ValueError("t must be positive")
    lam = 1.0 / (1.0 - math.exp(-t))
    return Dist(
        kind="continuous",
        cdf_fn=lambda v: lam * (1.0 - math.exp(-v)),
        pdf_fn=lambda v: lam * math.exp(-v) if 0 <= v <= t else 0.0,
        quantile_fn=lambda q: -math.log(max(1.0 - q / lam, 1e-300)),
        lo=0.0,
        hi=t,
        name="exponential_truncated",
        params=(("t", t),),
    )


def exponential_truncated_reversed(t: float) -> Dist:
    """Mirror image of exponential_truncated about t/2: cdf(v) = lam*(e^{v-t} - e^{-t})."""
    if t <= 0:
        raise ValueError("t must be positive")
    lam = 1.0 / (1.0 - math.exp(-t))
    emt = math.exp(-t)
    return Dist(
        kind="continuous",
        cdf_fn=lambda v: lam * (math.exp(v - t) - emt),
        pdf_fn=lambda v: lam * math.exp(v - t) if 0 <= v <= t else 0.0,
        quantile_fn=lambda q: t + math.log(q / lam + emt),
        lo=0.0,
        hi=t,
        name="exponential_truncated_reversed",
        params=(("t", t),),
    )


_SQRT2 = math.sqrt(2.0)


def lognormal(mu: float, sigma: float) -> Dist:
    """Lognormal truncated (numerically) to its central 1-1e-12 quantile range."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    from scipy.special import erfinv

    def cdf_fn(v: float) -> float:
        if v <= 0:
            return 0.0
        return 0.5 * (1.0 + math.erf((math.log(v) - mu) / (sigma * _SQRT2)))

    def pdf_fn(v: float) -> float:
        if v <= 0:
            return 0.0
        z = (math.log(v) - mu) / sigma
        return math.exp(-0.5 * z * z) / (v * sigma * math.sqrt(2 * math.pi))

    def quantile_fn(q: float) -> float:
        q = min(max(q, 1e-16), 1.0 - 1e-16)
        return math.exp(mu + sigma * _SQRT2 * float(erfinv(2.0 * q - 1.0)))

    return Dist(
        kind="continuous",
        cdf_fn=cdf_fn,
        pdf_fn=pdf_fn,
        quantile_fn=quantile_fn,
        lo=quantile_fn(1e-12),
        hi=quantile_fn(1.0 - 1e-12),
        name="lognormal",
        params=(("mu", mu), ("sigma", sigma)),
    )


_BUILTINS: dict[str, Callable[..., Dist]] = {
    "uniform": uniform,
    "exponential_truncated": exponential_truncated,
    "exponential_truncated_reversed": exponential_truncated_reversed,
    "lognormal": lognormal,
}


def builtin(name: str, **params: float) -> Dist:
    if name not in _BUILTINS:
        raise ValueError(f"unknown builtin distribution {name!r}")
    return _BUILTINS[name](**params)


def dist_to_json(d: Dist) -> dict:
    if d.kind == "discrete":
        return {"kind": "discrete", "atoms": [[v, p] for v, p in zip(d.values, d.probs)]}
    if d.name in _BUILTINS:
        return {"kind": "builtin", "name": d.name, "params": dict(d.params)}
    raise ValueError("continuous Dist built from raw closures is not serializable")


def dist_from_json(obj: dict) -> Dist:
    if obj["kind"] == "discrete":
        vals = [a[0] for a in obj["atoms"]]
        ps = [a[1] for a in obj["atoms"]]
        return discrete(vals, ps)
    if obj["kind"] == "builtin":
        return builtin(obj["name"], **obj["params"])
    raise ValueError(f"unknown Dist kind {obj.get('kind')!r}")


# -- quantiles ------------------------------------------------------------


def quantile(d: Dist, q: float) -> float:
    """Generalized inverse cdf: inf{v : cdf(v) >= q}."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level {q} outside [0,1]")
    if d.kind == "discrete":
        cum = np.cumsum(d.probs)
        idx = int(np.searchsorted(cum, q - ATOL, side="left"))
        return d.values[min(idx, len(d.values) - 1)]
    if q <= 0.0:
        return d.lo
    return float(d.quantile_fn(min(q, 1.0)))


def upper_quantile(d: Dist, q: float) -> float:
    """Largest v in the support with Pr[X >= v] >= q."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"upper quantile level {q} outside (0,1]")
    if d.kind == "discrete":
        tails = 1.0 - np.concatenate(([0.0], np.cumsum(d.probs)[:-1]))
        ok = np.nonzero(tails >= q - ATOL)[0]
        return d.values[int(ok[-1])]
    return float(d.quantile_fn(max(0.0, 1.0 - q)))


# -- trade probability -----------------------------------------------------


def trade_probability(buyer: Dist, seller: Dist) -> float:
    """Pr[b >= s] for independent b ~ buyer, s ~ seller.

    Exact double sum for discrete x discrete, single sums when one side is
    discrete, numeric integration (abs error <= 1e-6) when both continuous.
    """
    if seller.kind == "discrete":
        svals = np.asarray(seller.values)
        sp = np.asarray(seller.probs)
        tails = np.array([buyer.tail(s) for s in svals])
        return float(np.dot(sp, tails))
    if buyer.kind == "discrete":
        bvals = np.asarray(buyer.values)
        bp = np.asarray(buyer.probs)
        # continuous seller: Pr[s <= b] = G(b)
        return float(np.dot(bp, [seller.cdf(b) for b in bvals]))
    lo = max(seller.lo, 0.0)
    val, _ = integrate.quad(
        lambda s: seller.pdf_fn(s) * (1.0 - buyer.cdf(s)),
        seller.lo,
        seller.hi,
        limit=200,
        epsabs=1e-9,
    )
    return float(min(1.0, max(0.0, val)))


# -- virtual values ---------------------------------------------------------


def _discrete_index(d: Dist, v: float) -> int:
    for k, val in enumerate(d.values):
        if abs(val - v) <= 1e-9 * max(1.0, abs(v)):
            return k
    raise ValueError(f"{v} is not a support point")


def buyer_virtual(d: Dist, b: float) -> float:
    """Myerson buyer virtual value phi(b) = b - (1-F(b))/f(b).

    Discrete convention: phi(v_k) = v_k - (v_{k+1}-v_k) * Pr[X > v_k] / f(v_k),
    with phi = value at the top atom.
    """
    if d.kind == "discrete":
        k = _discrete_index(d, b)
        if k == len(d.values) - 1:
            return d.values[k]
        above = float(np.sum(d.probs[k + 1:]))
        return d.values[k] - (d.values[k + 1] - d.values[k]) * above / d.probs[k]
    f = d.pdf(b)
    if f <= 0:
        raise ValueError(f"zero density at {b}; virtual value undefined")
    return b - (1.0 - d.cdf(b)) / f


def seller_virtual(d: Dist, s: float) -> float:
    """Myerson seller virtual cost tau(s) = s + G(s)/g(s).

    Discrete convention: tau(v_k) = v_k + (v_k - v_{k-1}) * Pr[X < v_k] / g(v_k),
    with tau = value at the bottom atom.
    """
    if d.kind == "discrete":
        k = _discrete_index(d, s)
        if k == 0:
            return d.values[0]
        below = float(np.sum(d.probs[:k]))
        return d.values[k] + (d.values[k] - d.values[k - 1]) * below / d.probs[k]
    g = d.pdf(s)
    if g <= 0:
        raise ValueError(f"zero density at {s}; virtual cost undefined")
    return s + d.cdf(s) / g


# -- ironing ----------------------------------------------------------------

IRON_GRID = 512  # discretization for continuous dists whose raw virtual is non-monotone


@dataclass(frozen=True)
class IronedVirtual:
    """phi-tilde / tau-tilde as a nondecreasing function of the agent's value.

    ``grid_values`` are support points (all atoms for discrete inputs, a
    quantile grid for ironed continuous ones) and ``grid_virtuals`` the ironed
    virtual value on each. ``exact`` marks the case where ironing was the
    identity and the closed-form unironed function is used directly.
    """

    side: str
    dist: Dist
    grid_values: tuple[float, ...]
    grid_virtuals: tuple[float, ...]
    exact: bool

    def __call__(self, v: float) -> float:
        if self.exact and self.dist.kind == "continuous":
            fn = buyer_virtual if self.side == "buyer" else seller_virtual
            return fn(self.dist, float(np.clip(v, *self.dist.support())))
        vals = np.asarray(self.grid_values)
        if self.side == "buyer":
            # value of the largest grid point <= v (grid covers the support)
            idx = int(np.searchsorted(vals, v + 1e-9, side="right")) - 1
            idx = max(idx, 0)
        else:
            idx = int(np.searchsorted(vals, v - 1e-9, side="left"))
            idx = min(idx, len(vals) - 1)
        return self.grid_virtuals[idx]

    def at_atoms(self) -> np.ndarray:
        return np.asarray(self.grid_virtuals)


def _iron_discrete(values: np.ndarray, probs: np.ndarray, side: str) -> np.ndarray:
    """Hull of the cumulative virtual value in quantile space.

    Buyer: upper concave hull of the revenue curve points (tail_k, tail_k*v_k)
    plus the origin; segment slopes read off phi-tilde at each atom. Seller:
    lower convex hull of (cum_k, cum_k*v_k). Monotone-chain, ties kept left.
    """
    k = len(values)
    if side == "buyer":
        tails = 1.0 - np.concatenate(([0.0], np.cumsum(probs)[:-1]))  # Pr[X >= v_k]
        xs = np.concatenate(([0.0], tails[::-1]))  # increasing quantile axis
        ys = np.concatenate(([0.0], (tails * values)[::-1]))
        hull_y = _hull(xs, ys, upper=True)
        # slope over [tail_{k+1}, tail_k] is phi-tilde(v_k); reverse back
        slopes = np.diff(hull_y) / np.diff(xs)
        return slopes[::-1].copy()
    cums = np.cumsum(probs)  # Pr[X <= v_k]
    xs = np.concatenate(([0.0], cums))
    ys = np.concatenate(([0.0], cums * values))
    hull_y = _hull(xs, ys, upper=False)
    return (np.diff(hull_y) / np.diff(xs)).copy()


def _hull(xs: np.ndarray, ys: np.ndarray, upper: bool) -> np.ndarray:
    """y-values of the upper concave (or lower convex) hull sampled at xs."""
    pts: list[tuple[float, float]] = []
    sign = 1.0 if upper else -1.0
    for x, y in zip(xs, sign * ys):
        while len(pts) >= 2:
            (x1, y1), (x2, y2) = pts[-2], pts[-1]
            # pop while the middle point is not above the chord
            if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1) + 1e-15:
                pts.pop()
            else:
                break
        pts.append((x, y))
    hx = np.array([p[0] for p in pts])
    hy = np.array([p[1] for p in pts])
    return sign * np.interp(xs, hx, hy)


def iron(d: Dist, side: str) -> IronedVirtual:
    """Ironed virtual value (buyer) or virtual cost (seller).

    Equals the raw function wherever it is already monotone; otherwise the
    constant-on-quantile-intervals hull version. Continuous dists are checked
    for monotonicity on a quantile grid and ironed on that grid if needed.
    """
    if side not in ("buyer", "seller"):
        raise ValueError("side must be 'buyer' or 'seller'")
    if d.kind == "discrete":
        vals = np.asarray(d.values)
        ironed = _iron_discrete(vals, np.asarray(d.probs), side)
        return IronedVirtual(side, d, tuple(vals), tuple(ironed), exact=_is_monotone_match(d, side, ironed))
    # continuous: probe the raw virtual on an interior quantile grid
    qs = (np.arange(IRON_GRID) + 0.5) / IRON_GRID
    vals = np.array([d.quantile_fn(q) for q in qs])
    fn = buyer_virtual if side == "buyer" else seller_virtual
    raw = np.array([fn(d, v) for v in vals])
    if np.all(np.diff(raw) >= -1e-9):
        return IronedVirtual(side, d, tuple(vals), tuple(raw), exact=True)
    probs = np.full(IRON_GRID, 1.0 / IRON_GRID)
    ironed = _iron_discrete(vals, probs, side)
    return IronedVirtual(side, d, tuple(vals), tuple(ironed), exact=False)


def _is_monotone_match(d: Dist, side: str, ironed: np.ndarray) -> bool:
    fn = buyer_virtual if side == "buyer" else seller_virtual
    raw = np.array([fn(d, v) for v in d.values])
    return bool(np.allclose(raw, ironed, atol=1e-9, rtol=1e-9))


# -- quantile ladders and the pair check ------------------------------------


def quantile_ladder(d: Dist, r: float, side: str) -> list[float]:
    """Prices theta_j at tail (buyer) or cdf (seller) level 2^-j, j=1..ceil(log2(2/r))."""
    if not 0.0 < r <= 1.0:
        raise ValueError(f"trade probability {r} outside (0,1]")
    levels = math.ceil(math.log2(2.0 / r) - 1e-12)
    out = []
    for j in range(1, levels + 1):
        q = 2.0 ** (-j)
        out.append(upper_quantile(d, q) if side == "buyer" else quantile(d, q))
    return out


def quantile_pair_check(buyer: Dist, seller: Dist) -> tuple[float, float, bool]:
    """x = buyer upper r/2-quantile, y = seller r/2-quantile, and x >= y.

    The comparison holds for every pair with r > 0 under this module's
    quantile conventions; exposing it keeps that fact a testable property.
    """
    r = trade_probability(buyer, seller)
    if r <= 0:
        raise ValueError("trade probability is zero; pair check undefined")
    x = upper_quantile(buyer, r / 2.0)
    y = quantile(seller, r / 2.0)
    return x, y, bool(x >= y - 1e-9)
