"""Backhaul allocation for single-user (per-BS) compression.

With independent per-BS compression, the quantization level of BS ``i`` is
in one-to-one correspondence with its backhaul rate ``C_i``, so the problem
is posed over the polyhedron ``{C_i >= 0, sum C_i <= C}``.  The combined
noise enters through ``upsilon_i = 1 / (sigma2_i + q_i)``, which stays finite
(zero) when a BS gets no backhaul.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .linalg import LN2, cholesky
from .rates import ChannelState, QuantizationProfile, decoding_order, sum_rate


@dataclass(frozen=True)
class BackhaulAllocation:
    C_i: np.ndarray
    budget: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.C_i, dtype=float))
        if np.any(c < 0) or np.any(np.isnan(c)):
            raise ValueError("backhaul rates must be nonnegative")
        object.__setattr__(self, "C_i", c)

    @property
    def total(self) -> float:
        return float(np.sum(self.C_i))


@dataclass(frozen=True)
class TierSpec:
    member_indices: tuple[int, ...]
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "member_indices", tuple(int(i) for i in self.member_indices))
        if self.budget < 0:
            raise ValueError("tier budget must be nonnegative")


@dataclass(frozen=True)
class SuSettings:
    max_iters: int = 2000
    tol: float = 1e-6
    n_random_starts: int = 5
    seed: int = 0


def _check_partition(tiers, L: int) -> None:
    seen = sorted(i for t in tiers for i in t.member_indices)
    if seen != list(range(L)):
        raise ValueError("tiers must partition the BS index set")


def _alloc_array(cs: ChannelState, alloc) -> np.ndarray:
    c = alloc.C_i if isinstance(alloc, BackhaulAllocation) else np.asarray(alloc, dtype=float)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (cs.L,):
        raise ValueError(f"expected {cs.L} backhaul rates, got {c.shape}")
    if np.any(c < 0):
        raise ValueError("backhaul rates must be nonnegative")
    return c


def q_from_backhaul(cs: ChannelState, alloc) -> QuantizationProfile:
    """Quantization levels whose per-BS compression rate equals ``C_i``.

    ``C_i = 0`` maps to ``q_i = inf`` (BS disconnected).
    """
    c = _alloc_array(cs, alloc)
    with np.errstate(divide="ignore"):
        q = (cs.received_power + cs.sigma2) / np.expm1(c * LN2)
    return QuantizationProfile(q)


def gamma_from_backhaul(cs: ChannelState, alloc) -> np.ndarray:
    """Combined quantization plus background noise ``sigma2_i + q_i``."""
    c = _alloc_array(cs, alloc)
    x = np.exp2(c)
    with np.errstate(divide="ignore"):
        return (cs.received_power + cs.sigma2 * x) / np.expm1(c * LN2)


def _upsilon(S, s2, c):
    x = np.exp2(c)
    return np.expm1(c * LN2) / (S + s2 * x)


def _dupsilon(S, s2, c):
    x = np.exp2(c)
    return (S + s2) * x * LN2 / (S + s2 * x) ** 2


class _SuProblem:
    def __init__(self, cs: ChannelState, weights):
        mu = np.asarray(weights, dtype=float).ravel()
        if mu.shape != (cs.U,):
            raise ValueError(f"expected {cs.U} weights, got {mu.shape}")
        if np.any(mu < 0):
            raise ValueError("weights must be nonnegative")
        order = decoding_order(mu)
        ms = mu[order]
        dw = np.diff(np.concatenate([[0.0], ms]))
        keep = np.flatnonzero(dw > 0)
        self.w = dw[keep]
        H = cs.H[:, order]
        outer = np.einsum("iu,ju->uij", H * cs.P[order], H.conj())
        B = np.cumsum(outer[::-1], axis=0)[::-1][keep]
        self.B = 0.5 * (B + np.swapaxes(B.conj(), -1, -2))
        self.S = cs.received_power
        self.s2 = cs.sigma2
        self.L = cs.L

    def value(self, c, grad=True):
        """Objective in bits and its gradient w.r.t. ``C_i``."""
        if self.w.size == 0:
            return 0.0, np.zeros(self.L)
        u = _upsilon(self.S, self.s2, c)
        r = np.sqrt(u)
        R = r[:, None] * self.B
        M = R * r[None, :] + np.eye(self.L)
        Lc = cholesky(M)
        ld = 2.0 * np.sum(np.log(np.real(np.diagonal(Lc, axis1=-2, axis2=-1))), axis=-1)
        F = float(self.w @ ld) / LN2
        if not grad:
            return F, None
        Z = np.linalg.solve(Lc, R)
        d = np.real(np.diagonal(self.B, axis1=-2, axis2=-1)) - np.sum(np.abs(Z) ** 2, axis=-2)
        g = (self.w @ d) * _dupsilon(self.S, self.s2, c) / LN2
        return F, g


def su_allocation_objective(cs: ChannelState, weights, alloc) -> float:
    """Weighted sum rate (bits) as a function of the backhaul allocation."""
    c = _alloc_array(cs, alloc)
    if isinstance(alloc, BackhaulAllocation) and c.sum() > alloc.budget + 1e-9:
        raise ValueError("allocation exceeds its budget")
    return _SuProblem(cs, weights).value(c, grad=False)[0]


def project_capped_simplex(y: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x <= budget}``."""
    z = np.maximum(y, 0.0)
    if z.sum() <= budget:
        return z
    if budget <= 0:
        return np.zeros_like(z)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - budget
    k = np.arange(1, y.size + 1)
    hits = np.nonzero(u - css / k > 0)[0]
    rho = hits[-1] if hits.size else 0  # tiny budgets can round every margin to 0
    theta = css[rho] / (rho + 1)
    return np.maximum(y - theta, 0.0)


def _project(y, groups):
    out = np.empty_like(y)
    for idx, b in groups:
        out[idx] = project_capped_simplex(y[idx], b)
    return out


def _ascend(prob, x, groups, settings: SuSettings, scale: float):
    F, g = prob.value(x)
    t = 1.0 / max(np.max(np.abs(g)) / scale, 1e-12)
    for _ in range(settings.max_iters):
        pg = _project(x + g / scale, groups) - x
        if np.max(np.abs(pg)) <= settings.tol:
            break
        while True:
            xn = _project(x + t * g, groups)
            Fn, gn = prob.value(xn)
            if Fn >= F + 1e-4 * float(g @ (xn - x)):
                break
            t *= 0.5
            if t < 1e-16:
                return x, F
        s, y = xn - x, gn - g
        sy = float(s @ y)
        t = float(s @ s) / -sy if sy < 0 else 2.0 * t
        x, F, g = xn, Fn, gn
    return x, F


def su_allocation_optimize(
    cs: ChannelState,
    weights,
    C: float | None = None,
    settings: SuSettings | None = None,
    tiers: list[TierSpec] | None = None,
    starts=(),
) -> BackhaulAllocation:
    """Local maximizer of the weighted sum rate over backhaul allocations.

    Projected gradient ascent with Armijo backtracking (Barzilai-Borwein trial
    steps), from the uniform split, ``n_random_starts`` Dirichlet splits and
    any caller-supplied ``starts``; the best objective wins.  With ``tiers``
    each tier has its own sum budget and ``C`` is ignored.
    """
    settings = settings or SuSettings()
    if tiers is None:
        if C is None or not C > 0:
            raise ValueError("backhaul budget must be positive")
        tiers = [TierSpec(tuple(range(cs.L)), C)]
    _check_partition(tiers, cs.L)
    groups = [(np.array(t.member_indices, dtype=int), float(t.budget)) for t in tiers]
    budget = float(sum(b for _, b in groups))
    prob = _SuProblem(cs, weights)
    scale = max(float(np.max(weights)), 1e-300)
    rng = np.random.default_rng(settings.seed)

    cands = []
    x0 = np.zeros(cs.L)
    for idx, b in groups:
        x0[idx] = b / idx.size
    cands.append(x0)
    for _ in range(settings.n_random_starts):
        x = np.zeros(cs.L)
        for idx, b in groups:
            x[idx] = rng.dirichlet(np.ones(idx.size)) * b
        cands.append(x)
    for s in starts:
        cands.append(_project(np.asarray(getattr(s, "C_i", s), dtype=float), groups))

    best = None
    for x in cands:
        xs, Fs = _ascend(prob, x, groups, settings, scale)
        if best is None or Fs > best[1]:
            best = (xs, Fs)
    if best is None:  # pragma: no cover
        raise SolverError("no start produced a solution")
    return BackhaulAllocation(best[0], budget)


def _csu(snr, beta):
    return np.sum(_csu_terms(snr, beta))


def _csu_terms(snr, beta):
    # log2((1-beta)/beta snr + 1/beta), written to avoid overflow as beta -> 0
    return np.log2((1.0 - beta) * snr + 1.0) - np.log2(beta)


def approx_beta(
    cs: ChannelState, tier: TierSpec, tol: float = 1e-9
) -> tuple[float, BackhaulAllocation, QuantizationProfile]:
    """Proportional quantization for one tier, ``q_i = beta/(1-beta) sigma2_i``.

    ``beta`` solves ``sum_i log2((1-beta)/beta SNR_i + 1/beta) = budget`` by
    bisection on ``[0, 1]``.  BSs whose rate would come out negative are
    dropped and the bisection repeated.  Entries outside the tier are
    ``C_i = 0`` and ``q_i = inf``.
    """
    members = np.array(tier.member_indices, dtype=int)
    snr = cs.received_power / cs.sigma2
    C_i = np.zeros(cs.L)
    q = np.full(cs.L, np.inf)
    if tier.budget == 0 or members.size == 0:
        return 1.0, BackhaulAllocation(C_i, tier.budget), QuantizationProfile(q)
    active = members
    tiny = np.finfo(float).tiny
    if _csu(snr[members], tiny) <= tier.budget:
        # budget beyond what double precision can spend; leave the slack
        C_i[members] = _csu_terms(snr[members], tiny)
        q[members] = tiny * cs.sigma2[members]
        return tiny, BackhaulAllocation(C_i, tier.budget), QuantizationProfile(q, info={"beta": tiny, "saturated": True})
    for _ in range(members.size + 1):
        lo, hi = 0.0, 1.0
        beta = None
        for _ in range(5000):
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
            val = _csu(snr[active], mid)
            if abs(val - tier.budget) <= tol:
                beta = mid
                break
            if val > tier.budget:
                lo = mid
            else:
                hi = mid
        if beta is None:
            raise SolverError("beta bisection did not reach tolerance")
        c = _csu_terms(snr[active], beta)
        if np.all(c >= 0):
            break
        active = active[c >= 0]
    C_i[active] = c
    q[active] = beta / (1.0 - beta) * cs.sigma2[active]
    return beta, BackhaulAllocation(C_i, tier.budget), QuantizationProfile(q, info={"beta": beta})


@dataclass
class HetnetAllocation:
    betas: list[float]
    allocation: BackhaulAllocation
    profile: QuantizationProfile
    tier_allocations: list[BackhaulAllocation] = field(default_factory=list)


def _merge(cs, tiers, results):
    C_i = np.zeros(cs.L)
    q = np.full(cs.L, np.inf)
    for t, (_, a, p) in zip(tiers, results):
        idx = list(t.member_indices)
        C_i[idx] = a.C_i[idx]
        q[idx] = p.q[idx]
    budget = float(sum(t.budget for t in tiers))
    return BackhaulAllocation(C_i, budget), QuantizationProfile(q)


def hetnet_allocate(cs: ChannelState, tiers: list[TierSpec], tol: float = 1e-9) -> HetnetAllocation:
    """Run the proportional-q bisection independently in every tier."""
    _check_partition(tiers, cs.L)
    results = [approx_beta(cs, t, tol) for t in tiers]
    alloc, prof = _merge(cs, tiers, results)
    return HetnetAllocation([r[0] for r in results], alloc, prof, [r[1] for r in results])


@dataclass
class CoupledSplit:
    c_macro: float
    c_pico: float
    sum_rate: float
    allocation: HetnetAllocation


def hetnet_coupled_allocate(
    cs: ChannelState,
    tiers: list[TierSpec],
    C_total: float,
    C_p_cap: float,
    grid: int = 21,
    tol: float = 1e-9,
) -> CoupledSplit:
    """Best split of ``C_total`` between a macro tier and a capped pico tier.

    ``tiers`` is ``[macro, pico]``; their own budgets are ignored.  A grid
    over the pico share is refined by golden-section search around the best
    grid point.
    """
    if C_p_cap > C_total:
        raise ValueError("pico cap cannot exceed the total budget")
    macro, pico = tiers

    def evaluate(cp):
        cp = min(max(cp, 0.0), C_p_cap)
        ts = [TierSpec(macro.member_indices, C_total - cp), TierSpec(pico.member_indices, cp)]
        h = hetnet_allocate(cs, ts, tol)
        return sum_rate(cs, h.profile), h, cp

    pts = np.linspace(0.0, C_p_cap, max(int(grid), 1)) if C_p_cap > 0 else np.array([0.0])
    vals = [evaluate(p) for p in pts]
    k = int(np.argmax([v[0] for v in vals]))
    best = vals[k]
    if pts.size > 2:
        a = pts[max(k - 1, 0)]
        b = pts[min(k + 1, pts.size - 1)]
        ratio = (np.sqrt(5.0) - 1.0) / 2.0
        x1, x2 = b - ratio * (b - a), a + ratio * (b - a)
        f1, f2 = evaluate(x1), evaluate(x2)
        for _ in range(60):
            if b - a < 1e-9 * max(C_total, 1.0):
                break
            if f1[0] >= f2[0]:
                b, x2, f2 = x2, x1, f1
                x1 = b - ratio * (b - a)
                f1 = evaluate(x1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + ratio * (b - a)
                f2 = evaluate(x2)
        for cand in (f1, f2):
            if cand[0] > best[0]:
                best = cand
    rate, h, cp = best
    return CoupledSplit(C_total - cp, cp, rate, h)


def su_kkt_residual(cs: ChannelState, alloc, beta: float) -> np.ndarray:
    """High-SQNR optimality residual per BS; ``nan`` where ``C_i = 0``."""
    c = _alloc_array(cs, alloc)
    S = cs.received_power
    out = (S + cs.sigma2) / (S + cs.sigma2 * np.exp2(c)) - beta
    return np.where(c > 0, out, np.nan)
