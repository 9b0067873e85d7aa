"""Quantization noise optimization for Wyner-Ziv backhaul compression.

Two routes are provided:

* :func:`aco_optimize` alternates a convex problem in the quantization
  levels (solved by a log-barrier Newton method) with the closed-form update
  of the linearization point.  Each round cannot decrease the weighted sum
  rate, so the trace is monotone.
* :func:`approx_alpha` sets ``q_i = alpha * sigma2_i`` and picks ``alpha`` by
  bisection so the backhaul constraint is met with equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, SolverError
from .linalg import LN2, cholesky, logdet
from .rates import (
    ChannelState,
    QuantizationProfile,
    _q,
    decoding_order,
    weighted_sum_rate,
    wz_backhaul_usage,
)


@dataclass(frozen=True)
class AcoSettings:
    max_outer_iters: int = 100
    objective_tol: float = 1e-4
    inner_tol: float = 1e-8
    q_floor: float | None = None  # default 1e-12 * mean(sigma2)
    barrier_init: float = 1.0
    barrier_factor: float = 0.2
    max_newton_iters: int = 60

    def __post_init__(self):
        for name in ("max_outer_iters", "objective_tol", "inner_tol", "max_newton_iters"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.q_floor is not None and not self.q_floor > 0:
            raise ValueError("q_floor must be positive")
        if not 0 < self.barrier_factor < 1:
            raise ValueError("barrier_factor must lie in (0, 1)")

    def floor_for(self, cs: ChannelState) -> float:
        if self.q_floor is not None:
            return self.q_floor
        return 1e-12 * float(np.mean(cs.sigma2))


@dataclass(frozen=True)
class AcoStep:
    iteration: int
    objective: float
    backhaul: float
    q: np.ndarray


@dataclass
class AcoTrace:
    steps: list[AcoStep] = field(default_factory=list)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([s.objective for s in self.steps])

    def __len__(self):
        return len(self.steps)


def fenchel_gap(Omega, Sigma) -> float:
    """``log|Sigma| + Tr(Sigma^-1 Omega) - n - log|Omega|`` in nats (always >= 0)."""
    Omega = np.asarray(Omega)
    Sigma = np.asarray(Sigma)
    if Omega.shape != Sigma.shape:
        raise ValueError(f"dimension mismatch: {Omega.shape} vs {Sigma.shape}")
    n = Omega.shape[0]
    Ls = cholesky(Sigma)
    X = np.linalg.solve(Ls, Omega)
    tr = np.real(np.trace(np.linalg.solve(Ls.conj().T, X)))
    return float(logdet(Sigma) + tr - n - logdet(Omega))


def closed_form_sigma(cs: ChannelState, qp) -> np.ndarray:
    """Minimizer of ``log|S| + Tr(S^-1 (diag(sigma2) + Lambda_q))``: the matrix itself."""
    q = _q(qp)
    return np.diag(cs.sigma2 + q)


class _WeightedProblem:
    """Problem data in units where ``mean(sigma2) == 1`` and ``max(mu) == 1``."""

    def __init__(self, cs: ChannelState, weights, C: float):
        mu = np.asarray(weights, dtype=float).ravel()
        if mu.shape != (cs.U,):
            raise ValueError(f"expected {cs.U} weights, got {mu.shape}")
        if np.any(mu < 0):
            raise ValueError("weights must be nonnegative")
        if not C > 0:
            raise ValueError("backhaul budget must be positive")
        self.scale = float(np.mean(cs.sigma2))
        self.s2 = cs.sigma2 / self.scale
        order = decoding_order(mu)
        ms = mu[order]
        self.mu_max = float(ms[-1]) if ms.size else 0.0
        if self.mu_max == 0:
            raise ValueError("at least one weight must be positive")
        dw = np.diff(np.concatenate([[0.0], ms])) / self.mu_max
        # term 0 always kept: it also defines the backhaul constraint
        keep = np.flatnonzero(dw > 0)
        if keep.size == 0 or keep[0] != 0:
            keep = np.concatenate([[0], keep])
        self.w = dw[keep]
        H = cs.H[:, order]
        P = cs.P[order] / self.scale
        outer = np.einsum("iu,ju->uij", H * P, H.conj())
        suffix = np.cumsum(outer[::-1], axis=0)[::-1]
        A = suffix[keep] + np.diag(self.s2)
        self.A = 0.5 * (A + np.swapaxes(A.conj(), -1, -2))
        self.c = float(C) * LN2
        self.L = cs.L

    def evaluate(self, q, sig, need_hess=True, need_grad=True):
        """Objective, constraint and derivatives at (scaled) ``q``."""
        M = self.A + np.diag(q)
        Lc = cholesky(M)
        ld = 2.0 * np.sum(np.log(np.real(np.diagonal(Lc, axis1=-2, axis2=-1))), axis=-1)
        if not need_grad:
            f = self.w @ ld - np.sum((self.s2 + q) / sig)
            return f, None, ld[0] - np.sum(np.log(q)), None, None, None
        Linv = np.linalg.inv(Lc)
        Minv = np.swapaxes(Linv.conj(), -1, -2) @ Linv
        dg = np.real(np.diagonal(Minv, axis1=-2, axis2=-1))
        f = self.w @ ld - np.sum((self.s2 + q) / sig)
        gf = self.w @ dg - 1.0 / sig
        g = ld[0] - np.sum(np.log(q))
        gg = dg[0] - 1.0 / q
        if not need_hess:
            return f, gf, g, gg, None, None
        sq = np.abs(Minv) ** 2
        Hf = -np.tensordot(self.w, sq, axes=1)
        Hg = -sq[0] + np.diag(1.0 / q ** 2)
        return f, gf, g, gg, Hf, Hg


def _fit_multiplier(q, grad_obj, grad_con, nu=0.0):
    """Nonnegative least-squares multiplier and scaled stationarity residual."""
    a, b = q * grad_con, q * (grad_obj + nu)
    lam = max(float(a @ b) / float(a @ a), 0.0) if a @ a > 0 else 0.0
    return lam, float(np.max(np.abs(b - lam * a)))


def _barrier_value(prob, q, sig, tau, floor, need_hess=True, need_grad=True):
    try:
        f, gf, g, gg, Hf, Hg = prob.evaluate(q, sig, need_hess, need_grad)
    except ValueError:
        return None
    slack = prob.c - g
    if slack <= 0 or np.any(q <= floor):
        return None
    phi = f + tau * (np.log(slack) + np.sum(np.log(q - floor)))
    if not need_hess:
        return phi, None, None, (f, gf, g, gg)
    grad = gf - tau * gg / slack + tau / (q - floor)
    hess = Hf - tau * Hg / slack - tau * np.outer(gg, gg) / slack ** 2 - np.diag(tau / (q - floor) ** 2)
    return phi, grad, hess, (f, gf, g, gg)


def _feasible_start(prob, q0, floor):
    q = np.maximum(np.asarray(q0, dtype=float), 2 * floor + 1e-300)
    for _ in range(2000):
        try:
            ld = logdet(prob.A[0] + np.diag(q))
            if prob.c - (ld - np.sum(np.log(q))) >= 0.01 * prob.c:
                return q
        except ValueError:
            pass
        q = 2.0 * q
    raise InfeasibleError("could not find a strictly feasible starting point")


def _solve_scaled(prob, sig, q0, settings: AcoSettings, floor):
    q = _feasible_start(prob, q0, floor)
    m = prob.L + 1
    tau = settings.barrier_init
    while True:
        for _ in range(settings.max_newton_iters):
            val = _barrier_value(prob, q, sig, tau, floor)
            if val is None:  # pragma: no cover - guarded by line search
                raise SolverError("barrier iterate left the feasible region")
            phi, grad, hess, _ = val
            # Newton system in diag(q)-scaled coordinates
            Dq = q
            Hs = hess * np.outer(Dq, Dq)
            try:
                step = -np.linalg.solve(Hs, grad * Dq) * Dq
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"singular Newton system: {exc}") from exc
            dec2 = float(grad @ step)
            if dec2 <= 0 or dec2 / 2 <= 1e-13:
                break
            t = 1.0
            while True:
                qn = q + t * step
                if np.all(qn > floor):
                    nv = _barrier_value(prob, qn, sig, tau, floor, need_hess=False, need_grad=False)
                    if nv is not None and nv[0] >= phi + 1e-4 * t * dec2:
                        break
                t *= 0.5
                if t < 1e-14:
                    nv = None
                    break
            if nv is None:
                break
            q = qn
        if m * tau < settings.inner_tol:
            break
        tau *= settings.barrier_factor
    f, gf, g, gg = _barrier_value(prob, q, sig, tau, floor, need_hess=False)[3]
    # tau / slack is ill-conditioned near the boundary; fit the multiplier instead
    lam, stationarity = _fit_multiplier(q, gf, gg, tau / (q - floor))
    return q, {
        "multiplier": float(lam),
        "kkt_residual": max(stationarity, m * tau),
        "objective_nats": float(f),
    }


def inner_convex_solve(
    cs: ChannelState,
    weights,
    Sigma,
    C: float,
    settings: AcoSettings | None = None,
    q_start=None,
) -> QuantizationProfile:
    """Maximize the linearized weighted rate over ``q`` with ``Sigma`` held fixed.

    ``Sigma`` is the diagonal linearization point (vector or diagonal
    matrix).  The problem is concave in ``q`` with a convex backhaul
    constraint, solved by a barrier method with Newton steps.  ``info`` of the
    returned profile holds ``multiplier`` (backhaul dual, in normalized-weight
    nats) and ``kkt_residual``.
    """
    settings = settings or AcoSettings()
    prob = _WeightedProblem(cs, weights, C)
    Sigma = np.asarray(Sigma)
    sig = np.real(np.diag(Sigma)) if Sigma.ndim == 2 else Sigma.astype(float)
    if sig.shape != (cs.L,) or np.any(sig <= 0):
        raise ValueError("Sigma must be a positive diagonal of size L")
    sig = sig / prob.scale
    floor = settings.floor_for(cs) / prob.scale
    q0 = np.ones(cs.L) if q_start is None else _q(q_start) / prob.scale
    q, info = _solve_scaled(prob, sig, q0, settings, floor)
    return QuantizationProfile(q * prob.scale, info=info)


def aco_optimize(
    cs: ChannelState,
    weights,
    C: float,
    settings: AcoSettings | None = None,
    gamma: float | None = None,
) -> tuple[QuantizationProfile, AcoTrace]:
    """Alternating convex optimization of the weighted sum rate.

    Starts from ``Lambda_q = Sigma = gamma * I`` (``gamma`` defaults to the
    mean background noise).  Stops when a round improves the weighted sum
    rate by less than ``objective_tol * max(weights)`` bits, or after
    ``max_outer_iters`` rounds.
    """
    settings = settings or AcoSettings()
    mu = np.asarray(weights, dtype=float)
    gamma = float(np.mean(cs.sigma2)) if gamma is None else float(gamma)
    sig = np.full(cs.L, gamma)
    q = np.full(cs.L, gamma)
    trace = AcoTrace()
    best = None
    mu_max = float(np.max(mu)) if mu.size else 0.0
    for it in range(1, settings.max_outer_iters + 1):
        prof = inner_convex_solve(cs, mu, sig, C, settings, q_start=q)
        obj = weighted_sum_rate(cs, prof, mu)
        if best is not None and obj < trace.steps[-1].objective:
            # inner tolerance noise; keep the better iterate and stop
            break
        trace.steps.append(AcoStep(it, obj, wz_backhaul_usage(cs, prof), prof.q.copy()))
        prev = best
        best = prof
        q = prof.q
        sig = cs.sigma2 + q
        if prev is not None and obj - trace.steps[-2].objective < settings.objective_tol * mu_max:
            break
    q_final = _exhaust_budget(cs, best.q, C)
    # stationarity of the original problem: linearize at Sigma = D
    prob = _WeightedProblem(cs, mu, C)
    qs = q_final / prob.scale
    _, gf, g, gg, _, _ = prob.evaluate(qs, prob.s2 + qs, need_hess=False)
    lam, resid = _fit_multiplier(qs, gf, gg)
    info = dict(best.info, multiplier=lam, kkt_residual=resid, outer_iters=len(trace))
    return QuantizationProfile(q_final, info=info), trace


def _exhaust_budget(cs: ChannelState, q: np.ndarray, C: float, tol: float = 1e-10) -> np.ndarray:
    """Shrink ``q`` uniformly until the backhaul budget is met with equality.

    The barrier keeps iterates strictly feasible; less quantization noise
    never lowers any SIC rate, so spending the leftover budget is free.
    """
    if C - wz_backhaul_usage(cs, q) <= tol:
        return q
    lo = 0.5
    while wz_backhaul_usage(cs, lo * q) <= C:
        lo *= 0.5
        if lo < 1e-300:  # pragma: no cover
            return q
    t = _bisect_decreasing(lambda t: wz_backhaul_usage(cs, t * q), C, lo, 1.0, tol)
    return t * q


def cwz_of_alpha(cs: ChannelState, alpha: float) -> float:
    """Wyner-Ziv backhaul usage (bits) with ``q_i = alpha * sigma2_i``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return wz_backhaul_usage(cs, alpha * cs.sigma2)


def _bisect_decreasing(fun, target, lo, hi, tol, max_iter=5000):
    """Solve ``fun(x) = target`` for decreasing ``fun`` on ``[lo, hi]``."""
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        val = fun(mid)
        if abs(val - target) <= tol:
            return mid
        if best is None or abs(val - target) < abs(best[1] - target):
            best = (mid, val)
        if val > target:
            lo = mid
        else:
            hi = mid
    raise SolverError(
        f"bisection stalled at x={best[0]:.6g}, residual {best[1] - target:.3g} > tol {tol:.3g}"
    )


def approx_alpha(cs: ChannelState, C: float, tol: float = 1e-9) -> tuple[float, QuantizationProfile]:
    """Proportional quantization ``q = alpha * sigma2`` meeting ``C_WZ(alpha) = C``."""
    if not C > 0:
        raise ValueError("backhaul budget must be positive")
    tiny = np.finfo(float).tiny
    if cwz_of_alpha(cs, tiny) <= C:
        # budget beyond what double precision can spend: q is effectively 0
        return tiny, QuantizationProfile(tiny * cs.sigma2, info={"alpha": tiny, "saturated": True})
    alpha = 1.0
    while cwz_of_alpha(cs, alpha) > C:
        alpha *= 2.0
    alpha = _bisect_decreasing(lambda a: cwz_of_alpha(cs, a), C, 0.0, alpha, tol)
    return alpha, QuantizationProfile(alpha * cs.sigma2, info={"alpha": alpha})


def wz_sum_rate_kkt_residual(cs: ChannelState, qp, lam: float) -> np.ndarray:
    """Per-BS residual of the sum-rate stationarity condition for dual ``lam``.

    ``(1 - lam) diag((H K_X H^H + D)^-1) - D^-1 + lam / q`` with
    ``D = diag(sigma2) + Lambda_q``.
    """
    if not 0 <= lam < 1:
        raise ValueError("lam must lie in [0, 1)")
    q = _q(qp)
    if np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise ValueError("residual needs finite positive quantization levels")
    D = cs.sigma2 + q
    M = cs.covariance() + np.diag(D)
    Lc = cholesky(M)
    Linv = np.linalg.inv(Lc)
    dinv = np.sum(np.abs(Linv) ** 2, axis=0)
    return (1 - lam) * dinv - 1.0 / D + lam / q
