"""Constant-gap certificates against the cut-set bound.

Both certificates quantize at ``q = alpha * sigma2`` with ``alpha = 1`` when
the budget is large and ``alpha > 1`` chosen to exhaust the budget otherwise,
then compare the achieved sum rate with ``min(MAC cut, C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .rates import ChannelState, cutset_bound, su_backhaul_usage, sum_rate, wz_backhaul_usage

BISECT_TOL = 1e-9


@dataclass(frozen=True)
class GapCertificate:
    scheme: str  # "wz" or "su"
    L: int
    status: str  # "ok" or "inapplicable"
    regime: str  # "large-C" or "small-C"; "" when inapplicable
    alpha: float
    cutset: float
    achieved: float
    gap: float
    bound: float
    kappa: float = math.inf
    usage: float = math.nan

    @property
    def passed(self) -> bool:
        if self.status != "ok":
            return True
        return -1e-9 <= self.gap < self.bound

    @property
    def conditional_loss(self) -> float:
        """``L log2(1 + 1/alpha)``: usage minus achieved rate for WZ at ``q = alpha sigma2``."""
        return math.nan if math.isnan(self.alpha) else self.L * math.log2(1.0 + 1.0 / self.alpha)


def _alpha_for(usage, C) -> float:
    """Bisection for ``usage(alpha) = C`` with ``alpha > 1``; usage is decreasing."""
    hi = 2.0
    while usage(hi) >= C:
        hi *= 2.0
        if hi > 1e300:  # pragma: no cover
            raise SolverError("could not bracket alpha")
    lo = 1.0
    for _ in range(5000):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        val = usage(mid)
        if abs(val - C) <= BISECT_TOL:
            return mid
        if val > C:
            lo = mid
        else:
            hi = mid
    raise SolverError("alpha bisection did not reach tolerance")


def wz_gap_certificate(cs: ChannelState, C: float) -> GapCertificate:
    """Certificate that proportional quantization is within ``L`` bits of the cut-set bound."""
    if not C > 0:
        raise ValueError("backhaul budget must be positive")
    usage = lambda a: wz_backhaul_usage(cs, a * cs.sigma2)
    if C >= usage(1.0):
        alpha, regime = 1.0, "large-C"
    else:
        alpha, regime = _alpha_for(usage, C), "small-C"
        if not alpha > 1:
            raise AssertionError("small-C regime must give alpha > 1")
    q = alpha * cs.sigma2
    achieved = sum_rate(cs, q)
    cut = cutset_bound(cs, C)
    return GapCertificate(
        scheme="wz",
        L=cs.L,
        status="ok",
        regime=regime,
        alpha=alpha,
        cutset=cut,
        achieved=achieved,
        gap=cut - achieved,
        bound=float(cs.L),
        usage=usage(alpha),
    )


def kappa_of(Psi) -> float:
    """Largest ``kappa`` with ``|Psi_ii| >= kappa * sum_{j != i} |Psi_ij|`` on every row.

    Rows without off-diagonal mass are unconstrained; ``math.inf`` if all are.
    """
    A = np.abs(np.asarray(Psi))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected square matrix, got shape {A.shape}")
    d = np.diag(A)
    off = A.sum(axis=1) - d
    with np.errstate(divide="ignore"):
        ratios = np.where(off > 0, d / np.where(off > 0, off, 1.0), np.inf)
    return float(np.min(ratios)) if ratios.size else math.inf


def ostrowski_lower_bound(Psi, kappa: float) -> float:
    """``n log(1 - 1/kappa) + sum log Psi_ii`` (nats), a lower bound on ``log|Psi|``."""
    if not kappa > 1:
        raise ValueError("kappa must exceed 1")
    Psi = np.asarray(Psi)
    if kappa_of(Psi) < kappa * (1 - 1e-12):
        raise ValueError("matrix is not kappa-diagonally dominant for the given kappa")
    d = np.real(np.diag(Psi))
    n = d.size
    head = 0.0 if math.isinf(kappa) else n * math.log1p(-1.0 / kappa)
    return head + float(np.sum(np.log(d)))


def su_gap_certificate(cs: ChannelState, C: float) -> GapCertificate:
    """Certificate for independent compression, valid when the received covariance is diagonally dominant."""
    if not C > 0:
        raise ValueError("backhaul budget must be positive")
    Psi = cs.covariance() + np.diag(cs.sigma2)
    kappa = kappa_of(Psi)
    cut = cutset_bound(cs, C)
    if not kappa > 1:
        nan = math.nan
        return GapCertificate(
            scheme="su",
            L=cs.L,
            status="inapplicable",
            regime="",
            alpha=nan,
            cutset=cut,
            achieved=nan,
            gap=nan,
            bound=nan,
            kappa=kappa,
        )
    usage = lambda a: su_backhaul_usage(cs, a * cs.sigma2)
    S = cs.received_power
    threshold = float(np.sum(np.log2((S + 2 * cs.sigma2) / cs.sigma2)))
    if C >= threshold:
        alpha, regime = 1.0, "large-C"
    else:
        alpha, regime = _alpha_for(usage, C), "small-C"
    achieved = sum_rate(cs, alpha * cs.sigma2)
    extra = 0.0 if math.isinf(kappa) else math.log2(kappa / (kappa - 1))
    return GapCertificate(
        scheme="su",
        L=cs.L,
        status="ok",
        regime=regime,
        alpha=alpha,
        cutset=cut,
        achieved=achieved,
        gap=cut - achieved,
        bound=cs.L * (1.0 + extra),
        kappa=kappa,
        usage=usage(alpha),
    )


def diagonally_dominant_noise(cs_H, P, kappa: float, margin: float = 1e-3) -> np.ndarray:
    """Background noise making ``H diag(P) H^H + diag(sigma2)`` at least ``kappa``-dominant.

    ``sigma2_i = max(kappa * offrow_i - S_ii, 0) + margin * (1 + S_ii)``.
    """
    H = np.asarray(cs_H)
    S = (H * np.asarray(P, dtype=float)) @ H.conj().T
    A = np.abs(S)
    d = np.diag(A)
    off = A.sum(axis=1) - d
    return np.maximum(kappa * off - d, 0.0) + margin * (1.0 + d)

