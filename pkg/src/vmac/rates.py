"""Achievable rates and backhaul usage for the uplink VMAC schemes.

All public functions return bits per channel use.  A quantization noise
level of ``+inf`` means the BS forwards nothing; its row is dropped from
every determinant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InfiniteUsageError
from .linalg import LN2, logdet


@dataclass(frozen=True)
class ChannelState:
    """Channel matrix ``H`` (L x U), user powers ``P`` and BS noise ``sigma2``."""

    H: np.ndarray
    P: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H))
        if not np.iscomplexobj(H):
            H = H.astype(float)
        P = np.atleast_1d(np.asarray(self.P, dtype=float))
        s2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        if H.shape != (s2.shape[0], P.shape[0]):
            raise ValueError(
                f"H has shape {H.shape}, expected ({s2.shape[0]}, {P.shape[0]}) from sigma2 and P"
            )
        if np.any(P < 0):
            raise ValueError("transmit powers must be nonnegative")
        if np.any(s2 <= 0):
            raise ValueError("noise variances must be positive")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "sigma2", s2)

    @property
    def L(self) -> int:
        return self.H.shape[0]

    @property
    def U(self) -> int:
        return self.H.shape[1]

    @property
    def received_power(self) -> np.ndarray:
        """Per-BS signal power ``sum_j P_j |h_ij|^2`` (no noise)."""
        return (np.abs(self.H) ** 2) @ self.P

    def covariance(self) -> np.ndarray:
        """``H diag(P) H^H``."""
        S = (self.H * self.P) @ self.H.conj().T
        return 0.5 * (S + S.conj().T)

    def rows(self, idx) -> "ChannelState":
        idx = np.asarray(idx, dtype=int)
        return ChannelState(self.H[idx], self.P, self.sigma2[idx])


@dataclass(frozen=True)
class QuantizationProfile:
    """Per-BS quantization noise levels, same linear scale as ``sigma2``.

    ``info`` carries solver diagnostics (multipliers, residuals) and is not
    part of equality.
    """

    q: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if np.any(np.isnan(q)) or np.any(q < 0):
            raise ValueError("quantization noise levels must be nonnegative")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class RateReport:
    per_user_rates: np.ndarray
    sum_rate: float
    weighted_sum_rate: float
    wz_backhaul: float
    su_backhaul: float


def _q(qp) -> np.ndarray:
    q = qp.q if isinstance(qp, QuantizationProfile) else qp
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(np.isnan(q)) or np.any(q < 0):
        raise ValueError("quantization noise levels must be nonnegative")
    return q


def _check_q(cs: ChannelState, q: np.ndarray) -> None:
    if q.shape != (cs.L,):
        raise ValueError(f"expected {cs.L} quantization levels, got {q.shape}")


def _active(q: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.isfinite(q))


def wz_backhaul_usage(cs: ChannelState, qp) -> float:
    """``log2 |H K_X H^H + Lambda_q + diag(sigma2)| - log2 |Lambda_q|``."""
    q = _q(qp)
    _check_q(cs, q)
    if np.any(q == 0):
        raise InfiniteUsageError("zero quantization noise needs infinite backhaul")
    a = _active(q)
    if a.size == 0:
        return 0.0
    sub = cs.rows(a)
    M = sub.covariance() + np.diag(sub.sigma2 + q[a])
    return (logdet(M) - np.sum(np.log(q[a]))) / LN2


def su_backhaul_usage(cs: ChannelState, qp) -> float:
    """``sum_i log2(1 + (sum_j P_j|h_ij|^2 + sigma2_i) / q_i)``."""
    return float(np.sum(su_backhaul_per_bs(cs, qp)))


def su_backhaul_per_bs(cs: ChannelState, qp) -> np.ndarray:
    q = _q(qp)
    _check_q(cs, q)
    if np.any(q == 0):
        raise InfiniteUsageError("zero quantization noise needs infinite backhaul")
    with np.errstate(divide="ignore"):
        return np.log2(1.0 + (cs.received_power + cs.sigma2) / q)


def _check_order(order, U: int) -> np.ndarray:
    order = np.asarray(order, dtype=int).ravel()
    if order.shape != (U,) or not np.array_equal(np.sort(order), np.arange(U)):
        raise ValueError(f"decoding order must be a permutation of 0..{U - 1}")
    return order


def _suffix_logdets(cs: ChannelState, q: np.ndarray, order: np.ndarray) -> np.ndarray:
    """logdet of ``sum_{m>=k} P h h^H + D`` for k = 0..U (last entry is ``D``)."""
    a = _active(q)
    U = cs.U
    if a.size == 0:
        return np.zeros(U + 1)
    H = cs.H[a][:, order]
    D = cs.sigma2[a] + q[a]
    # outer products, accumulated from the last decoded user backwards
    outer = np.einsum("iu,ju->uij", H * cs.P[order], H.conj())
    stack = np.empty((U + 1, a.size, a.size), dtype=outer.dtype)
    stack[U] = 0.0
    stack[:U] = np.cumsum(outer[::-1], axis=0)[::-1]
    stack = stack + np.diag(D)
    stack = 0.5 * (stack + np.swapaxes(stack.conj(), -1, -2))
    return np.asarray(logdet(stack))


def sic_user_rates(cs: ChannelState, qp, order) -> np.ndarray:
    """Per-user SIC rates; ``order[0]`` is decoded first.

    Returns rates indexed by user (not by decoding position).
    """
    q = _q(qp)
    _check_q(cs, q)
    order = _check_order(order, cs.U)
    ld = _suffix_logdets(cs, q, order)
    r_pos = np.maximum((ld[:-1] - ld[1:]) / LN2, 0.0)
    rates = np.empty(cs.U)
    rates[order] = r_pos
    return rates


def decoding_order(weights) -> np.ndarray:
    """Ascending weight order, ties broken by user index (highest weight last)."""
    w = np.asarray(weights, dtype=float)
    return np.argsort(w, kind="stable")


def weighted_sum_rate(cs: ChannelState, qp, weights) -> float:
    mu = np.asarray(weights, dtype=float).ravel()
    if mu.shape != (cs.U,):
        raise ValueError(f"expected {cs.U} weights, got {mu.shape}")
    if np.any(mu < 0):
        raise ValueError("weights must be nonnegative")
    rates = sic_user_rates(cs, qp, decoding_order(mu))
    return float(mu @ rates)


def sum_rate(cs: ChannelState, qp) -> float:
    """``I(X; Y_hat)`` in bits; independent of decoding order."""
    q = _q(qp)
    _check_q(cs, q)
    a = _active(q)
    if a.size == 0:
        return 0.0
    sub = cs.rows(a)
    D = sub.sigma2 + q[a]
    return (logdet(sub.covariance() + np.diag(D)) - np.sum(np.log(D))) / LN2


def mac_cut(cs: ChannelState) -> float:
    """Users-to-BSs cut ``log2 |H K_X H^H + diag(sigma2)| / |diag(sigma2)|``."""
    return (logdet(cs.covariance() + np.diag(cs.sigma2)) - np.sum(np.log(cs.sigma2))) / LN2


def cutset_bound(cs: ChannelState, C: float) -> float:
    if C < 0:
        raise ValueError("backhaul budget must be nonnegative")
    return min(mac_cut(cs), float(C))


def rate_report(cs: ChannelState, qp, weights) -> RateReport:
    mu = np.asarray(weights, dtype=float)
    rates = sic_user_rates(cs, qp, decoding_order(mu))
    return RateReport(
        per_user_rates=rates,
        sum_rate=float(np.sum(rates)),
        weighted_sum_rate=float(mu @ rates),
        wz_backhaul=wz_backhaul_usage(cs, qp),
        su_backhaul=su_backhaul_usage(cs, qp),
    )


def rate_region_bounds(cs: ChannelState, qp) -> dict[tuple[int, ...], float]:
    """Every subset constraint of the VMAC rate region (diagnostic, U <= 12).

    Maps each nonempty user subset to its sum-rate bound in bits.
    """
    if cs.U > 12:
        raise ValueError("full rate-region enumeration is limited to U <= 12")
    q = _q(qp)
    _check_q(cs, q)
    a = _active(q)
    sub = cs.rows(a)
    D = sub.sigma2 + q[a]
    base = np.sum(np.log(D))
    out = {}
    for k in range(1, cs.U + 1):
        for S in itertools.combinations(range(cs.U), k):
            S = list(S)
            Hs = sub.H[:, S]
            M = (Hs * sub.P[S]) @ Hs.conj().T + np.diag(D)
            out[tuple(S)] = (logdet(0.5 * (M + M.conj().T)) - base) / LN2
    return out


def in_rate_region(cs: ChannelState, qp, rates, tol: float = 1e-9) -> bool:
    r = np.asarray(rates, dtype=float)
    return all(r[list(S)].sum() <= b + tol for S, b in rate_region_bounds(cs, qp).items())
