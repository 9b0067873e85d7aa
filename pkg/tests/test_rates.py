import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmac.errors import InfiniteUsageError
from vmac.rates import (
    ChannelState,
    QuantizationProfile,
    cutset_bound,
    decoding_order,
    in_rate_region,
    mac_cut,
    rate_region_bounds,
    rate_report,
    sic_user_rates,
    su_backhaul_usage,
    sum_rate,
    weighted_sum_rate,
    wz_backhaul_usage,
)

from conftest import det_cofactor, random_state


def mmse_sic_oracle(cs, q, order):
    """Per-user rates from the MMSE-SIC SINR formula (independent of logdet ratios)."""
    D = np.diag(cs.sigma2 + q)
    rates = np.zeros(cs.U)
    for pos, k in enumerate(order):
        later = order[pos + 1:]
        K = D + sum((cs.P[j] * np.outer(cs.H[:, j], cs.H[:, j].conj()) for j in later), np.zeros_like(D))
        h = cs.H[:, k]
        sinr = cs.P[k] * np.real(h.conj() @ np.linalg.solve(K, h))
        rates[k] = np.log2(1 + sinr)
    return rates


def test_wz_usage_examples(scalar_state):
    assert wz_backhaul_usage(scalar_state, [2 / 3]) == pytest.approx(2.0, abs=1e-12)
    zero = ChannelState([[0.0]], [1.0], [1.0])
    assert wz_backhaul_usage(zero, [1.0]) == pytest.approx(1.0, abs=1e-12)
    cs = ChannelState(np.eye(2), [1, 1], [1, 1])
    assert wz_backhaul_usage(cs, [1, 1]) == pytest.approx(2 * np.log2(3), abs=1e-12)


def test_wz_usage_2x2_explicit_determinant():
    rng = np.random.default_rng(5)
    cs = random_state(rng, 2, 3)
    q = np.array([0.7, 2.0])
    M = cs.covariance() + np.diag(cs.sigma2 + q)
    det = np.real(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    assert wz_backhaul_usage(cs, q) == pytest.approx(np.log2(det / (q[0] * q[1])), abs=1e-10)


def test_zero_quantization_is_infinite(scalar_state):
    with pytest.raises(InfiniteUsageError):
        wz_backhaul_usage(scalar_state, [0.0])
    with pytest.raises(InfiniteUsageError):
        su_backhaul_usage(scalar_state, [0.0])


def test_infinite_q_disconnects_bs():
    cs = ChannelState(np.eye(2), [1, 1], [1, 1])
    assert wz_backhaul_usage(cs, [1.0, np.inf]) == pytest.approx(np.log2(3), abs=1e-12)
    assert sum_rate(cs, [np.inf, np.inf]) == 0.0
    assert sum_rate(cs, [1.0, np.inf]) == pytest.approx(np.log2(1.5), abs=1e-12)


def test_bad_inputs():
    with pytest.raises(ValueError):
        ChannelState(np.ones((2, 2)), [1, 1], [1, 1, 1])
    with pytest.raises(ValueError):
        ChannelState(np.ones((1, 1)), [-1], [1])
    with pytest.raises(ValueError):
        ChannelState(np.ones((1, 1)), [1], [0])
    cs = ChannelState(np.ones((1, 1)), [1], [1])
    with pytest.raises(ValueError):
        wz_backhaul_usage(cs, [-1.0])
    with pytest.raises(ValueError):
        wz_backhaul_usage(cs, [1.0, 1.0])
    with pytest.raises(ValueError):
        sic_user_rates(cs, [1.0], [1])
    with pytest.raises(ValueError):
        weighted_sum_rate(cs, [1.0], [-1.0])


def test_su_usage_examples(scalar_state):
    assert su_backhaul_usage(scalar_state, [2 / 3]) == pytest.approx(2.0, abs=1e-12)
    zero = ChannelState([[0.0]], [1.0], [1.0])
    assert su_backhaul_usage(zero, [1.0]) == pytest.approx(1.0, abs=1e-12)
    cs = ChannelState(np.eye(2), [1, 1], [1, 1])
    assert su_backhaul_usage(cs, [1, 1]) == pytest.approx(2 * np.log2(3), abs=1e-12)


def test_scalar_sic_rate(scalar_state):
    r = sic_user_rates(scalar_state, [2 / 3], [0])
    assert r[0] == pytest.approx(np.log2(1.6), abs=1e-12)
    assert r[0] == pytest.approx(0.678072, abs=1e-6)


def test_zero_power_gives_zero_rates():
    rng = np.random.default_rng(0)
    cs0 = random_state(rng, 3, 2)
    cs = ChannelState(cs0.H, [0.0, 0.0], cs0.sigma2)
    assert np.all(sic_user_rates(cs, [1, 1, 1], [0, 1]) == 0)


def test_sic_matches_mmse_oracle():
    rng = np.random.default_rng(21)
    for L, U in [(2, 2), (3, 4), (4, 3)]:
        cs = random_state(rng, L, U)
        q = 10 ** rng.uniform(-1, 1, L)
        for order in itertools.permutations(range(U)):
            order = np.array(order)
            got = sic_user_rates(cs, q, order)
            assert np.allclose(got, mmse_sic_oracle(cs, q, order), atol=1e-9)


def test_sum_rate_order_invariant():
    rng = np.random.default_rng(2)
    cs = random_state(rng, 2, 2)
    q = [0.5, 1.5]
    s1 = sic_user_rates(cs, q, [0, 1]).sum()
    s2 = sic_user_rates(cs, q, [1, 0]).sum()
    assert s1 == pytest.approx(s2, abs=1e-12)
    assert s1 == pytest.approx(sum_rate(cs, q), abs=1e-12)


def test_decoding_order_ties_by_index():
    assert list(decoding_order([1.0, 0.5, 1.0, 0.2])) == [3, 1, 0, 2]


def test_weighted_sum_rate_examples():
    rng = np.random.default_rng(9)
    cs = random_state(rng, 2, 2)
    q = [1.0, 2.0]
    assert weighted_sum_rate(cs, q, [1, 1]) == pytest.approx(sum_rate(cs, q), abs=1e-12)
    r = sic_user_rates(cs, q, [0, 1])
    assert weighted_sum_rate(cs, q, [0, 1]) == pytest.approx(r[1], abs=1e-12)


def test_weighted_sum_rate_telescoped_identity():
    rng = np.random.default_rng(13)
    cs = random_state(rng, 3, 3)
    q = np.array([0.3, 1.0, 4.0])
    mu = np.array([0.2, 1.3, 0.7])
    order = np.argsort(mu)
    ms = mu[order]
    D = np.diag(cs.sigma2 + q)

    def ld2(M):
        return np.log2(np.real(det_cofactor(M)))

    total = 0.0
    prev = 0.0
    for i in range(3):
        K = D + sum(cs.P[j] * np.outer(cs.H[:, j], cs.H[:, j].conj()) for j in order[i:])
        total += (ms[i] - prev) * ld2(K)
        prev = ms[i]
    total -= ms[-1] * ld2(D)
    assert weighted_sum_rate(cs, q, mu) == pytest.approx(total, abs=1e-10)


def test_cutset_examples(scalar_state):
    assert cutset_bound(scalar_state, 0) == 0
    assert cutset_bound(scalar_state, 10) == pytest.approx(1.0, abs=1e-12)
    cs = ChannelState([[np.sqrt(3)]], [1.0], [1.0])
    assert cutset_bound(cs, 1) == pytest.approx(1.0, abs=1e-12)
    assert mac_cut(cs) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        cutset_bound(cs, -1)


def test_rate_report_and_region():
    rng = np.random.default_rng(4)
    cs = random_state(rng, 3, 3)
    q = QuantizationProfile([0.5, 1.0, 2.0])
    mu = np.array([0.1, 0.5, 0.3])
    rep = rate_report(cs, q, mu)
    assert rep.sum_rate == pytest.approx(sum_rate(cs, q), abs=1e-10)
    assert rep.weighted_sum_rate == pytest.approx(weighted_sum_rate(cs, q, mu), abs=1e-12)
    assert rep.su_backhaul >= rep.wz_backhaul - 1e-12
    bounds = rate_region_bounds(cs, q)
    assert len(bounds) == 7
    assert bounds[(0, 1, 2)] == pytest.approx(rep.sum_rate, abs=1e-10)
    assert in_rate_region(cs, q, rep.per_user_rates)
    assert not in_rate_region(cs, q, rep.per_user_rates + 0.01)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_property_rate_identities(L, U, seed):
    rng = np.random.default_rng(seed)
    cs = random_state(rng, L, U, span_db=40)
    q = 10 ** rng.uniform(-2, 2, L)
    mu = rng.uniform(0, 1, U)
    rates = sic_user_rates(cs, q, decoding_order(mu))
    assert np.all(rates >= 0)
    # chain rule: the SIC rates add up to I(X; Yhat)
    assert rates.sum() == pytest.approx(sum_rate(cs, q), abs=1e-9)
    # SU usage dominates WZ usage (Hadamard), WZ usage dominates the sum rate
    wz = wz_backhaul_usage(cs, q)
    assert su_backhaul_usage(cs, q) >= wz - 1e-9
    assert wz >= sum_rate(cs, q) - 1e-9
    assert sum_rate(cs, q) <= mac_cut(cs) + 1e-9


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_property_monotone_in_q(L, seed):
    rng = np.random.default_rng(seed)
    cs = random_state(rng, L, 2)
    q = 10 ** rng.uniform(-1, 1, L)
    assert sum_rate(cs, 2 * q) <= sum_rate(cs, q) + 1e-12
    assert wz_backhaul_usage(cs, 2 * q) <= wz_backhaul_usage(cs, q) + 1e-12
