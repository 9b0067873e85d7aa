import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmac.config import SimConfig, db_to_linear, linear_to_db
from vmac.sim.engine import (
    baseline_rates,
    ClusterBudget,
    Schedule,
    cdf_table,
    cluster_budget,
    evaluate_slot,
    pf_weights,
    run_campaign,
    schedule_slot,
    update_pf_state,
)
from vmac.sim.topology import (
    Drop,
    generate_topology,
    hex_sites,
    realize_drop,
    rng_for,
    sector_pattern_db,
    sector_vertices,
    shadowing_db,
    wrapped_offsets,
)

SMALL = SimConfig(users_per_sector=3, n_slots=4)


@pytest.fixture(scope="module")
def multicell():
    top = generate_topology(SMALL)
    return top, realize_drop(top, SMALL)


@pytest.fixture(scope="module")
def hetnet():
    cfg = SMALL.model_copy(update={"mode": "hetnet"})
    top = generate_topology(cfg)
    return cfg, top, realize_drop(top, cfg)


def test_multicell_layout(multicell):
    top, _ = multicell
    assert top.n_sites == 19 and top.n_bs == 57
    assert len(top.clusters) == 1 and top.clusters[0].size == 21
    assert top.n_cells == 7
    # the cluster is the central seven sites
    assert np.all(np.linalg.norm(top.bs_pos[top.clusters[0]], axis=1) <= 500 + 1e-9)
    d = np.linalg.norm(top.site_pos[:, None] - top.site_pos[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() == pytest.approx(500.0)


def test_hetnet_layout(hetnet):
    cfg, top, _ = hetnet
    assert top.n_sites == 7
    assert top.macro_indices.size == 21 and top.pico_indices.size == 63
    assert len(top.clusters) == 7 and all(c.size == 12 for c in top.clusters)
    assert np.all(np.bincount(top.bs_sector[top.pico_indices], minlength=21) == 3)
    pic = top.bs_pos[top.pico_indices]
    others = np.vstack([top.site_pos, pic])
    d = np.linalg.norm(wrapped_offsets(pic, others, top.shifts), axis=-1)
    d[top.n_sites + np.arange(63), np.arange(63)] = np.inf
    assert d.min() >= cfg.pico_min_distance_m


def test_topology_deterministic():
    cfg = SMALL.model_copy(update={"mode": "hetnet"})
    a, b = generate_topology(cfg, 5), generate_topology(cfg, 5)
    assert np.array_equal(a.bs_pos, b.bs_pos)
    assert not np.array_equal(a.bs_pos, generate_topology(cfg, 6).bs_pos)


def test_hex_sites_center_first():
    s = hex_sites(1, 100.0)
    assert s.shape == (7, 2) and np.allclose(s[0], 0)
    assert np.allclose(np.linalg.norm(s[1:], axis=1), 100.0)


@given(st.lists(st.floats(-5000, 5000), min_size=2, max_size=2))
def test_wraparound_never_farther(p):
    top = generate_topology(SMALL)
    pt = np.array([p])
    off = wrapped_offsets(pt, top.site_pos, top.shifts)
    direct = pt[None, :, :] - top.site_pos[:, None, :]
    assert np.all(np.linalg.norm(off, axis=-1) <= np.linalg.norm(direct, axis=-1) + 1e-9)


def test_wrapped_distance_bounded(multicell):
    top, drop = multicell
    d = np.linalg.norm(wrapped_offsets(drop.user_pos, top.site_pos, top.shifts), axis=-1).min(axis=0)
    # every user is within one cell radius of its own site
    assert d.max() <= 500 / np.sqrt(3) + 1e-6


def test_path_loss_values():
    cfg = SimConfig()
    assert cfg.macro_pathloss(0.5) == pytest.approx(116.78, abs=5e-3)
    assert cfg.pico_pathloss(0.1) == pytest.approx(104.0, abs=1e-12)
    assert cfg.noise_dbm == pytest.approx(-92.0)
    assert cfg.power_snr_linear == pytest.approx(10**11.5)


def test_db_round_trip():
    for x in (1e-9, 0.3, 1.0, 7.5e11):
        assert db_to_linear(linear_to_db(x)) == pytest.approx(x, rel=1e-12)


def test_sector_pattern():
    assert sector_pattern_db(0.0) == 0.0
    assert sector_pattern_db(35.0) == pytest.approx(-3.0)
    assert sector_pattern_db(180.0) == -20.0
    assert sector_pattern_db(-35.0) == sector_pattern_db(325.0)


def test_sector_rhombus_area():
    u, w = sector_vertices(500.0, 30.0)
    area = abs(u[0] * w[1] - u[1] * w[0])
    hexagon = 3 * np.sqrt(3) / 2 * (500 / np.sqrt(3)) ** 2
    assert area == pytest.approx(hexagon / 3)


def test_shadowing_correlation():
    z = shadowing_db(rng_for(0, 2), 10_000, 2, [8.0, 8.0], 0.5)
    assert np.corrcoef(z)[0, 1] == pytest.approx(0.5, abs=0.05)
    assert np.std(z[0]) == pytest.approx(8.0, rel=0.05)


def test_drop_association_and_users(multicell):
    top, drop = multicell
    assert drop.n_users == 57 * SMALL.users_per_sector
    assert np.all(drop.gain > 0)
    assert np.array_equal(drop.serving, np.argmax(drop.gain, axis=0))
    assert sum(m.size for m in drop.users_by_bs) == drop.n_users
    again = realize_drop(top, SMALL)
    assert np.array_equal(again.gain, drop.gain)


def test_schedule_round_robin():
    by_bs = (np.arange(20), np.array([], dtype=int), np.array([20, 21]))
    drop = Drop(np.zeros((22, 2)), np.ones((3, 22)), np.zeros(22, int), 1.0, np.zeros(22), by_bs)
    s = schedule_slot(drop, 21)
    assert list(s.bs) == [0, 2] and s.users[0] == 1 and s.users[1] == 21
    s2 = schedule_slot(drop, 22)
    assert np.all(s.users != s2.users)


def test_scheduled_count_matches_nonempty(multicell):
    _, drop = multicell
    nonempty = sum(m.size > 0 for m in drop.users_by_bs)
    for t in range(5):
        assert len(schedule_slot(drop, t)) == nonempty


def test_pf_state():
    drop = Drop(np.zeros((2, 2)), np.ones((1, 2)), np.zeros(2, int), 1.0, np.array([1.0, 1.0]), (np.arange(2),))
    for _ in range(2000):
        drop = update_pf_state(drop, [2.0, 0.0], 0.01)
    assert drop.avg_rate[0] == pytest.approx(2.0, rel=1e-6)
    w = pf_weights(drop, 1e-6)
    assert w[1] > 1e6 * w[0] / 2
    eq = update_pf_state(drop.with_avg([0.5, 3.0]), [1.0, 1.0], 0.5)
    assert eq.avg_rate[0] < eq.avg_rate[1]
    with pytest.raises(ValueError):
        update_pf_state(drop, [1.0, 1.0], 1.0)


def test_baseline_scalar():
    drop = Drop(np.zeros((1, 2)), np.array([[3.0]]), np.zeros(1, int), 2.0, np.zeros(1), (np.arange(1),))
    r = baseline_rates(drop, Schedule(np.array([0]), np.array([0])))
    assert r[0] == pytest.approx(np.log2(7.0))


def _slot_state(top, drop, t=0):
    drop = drop.with_avg(np.full(drop.n_users, 0.5) + 0.01 * np.arange(drop.n_users))
    return drop, schedule_slot(drop, t)


def test_infinite_budget_reaches_mac_cut(multicell):
    top, drop = multicell
    drop, sched = _slot_state(top, drop)
    res = evaluate_slot(top, drop, sched, "wz", "approx", ClusterBudget(1e5))
    assert res.cluster_sum[0] == pytest.approx(res.cluster_mac_cut[0], abs=1e-6)


def test_scheme_dominance_per_slot(multicell):
    top, drop = multicell
    budget = cluster_budget(SMALL, top, 240.0)
    for t in range(10):
        d, sched = _slot_state(top, drop, t)
        wz = evaluate_slot(top, d, sched, "wz", "approx", budget).cluster_sum[0]
        su = evaluate_slot(top, d, sched, "su", "approx", budget).cluster_sum[0]
        base = evaluate_slot(top, d, sched, "baseline", "approx", budget).cluster_sum[0]
        assert wz >= su - 1e-9
        assert su >= base - 1e-9


def test_budget_monotone_per_slot(multicell):
    top, drop = multicell
    d, sched = _slot_state(top, drop, 1)
    for scheme in ("wz", "su"):
        prev = -np.inf
        for b in (60, 120, 180, 240, 300):
            s = evaluate_slot(top, d, sched, scheme, "approx", cluster_budget(SMALL, top, b)).cluster_sum[0]
            assert s >= prev - 1e-9
            prev = s


def test_cluster_budget():
    cfg = SimConfig()
    top = generate_topology(cfg)
    assert cluster_budget(cfg, top).total == pytest.approx(84.0)
    assert cluster_budget(cfg, top, 60.0).total == pytest.approx(42.0)
    h = SimConfig(mode="hetnet")
    htop = generate_topology(h)
    b = cluster_budget(h, htop)
    assert (b.macro, b.pico, b.total) == pytest.approx((18.9, 8.1, 27.0))
    b = cluster_budget(h, htop, 120.0)
    assert b.macro / b.pico == pytest.approx(189 / 81) and b.total == pytest.approx(12.0)


def test_hetnet_slot_meets_tier_budgets(hetnet):
    cfg, top, drop = hetnet
    d, sched = _slot_state(top, drop)
    res = evaluate_slot(top, d, sched, "su", "approx", cluster_budget(cfg, top))
    ok = res.cluster_users > 0
    assert np.all(res.cluster_usage[ok] <= 27.0 + 1e-6)
    assert np.all(res.cluster_sum[ok] <= res.cluster_mac_cut[ok] + 1e-9)


def test_campaign_empty_and_deterministic():
    empty = run_campaign(SMALL.model_copy(update={"n_slots": 0}))
    assert empty.user_rates_mbps.size == 0 and empty.percell_sumrate_mbps == 0.0
    a = run_campaign(SMALL, seeds=[3])
    b = run_campaign(SMALL, seeds=[3])
    assert np.array_equal(a.user_rates_mbps, b.user_rates_mbps)
    assert a.slot_rows == b.slot_rows


def test_campaign_long_term_average():
    res = run_campaign(SMALL, seeds=[1])
    T = SMALL.n_slots
    total_bits = res.slot_sum_bits.sum() / T
    assert res.percell_sumrate_mbps == pytest.approx(SMALL.bits_to_mbps(total_bits) / 7, rel=1e-9)
    assert res.user_rates_mbps.sum() == pytest.approx(SMALL.bits_to_mbps(total_bits), rel=1e-9)


def test_cdf_table():
    r, q = cdf_table([3.0, 1.0, 2.0])
    assert list(r) == [1.0, 2.0, 3.0] and list(q) == pytest.approx([1 / 3, 2 / 3, 1.0])
    r, q = cdf_table([])
    assert r.size == 0 and q.size == 0
