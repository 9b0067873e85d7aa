"""Round-robin scheduling, per-slot evaluation and long-term campaigns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import Policy, Scheme, SimConfig, SolverConfig
from ..gap import kappa_of
from ..rates import (
    ChannelState,
    decoding_order,
    mac_cut,
    sic_user_rates,
    su_backhaul_usage,
    wz_backhaul_usage,
)
from ..su import (
    SuSettings,
    TierSpec,
    approx_beta,
    hetnet_allocate,
    q_from_backhaul,
    su_allocation_optimize,
)
from ..wz import AcoSettings, aco_optimize, approx_alpha
from .topology import MACRO, Drop, NetworkTopology, generate_topology, realize_drop, rng_for

_STREAM_SOLVER = 3


@dataclass(frozen=True)
class Schedule:
    bs: np.ndarray
    users: np.ndarray

    def __len__(self):
        return self.bs.size


@dataclass(frozen=True)
class ClusterBudget:
    """Per-cluster backhaul in bits per channel use.

    ``macro``/``pico`` are set for tiered (HetNet) runs; ``total`` always.
    """

    total: float
    macro: float | None = None
    pico: float | None = None


@dataclass(frozen=True)
class SlotSolvers:
    aco: AcoSettings = AcoSettings()
    su: SuSettings = SuSettings()
    bisection_tol: float = 1e-9

    @classmethod
    def from_config(cls, cfg: SolverConfig) -> "SlotSolvers":
        return cls(
            aco=AcoSettings(
                max_outer_iters=cfg.aco.max_outer_iters,
                objective_tol=cfg.aco.objective_tol,
                inner_tol=cfg.aco.inner_tol,
            ),
            su=SuSettings(max_iters=cfg.su.max_iters, tol=cfg.su.tol, n_random_starts=cfg.su.n_random_starts),
            bisection_tol=cfg.bisection_tol,
        )


@dataclass
class SlotResult:
    rates: np.ndarray  # bits, indexed by user
    cluster_sum: np.ndarray
    cluster_mac_cut: np.ndarray
    cluster_usage: np.ndarray
    cluster_kappa: np.ndarray
    cluster_users: np.ndarray


def schedule_slot(drop: Drop, slot: int) -> Schedule:
    """User ``slot mod n_b`` of every BS with ``n_b > 0`` associated users."""
    bs, users = [], []
    for b, members in enumerate(drop.users_by_bs):
        if members.size:
            bs.append(b)
            users.append(members[slot % members.size])
    return Schedule(np.array(bs, dtype=int), np.array(users, dtype=int))


def cluster_budget(config: SimConfig, topology: NetworkTopology, budget_mbps_per_cell: float | None = None) -> ClusterBudget:
    """Convert configured Mbps budgets to bits per channel use for one cluster.

    Multicell budgets are per cell and scale with the cells in the cluster.
    For HetNet an explicit per-cell figure is split between tiers in the
    configured macro:pico ratio.
    """
    if config.mode == "multicell":
        per_cell = config.budget_mbps_per_cell if budget_mbps_per_cell is None else budget_mbps_per_cell
        return ClusterBudget(config.mbps_to_bits(per_cell * topology.cells_per_cluster))
    m, p = config.macro_budget_mbps, config.pico_budget_mbps
    if budget_mbps_per_cell is not None:
        scale = budget_mbps_per_cell * topology.cells_per_cluster / (m + p)
        m, p = m * scale, p * scale
    mb, pb = config.mbps_to_bits(m), config.mbps_to_bits(p)
    return ClusterBudget(mb + pb, mb, pb)


def _tiers(topology: NetworkTopology, bs: np.ndarray, budget: ClusterBudget) -> list[TierSpec] | None:
    if budget.macro is None:
        return None
    macro = topology.bs_tier[bs] == MACRO
    tiers = [TierSpec(tuple(np.flatnonzero(macro)), budget.macro), TierSpec(tuple(np.flatnonzero(~macro)), budget.pico)]
    return [t for t in tiers if t.member_indices]


def _uniform_alloc(L: int, tiers, budget: ClusterBudget) -> np.ndarray:
    if tiers is None:
        return np.full(L, budget.total / L)
    c = np.zeros(L)
    for t in tiers:
        c[list(t.member_indices)] = t.budget / len(t.member_indices)
    return c


def baseline_rates(drop: Drop, schedule: Schedule, interferers=None) -> np.ndarray:
    """Single-BS decoding at the serving BS, all other scheduled users as noise.

    ``interferers[k]`` restricts the interfering set of the k-th scheduled
    user (boolean mask over the schedule); default is every other user.
    """
    g = drop.gain[schedule.bs][:, schedule.users] * drop.power  # row: serving BS of user k
    sig = np.diag(g)
    if interferers is None:
        interf = g.sum(axis=1) - sig
    else:
        interf = np.sum(np.where(interferers, g, 0.0), axis=1) - sig
    return np.log2(1.0 + sig / (1.0 + interf))


def quantization_for(
    cs: ChannelState,
    scheme: Scheme,
    policy: Policy,
    weights: np.ndarray,
    budget: ClusterBudget,
    tiers,
    solvers: SlotSolvers,
    seed: int = 0,
):
    """Quantization profile chosen by ``policy`` for ``scheme`` on one cluster."""
    if policy == "uniform":
        return q_from_backhaul(cs, _uniform_alloc(cs.L, tiers, budget))
    if scheme == "wz":
        if policy == "approx":
            return approx_alpha(cs, budget.total, solvers.bisection_tol)[1]
        return aco_optimize(cs, weights, budget.total, solvers.aco)[0]
    # single-user compression
    if tiers is None:
        _, alloc, prof = approx_beta(cs, TierSpec(tuple(range(cs.L)), budget.total), solvers.bisection_tol)
    else:
        h = hetnet_allocate(cs, tiers, solvers.bisection_tol)
        alloc, prof = h.allocation, h.profile
    if policy == "approx":
        return prof
    s = solvers.su
    settings = SuSettings(s.max_iters, s.tol, s.n_random_starts, seed)
    best = su_allocation_optimize(
        cs, weights, None if tiers else budget.total, settings, tiers=tiers, starts=[alloc]
    )
    return q_from_backhaul(cs, best)


def cluster_channel(
    topology: NetworkTopology, drop: Drop, schedule: Schedule, cluster: int, out_of_cluster: bool = True
) -> ChannelState:
    """Channel from the scheduled users of ``cluster`` to its BSs, noise-normalized.

    Scheduled users of other clusters add their received power to each BS's
    noise when ``out_of_cluster`` is set.
    """
    bs = topology.clusters[cluster]
    inside = topology.bs_cluster[schedule.bs] == cluster
    users = schedule.users[inside]
    G = drop.gain[bs]
    s2 = np.ones(bs.size)
    if out_of_cluster:
        s2 = s2 + drop.power * G[:, schedule.users[~inside]].sum(axis=1)
    return ChannelState(np.sqrt(G[:, users]), np.full(users.size, drop.power), s2)


def evaluate_slot(
    topology: NetworkTopology,
    drop: Drop,
    schedule: Schedule,
    scheme: Scheme,
    policy: Policy,
    budget: ClusterBudget,
    solvers: SlotSolvers | None = None,
    out_of_cluster: bool = True,
    weight_floor: float = 1e-6,
    seed: int = 0,
    slot: int = 0,
    objective_weights: str = "pf",
) -> SlotResult:
    """Rates of the scheduled in-cluster users for one slot.

    Scheduled users served outside a cluster add their received power to
    that cluster's background noise unless ``out_of_cluster`` is False.
    PF weights ``1 / avg_rate`` fix the decoding order; the optimized policy
    maximizes the PF-weighted sum rate, or the plain sum rate when
    ``objective_weights == "equal"``.
    """
    solvers = solvers or SlotSolvers()
    n_cl = len(topology.clusters)
    rates = np.zeros(drop.n_users)
    res = SlotResult(rates, np.zeros(n_cl), np.zeros(n_cl), np.full(n_cl, np.nan), np.full(n_cl, np.nan), np.zeros(n_cl, dtype=int))
    if len(schedule) == 0:
        return res
    bs_cluster = topology.bs_cluster
    sched_cluster = bs_cluster[schedule.bs]

    if scheme == "baseline":
        mask = None
        if not out_of_cluster:
            mask = sched_cluster[None, :] == sched_cluster[:, None]
        r = baseline_rates(drop, schedule, mask)

    for c, bs in enumerate(topology.clusters):
        inside = sched_cluster == c
        users = schedule.users[inside]
        res.cluster_users[c] = users.size
        if users.size == 0:
            continue
        cs = cluster_channel(topology, drop, schedule, c, out_of_cluster)
        res.cluster_mac_cut[c] = mac_cut(cs)
        res.cluster_kappa[c] = kappa_of(cs.covariance() + np.diag(cs.sigma2))
        if scheme == "baseline":
            ru = r[inside]
        else:
            mu = 1.0 / np.maximum(drop.avg_rate[users], weight_floor)
            tiers = _tiers(topology, bs, budget)
            key = rng_for(seed, _STREAM_SOLVER, slot, c).integers(2**31)
            w = np.ones_like(mu) if objective_weights == "equal" else mu
            prof = quantization_for(cs, scheme, policy, w, budget, tiers, solvers, int(key))
            ru = sic_user_rates(cs, prof, decoding_order(mu))
            usage = wz_backhaul_usage if scheme == "wz" else su_backhaul_usage
            res.cluster_usage[c] = usage(cs, prof)
        rates[users] = ru
        res.cluster_sum[c] = float(np.sum(ru))
    return res


def update_pf_state(drop: Drop, rates, epsilon: float) -> Drop:
    """Exponential averaging of per-user rates (unscheduled users count as 0)."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    r = np.asarray(rates, dtype=float)
    return drop.with_avg((1.0 - epsilon) * drop.avg_rate + epsilon * r)


def pf_weights(drop: Drop, floor: float) -> np.ndarray:
    return 1.0 / np.maximum(drop.avg_rate, floor)


def reported_users(topology: NetworkTopology, drop: Drop) -> np.ndarray:
    """Users served by a cluster BS, in index order."""
    return np.flatnonzero(topology.bs_cluster[drop.serving] >= 0)


@dataclass
class CampaignResult:
    seeds: list[int]
    user_rates_mbps: np.ndarray  # long-term, reported users of all seeds
    percell_sumrate_mbps: float  # mean over seeds
    slot_sum_bits: np.ndarray  # (seeds, slots), summed over clusters
    slot_mac_cut_bits: np.ndarray
    slot_rows: list[tuple] = field(default_factory=list)


def run_campaign(
    config: SimConfig,
    seeds=None,
    solvers: SlotSolvers | None = None,
    budget_mbps_per_cell: float | None = None,
    scheme: Scheme | None = None,
    policy: Policy | None = None,
    budget_override: ClusterBudget | None = None,
) -> CampaignResult:
    """Fixed drop per seed, ``config.n_slots`` round-robin slots with PF weights."""
    seeds = [config.seed] if seeds is None else list(seeds)
    scheme = scheme or config.scheme
    policy = policy or config.policy
    solvers = solvers or SlotSolvers()
    T = config.n_slots
    all_rates, percell = [], []
    slot_sum = np.zeros((len(seeds), T))
    slot_cut = np.zeros((len(seeds), T))
    rows = []
    for si, seed in enumerate(seeds):
        top = generate_topology(config, seed)
        drop = realize_drop(top, config, seed)
        budget = budget_override or cluster_budget(config, top, budget_mbps_per_cell)
        total = np.zeros(drop.n_users)
        for t in range(T):
            sched = schedule_slot(drop, t)
            res = evaluate_slot(
                top, drop, sched, scheme, policy, budget, solvers,
                config.out_of_cluster_interference, config.pf_weight_floor, seed, t,
                config.optimized_weights,
            )
            total += res.rates
            drop = update_pf_state(drop, res.rates, config.pf_epsilon)
            slot_sum[si, t] = res.cluster_sum.sum()
            slot_cut[si, t] = res.cluster_mac_cut.sum()
            for c in range(len(top.clusters)):
                rows.append((
                    seed, t, c, int(res.cluster_users[c]),
                    config.bits_to_mbps(res.cluster_sum[c]),
                    config.bits_to_mbps(res.cluster_mac_cut[c]),
                    res.cluster_usage[c], res.cluster_kappa[c],
                ))
        if T == 0:
            continue
        rep = reported_users(top, drop)
        lt = config.bits_to_mbps(total[rep] / T)
        all_rates.append(lt)
        percell.append(float(np.sum(lt)) / top.n_cells)
    return CampaignResult(
        seeds=seeds,
        user_rates_mbps=np.concatenate(all_rates) if all_rates else np.empty(0),
        percell_sumrate_mbps=float(np.mean(percell)) if percell else 0.0,
        slot_sum_bits=slot_sum,
        slot_mac_cut_bits=slot_cut,
        slot_rows=rows,
    )


def cdf_table(rates) -> tuple[np.ndarray, np.ndarray]:
    """Sorted rates with empirical quantiles ``k / n``."""
    r = np.sort(np.asarray(rates, dtype=float))
    return r, np.arange(1, r.size + 1) / max(r.size, 1)

