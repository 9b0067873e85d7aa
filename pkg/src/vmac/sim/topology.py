"""Hexagonal layouts with wraparound, user drops and large-scale gains.

Sites sit on a hexagonal lattice with the first lattice vector along the
x axis.  Each site carries three sectors with boresights 30, 150 and 270
degrees, and each sector covers the rhombus spanned by the two cell-hexagon
vertices adjacent to its boresight.  Wraparound uses the six translates of
the whole layout, so every link is measured to the nearest image.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..config import SimConfig, db_to_linear

BORESIGHTS = np.array([30.0, 150.0, 270.0])
MACRO, PICO = 0, 1

# rng stream ids
_STREAM_PICO, _STREAM_USERS, _STREAM_SHADOW = 0, 1, 2


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a ``(seed, stream, ...)`` key."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def hex_sites(rings: int, isd: float) -> np.ndarray:
    """Site coordinates for all lattice points within ``rings`` hops, center first."""
    a1 = np.array([isd, 0.0])
    a2 = np.array([isd / 2, isd * np.sqrt(3) / 2])
    pts = []
    for a in range(-rings, rings + 1):
        for b in range(-rings, rings + 1):
            ring = max(abs(a), abs(b), abs(a + b))
            if ring <= rings:
                p = a * a1 + b * a2
                ang = np.mod(np.arctan2(p[1], p[0]), 2 * np.pi)
                pts.append((ring, round(ang, 9), p))
    pts.sort(key=lambda t: (t[0], t[1]))
    return np.array([p for _, _, p in pts])


def wrap_shifts(rings: int, isd: float) -> np.ndarray:
    """Zero shift plus the six translates of a ``rings``-ring layout."""
    a1 = np.array([isd, 0.0])
    a2 = np.array([isd / 2, isd * np.sqrt(3) / 2])
    base = (rings + 1) * a1 + rings * a2
    out = [np.zeros(2)]
    for k in range(6):
        t = np.pi / 3 * k
        R = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        out.append(R @ base)
    return np.array(out)


def sector_vertices(isd: float, boresight_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Two edge vectors spanning the sector rhombus (from the site)."""
    R = isd / np.sqrt(3)
    t1 = np.deg2rad(boresight_deg - 60.0)
    t2 = np.deg2rad(boresight_deg + 60.0)
    return R * np.array([np.cos(t1), np.sin(t1)]), R * np.array([np.cos(t2), np.sin(t2)])


def sample_in_sector(rng, site, isd, boresight, n) -> np.ndarray:
    u, w = sector_vertices(isd, boresight)
    a = rng.random((n, 2))
    return site + a[:, :1] * u + a[:, 1:] * w


def wrapped_offsets(points: np.ndarray, bs: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Vector from the nearest image of each BS to each point, shape (B, K, 2)."""
    d = points[None, :, None, :] - (bs[:, None, None, :] + shifts[None, None, :, :])
    k = np.argmin(np.sum(d * d, axis=-1), axis=-1)
    return np.take_along_axis(d, k[..., None, None], axis=2)[:, :, 0, :]


def sector_pattern_db(theta_deg, beamwidth=70.0, max_att=20.0):
    """Parabolic three-sector horizontal pattern, 0 dB at boresight."""
    t = (np.asarray(theta_deg) + 180.0) % 360.0 - 180.0
    return -np.minimum(12.0 * (t / beamwidth) ** 2, max_att)


@dataclass(frozen=True)
class NetworkTopology:
    mode: str
    isd: float
    site_pos: np.ndarray
    bs_pos: np.ndarray
    bs_tier: np.ndarray  # MACRO or PICO
    bs_boresight: np.ndarray  # deg; nan for omni picos
    bs_sector: np.ndarray  # host macro sector (itself for macro BSs)
    bs_shadow_site: np.ndarray  # shadowing is shared by BSs at the same site
    shifts: np.ndarray
    clusters: tuple[np.ndarray, ...]
    cells_per_cluster: int

    @property
    def n_bs(self) -> int:
        return self.bs_pos.shape[0]

    @property
    def n_sites(self) -> int:
        return self.site_pos.shape[0]

    @property
    def macro_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bs_tier == MACRO)

    @property
    def pico_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bs_tier == PICO)

    @property
    def bs_cluster(self) -> np.ndarray:
        out = np.full(self.n_bs, -1)
        for c, idx in enumerate(self.clusters):
            out[idx] = c
        return out

    @property
    def n_cells(self) -> int:
        return self.cells_per_cluster * len(self.clusters)


def generate_topology(config: SimConfig, seed: int | None = None) -> NetworkTopology:
    """Multicell: 19 sites, central 7 form one cluster.  HetNet: 7 sites, one cluster per site."""
    seed = config.seed if seed is None else seed
    isd = config.isd_m
    rings = 2 if config.mode == "multicell" else 1
    sites = hex_sites(rings, isd)
    shifts = wrap_shifts(rings, isd)
    S = sites.shape[0]
    macro_pos = np.repeat(sites, 3, axis=0)
    bore = np.tile(BORESIGHTS, S)
    n_macro = 3 * S
    pos = [macro_pos]
    tier = [np.zeros(n_macro, dtype=int)]
    sector = [np.arange(n_macro)]
    shadow = [np.repeat(np.arange(S), 3)]
    boresight = [bore]

    if config.mode == "multicell":
        clusters = (np.arange(21),)
        cells = 7
    else:
        rng = rng_for(seed, _STREAM_PICO)
        picos = []
        host = []
        for s in range(n_macro):
            placed = 0
            for _ in range(100000):
                if placed == config.picos_per_sector:
                    break
                p = sample_in_sector(rng, macro_pos[s], isd, bore[s], 1)
                others = np.vstack([sites] + ([np.array(picos)] if picos else []))
                d = np.linalg.norm(wrapped_offsets(p, others, shifts)[:, 0, :], axis=-1)
                if np.all(d >= config.pico_min_distance_m):
                    picos.append(p[0])
                    host.append(s)
                    placed += 1
            else:  # pragma: no cover
                raise RuntimeError("could not place picos with the required separation")
        n_pico = len(picos)
        pos.append(np.array(picos).reshape(-1, 2))
        tier.append(np.ones(n_pico, dtype=int))
        sector.append(np.array(host, dtype=int))
        shadow.append(S + np.arange(n_pico))
        boresight.append(np.full(n_pico, np.nan))
        host = np.array(host, dtype=int)
        clusters = tuple(
            np.concatenate([np.arange(3 * c, 3 * c + 3), n_macro + np.flatnonzero(host // 3 == c)])
            for c in range(S)
        )
        cells = 1

    return NetworkTopology(
        mode=config.mode,
        isd=isd,
        site_pos=sites,
        bs_pos=np.vstack(pos),
        bs_tier=np.concatenate(tier),
        bs_boresight=np.concatenate(boresight),
        bs_sector=np.concatenate(sector),
        bs_shadow_site=np.concatenate(shadow),
        shifts=shifts,
        clusters=clusters,
        cells_per_cluster=cells,
    )


@dataclass(frozen=True)
class Drop:
    """One fixed realization of user positions and large-scale gains.

    ``gain[b, k]`` is the linear power gain from user ``k`` to BS ``b``
    normalized by the receiver noise power, so ``power * gain`` is an SNR.
    """

    user_pos: np.ndarray
    gain: np.ndarray
    serving: np.ndarray
    power: float
    avg_rate: np.ndarray = field(repr=False)
    users_by_bs: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def n_users(self) -> int:
        return self.user_pos.shape[0]

    def with_avg(self, avg) -> "Drop":
        return replace(self, avg_rate=np.asarray(avg, dtype=float))


def shadowing_db(rng, n_users: int, n_sites: int, sigma_db, rho: float) -> np.ndarray:
    """Site-correlated log-normal shadowing, shape (n_sites, n_users).

    ``sqrt(rho) a_k + sqrt(1 - rho) b_{s,k}`` scaled by the per-site ``sigma_db``.
    """
    a = rng.standard_normal(n_users)
    b = rng.standard_normal((n_sites, n_users))
    z = np.sqrt(rho) * a[None, :] + np.sqrt(1.0 - rho) * b
    return np.asarray(sigma_db, dtype=float).reshape(-1, 1) * z


def link_gain_db(topology: NetworkTopology, config: SimConfig, users: np.ndarray, shadow: np.ndarray) -> np.ndarray:
    """Antenna gain plus pattern minus path loss minus shadowing (B x K), dB."""
    off = wrapped_offsets(users, topology.bs_pos, topology.shifts)
    d_km = np.maximum(np.linalg.norm(off, axis=-1), config.min_user_distance_m) / 1000.0
    macro = topology.bs_tier == MACRO
    g = np.empty(d_km.shape)
    theta = np.rad2deg(np.arctan2(off[macro, :, 1], off[macro, :, 0])) - topology.bs_boresight[macro, None]
    g[macro] = (
        config.antenna_gain_dbi
        + sector_pattern_db(theta, config.sector_beamwidth_deg, config.sector_max_attenuation_db)
        - config.macro_pathloss(d_km[macro])
    )
    g[~macro] = config.pico_antenna_gain_dbi - config.pico_pathloss(d_km[~macro])
    return g - shadow[topology.bs_shadow_site]


def realize_drop(topology: NetworkTopology, config: SimConfig, seed: int | None = None) -> Drop:
    """Drop ``users_per_sector`` users in every macro sector and associate by strongest gain."""
    seed = config.seed if seed is None else seed
    rng = rng_for(seed, _STREAM_USERS)
    macro = topology.macro_indices
    pts = []
    for s in macro:
        site = topology.bs_pos[s]
        got = np.empty((0, 2))
        while got.shape[0] < config.users_per_sector:
            p = sample_in_sector(rng, site, topology.isd, topology.bs_boresight[s], config.users_per_sector)
            p = p[np.linalg.norm(p - site, axis=1) >= config.min_user_distance_m]
            got = np.vstack([got, p])
        pts.append(got[: config.users_per_sector])
    users = np.vstack(pts) if pts else np.empty((0, 2))

    n_shadow = int(topology.bs_shadow_site.max()) + 1
    sigma = np.where(np.arange(n_shadow) < topology.n_sites, config.macro_shadowing_db, config.pico_shadowing_db)
    shadow = shadowing_db(rng_for(seed, _STREAM_SHADOW), users.shape[0], n_shadow, sigma, config.shadowing_correlation)
    g_db = link_gain_db(topology, config, users, shadow)
    gain = db_to_linear(g_db)
    serving = np.argmax(gain, axis=0) if users.shape[0] else np.empty(0, dtype=int)
    by_bs = tuple(np.flatnonzero(serving == b) for b in range(topology.n_bs))
    return Drop(
        user_pos=users,
        gain=gain,
        serving=serving,
        power=config.power_snr_linear,
        avg_rate=np.zeros(users.shape[0]),
        users_by_bs=by_bs,
    )
