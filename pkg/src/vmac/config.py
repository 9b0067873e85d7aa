"""Experiment configuration: schema, YAML loading and dumping.

Every model rejects unknown keys, so a typo in a config file fails loudly
before any computation starts.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Scheme = Literal["wz", "su", "baseline"]
Policy = Literal["uniform", "approx", "optimized"]


def db_to_linear(x):
    return 10.0 ** (x / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PathLoss(_Strict):
    """``intercept + slope * log10(d_km)`` in dB."""

    intercept_db: float
    slope_db: float

    def __call__(self, d_km):
        return self.intercept_db + self.slope_db * np.log10(d_km)


class SimConfig(_Strict):
    mode: Literal["multicell", "hetnet"] = "multicell"
    seed: int = Field(0, ge=0)
    n_slots: int = Field(200, ge=0)
    scheme: Scheme = "su"
    policy: Policy = "approx"
    # per-cell sum backhaul for multicell runs, Mbps
    budget_mbps_per_cell: float = Field(120.0, gt=0)
    # per-cluster tier budgets for hetnet runs, Mbps
    macro_budget_mbps: float = Field(189.0, ge=0)
    pico_budget_mbps: float = Field(81.0, ge=0)

    bandwidth_hz: float = Field(10e6, gt=0)
    user_power_dbm: float = 23.0
    noise_psd_dbm_hz: float = -169.0
    noise_figure_db: float = 7.0
    antenna_gain_dbi: float = 14.0
    pico_antenna_gain_dbi: float = 11.0
    sector_beamwidth_deg: float = Field(70.0, gt=0)
    sector_max_attenuation_db: float = Field(20.0, ge=0)
    macro_pathloss: PathLoss = PathLoss(intercept_db=128.1, slope_db=37.6)
    pico_pathloss: PathLoss = PathLoss(intercept_db=140.7, slope_db=36.7)
    macro_shadowing_db: float = Field(8.0, ge=0)
    pico_shadowing_db: float = Field(4.0, ge=0)
    shadowing_correlation: float = Field(0.5, ge=0, le=1)

    isd_m: float = Field(500.0, gt=0)
    users_per_sector: int = Field(20, ge=0)
    picos_per_sector: int = Field(3, ge=0)
    min_user_distance_m: float = Field(35.0, ge=0)
    pico_min_distance_m: float = Field(75.0, ge=0)

    pf_epsilon: float = Field(0.01, gt=0, lt=1)
    pf_weight_floor: float = Field(1e-6, gt=0)
    out_of_cluster_interference: bool = True
    # weights handed to the "optimized" policy: PF weights or plain sum rate
    optimized_weights: Literal["pf", "equal"] = "pf"

    @property
    def noise_dbm(self) -> float:
        return self.noise_psd_dbm_hz + linear_to_db(self.bandwidth_hz) + self.noise_figure_db

    @property
    def power_snr_linear(self) -> float:
        """User power over receiver noise power (linear)."""
        return db_to_linear(self.user_power_dbm - self.noise_dbm)

    def mbps_to_bits(self, mbps: float) -> float:
        return mbps * 1e6 / self.bandwidth_hz

    def bits_to_mbps(self, bits):
        return bits * self.bandwidth_hz / 1e6


class AcoConfig(_Strict):
    max_outer_iters: int = Field(100, gt=0)
    objective_tol: float = Field(1e-4, gt=0)
    inner_tol: float = Field(1e-8, gt=0)


class SuConfig(_Strict):
    max_iters: int = Field(2000, gt=0)
    tol: float = Field(1e-6, gt=0)
    n_random_starts: int = Field(5, ge=0)


class SolverConfig(_Strict):
    aco: AcoConfig = AcoConfig()
    su: SuConfig = SuConfig()
    bisection_tol: float = Field(1e-9, gt=0)


class SimulateSpec(_Strict):
    budgets_mbps: list[float] | None = None
    policies: list[Policy] | None = None


class SweepSpec(_Strict):
    budgets_mbps: list[float] = [60.0, 120.0, 180.0, 240.0, 300.0]
    schemes: list[Scheme] = ["baseline", "su"]
    policies: list[Policy] = ["uniform", "approx", "optimized"]

    @field_validator("budgets_mbps")
    @classmethod
    def _positive(cls, v):
        if any(not b > 0 for b in v):
            raise ValueError("budgets must be positive")
        return v


class GapSweepSpec(_Strict):
    n_instances: int = Field(1000, ge=0)
    n_bs: list[int] = [2, 3, 4]
    power_span_db: float = Field(60.0, ge=0)
    budget_range: tuple[float, float] = (0.5, 20.0)
    schemes: list[Literal["wz", "su"]] = ["wz"]
    kappa_range: tuple[float, float] = (1.5, 10.0)

    @model_validator(mode="after")
    def _ranges(self):
        lo, hi = self.budget_range
        if not 0 < lo <= hi:
            raise ValueError("budget_range must satisfy 0 < lo <= hi")
        klo, khi = self.kappa_range
        if not 1 < klo <= khi:
            raise ValueError("kappa_range must satisfy 1 < lo <= hi")
        if any(n < 1 for n in self.n_bs):
            raise ValueError("n_bs entries must be positive")
        return self


class OutputSpec(_Strict):
    dir: str = "out"


class ExperimentConfig(_Strict):
    sim: SimConfig = SimConfig()
    solver: SolverConfig = SolverConfig()
    simulate: SimulateSpec = SimulateSpec()
    sweep: SweepSpec = SweepSpec()
    gapcheck: GapSweepSpec = GapSweepSpec()
    seeds: list[int] = [0]
    output: OutputSpec = OutputSpec()

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if any(s < 0 for s in v):
            raise ValueError("seeds must be nonnegative")
        return v


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment file (empty file gives defaults)."""
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping")
    return ExperimentConfig.model_validate(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)
