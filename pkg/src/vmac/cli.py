"""Command-line front end: ``vmac {optimize,gapcheck,simulate,sweep}``.

Exit codes: 0 success, 1 usage or parse error, 2 solver failure,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from . import __version__
from .config import ExperimentConfig, SimConfig, load_config
from .errors import FactorizationError, InfeasibleError, SolverError
from .gap import diagonally_dominant_noise, su_gap_certificate, wz_gap_certificate
from .instance import Instance, InstanceParseError, parse_instance
from .io import write_csv, write_json
from .rates import ChannelState, rate_report, su_backhaul_per_bs
from .sim.engine import SlotSolvers, cdf_table, cluster_budget, run_campaign
from .sim.topology import generate_topology
from .su import SuSettings, TierSpec, approx_beta, q_from_backhaul, su_allocation_optimize
from .wz import aco_optimize, approx_alpha

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("vmac")

GAP_HEADER = ["index", "scheme", "status", "regime", "alpha", "kappa", "cutset", "achieved", "gap", "bound", "pass"]
SWEEP_HEADER = ["budget_mbps", "scheme", "policy", "percell_sumrate_mbps"]
CDF_HEADER = ["rate_mbps", "quantile"]
SLOT_HEADER = ["seed", "slot", "cluster", "n_users", "sum_rate_mbps", "mac_cut_mbps", "backhaul_bits", "kappa"]


class UsageError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment file")
    common.add_argument("--seed", type=int, help="override the seed list with a single seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--scheme", choices=["wz", "su", "baseline"])
    common.add_argument("--policy", choices=["uniform", "approx", "optimized"])
    common.add_argument("--verbose", action="store_true")

    p = _Parser(prog="vmac", description="Uplink C-RAN backhaul compression experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    o = sub.add_parser("optimize", parents=[common], help="optimize quantization for one instance")
    o.add_argument("--instance", type=Path, required=True)
    g = sub.add_parser("gapcheck", parents=[common], help="cut-set gap certificates")
    g.add_argument("--instance", type=Path)
    sub.add_parser("simulate", parents=[common], help="user-rate CDFs from the network simulation")
    sub.add_parser("sweep", parents=[common], help="per-cell sum rate versus backhaul budget")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be nonnegative")
        cfg = cfg.model_copy(update={"seeds": [args.seed]})
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.output.dir)


def _read_instance(path: Path) -> Instance:
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read instance: {exc}") from exc
    return parse_instance(text)


# ---------------------------------------------------------------- optimize


def solve_instance(inst: Instance, scheme: str, policy: str, cfg: ExperimentConfig) -> dict:
    cs, mu, C = inst.cs, inst.weights, inst.C
    solvers = SlotSolvers.from_config(cfg.solver)
    trace = []
    if policy == "uniform":
        prof = q_from_backhaul(cs, np.full(cs.L, C / cs.L))
    elif scheme == "wz" and policy == "approx":
        prof = approx_alpha(cs, C, solvers.bisection_tol)[1]
    elif scheme == "wz":
        prof, tr = aco_optimize(cs, mu, C, solvers.aco)
        trace = [float(v) for v in tr.objectives]
    elif policy == "approx":
        prof = approx_beta(cs, TierSpec(tuple(range(cs.L)), C), solvers.bisection_tol)[2]
    else:
        s = solvers.su
        seed = cfg.seeds[0] if cfg.seeds else 0
        alloc = su_allocation_optimize(cs, mu, C, SuSettings(s.max_iters, s.tol, s.n_random_starts, seed))
        prof = q_from_backhaul(cs, alloc)
    rep = rate_report(cs, prof, mu)
    usage = rep.wz_backhaul if scheme == "wz" else rep.su_backhaul
    if usage > C + 1e-6:
        raise InvariantError(f"backhaul usage {usage:.9g} exceeds budget {C:.9g}")
    return {
        "scheme": scheme,
        "policy": policy,
        "q": [float(x) for x in prof.q],
        "backhaul_per_bs": [float(x) for x in su_backhaul_per_bs(cs, prof)],
        "backhaul_usage": float(usage),
        "budget": C,
        "per_user_rates": [float(x) for x in rep.per_user_rates],
        "sum_rate": rep.sum_rate,
        "weighted_sum_rate": rep.weighted_sum_rate,
        "trace": trace,
    }


def cmd_optimize(args, cfg) -> int:
    scheme = args.scheme or "wz"
    if scheme == "baseline":
        raise UsageError("optimize needs --scheme wz or su")
    inst = _read_instance(args.instance)
    report = solve_instance(inst, scheme, args.policy or "approx", cfg)
    out = _out_dir(args, cfg) / "optimize_report.json"
    write_json(out, report)
    log.info("wrote %s", out)
    return EXIT_OK


# ---------------------------------------------------------------- gapcheck


def random_gap_instances(spec, seed: int, scheme: str):
    """Instances for the certificate sweep; SU instances are made diagonally dominant."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 10, 0 if scheme == "wz" else 1]))
    for _ in range(spec.n_instances):
        L = int(rng.choice(spec.n_bs))
        H = (rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))) / np.sqrt(2)
        P = 10 ** (rng.uniform(0, spec.power_span_db, L) / 10)
        C = float(rng.uniform(*spec.budget_range))
        if scheme == "wz":
            s2 = np.ones(L)
        else:
            s2 = diagonally_dominant_noise(H, P, float(rng.uniform(*spec.kappa_range)))
        yield ChannelState(H, P, s2), C


def _gap_row(i, cert):
    return [i, cert.scheme, cert.status, cert.regime or "-", cert.alpha, cert.kappa,
            cert.cutset, cert.achieved, cert.gap, cert.bound, "pass" if cert.passed else "fail"]


def cmd_gapcheck(args, cfg) -> int:
    spec = cfg.gapcheck
    schemes = [args.scheme] if args.scheme else list(spec.schemes)
    if "baseline" in schemes:
        raise UsageError("gapcheck supports --scheme wz or su")
    certify = {"wz": wz_gap_certificate, "su": su_gap_certificate}
    rows = []
    if args.instance:
        inst = _read_instance(args.instance)
        for s in schemes:
            rows.append(_gap_row(0, certify[s](inst.cs, inst.C)))
    else:
        seed = cfg.seeds[0] if cfg.seeds else 0
        for s in schemes:
            for i, (cs, C) in enumerate(random_gap_instances(spec, seed, s)):
                rows.append(_gap_row(i, certify[s](cs, C)))
    write_csv(_out_dir(args, cfg) / "gapcheck.csv", GAP_HEADER, rows)
    failed = [r for r in rows if r[-1] == "fail"]
    if failed:
        raise InvariantError(f"{len(failed)} certificate(s) violated their gap bound")
    return EXIT_OK


# ---------------------------------------------------------------- simulation


def _label(x: float) -> str:
    return f"{x:g}".replace(".", "p")


def manifest(cfg: ExperimentConfig, command: str) -> dict:
    sim = cfg.sim
    return {
        "command": command,
        "version": __version__,
        "seeds": list(cfg.seeds),
        "assumptions": {
            "sector_pattern": f"-min(12*(theta/{sim.sector_beamwidth_deg:g})^2, {sim.sector_max_attenuation_db:g}) dB added to {sim.antenna_gain_dbi:g} dBi",
            "pico_antenna_gain_dbi": sim.pico_antenna_gain_dbi,
            "out_of_cluster_interference": "folded into BS noise" if sim.out_of_cluster_interference else "ignored",
            "pf_epsilon": sim.pf_epsilon,
            "pf_weight_floor": sim.pf_weight_floor,
            "mbps_per_bit_per_channel_use": sim.bandwidth_hz / 1e6,
            "noise_dbm": sim.noise_dbm,
            "min_link_distance_m": sim.min_user_distance_m,
            "users_dropped_in": "every macro sector; rates reported for users served by cluster BSs",
            "uniform_policy": "equal backhaul per BS (per tier in HetNet), quantization from the per-BS compression rate",
            "hetnet_wz_budget": "macro and pico budgets pooled",
            "su_optimized_starts": "uniform, proportional-q allocation and seeded Dirichlet draws",
        },
        "config": cfg.model_dump(mode="json"),
    }


def _campaign(cfg, sim: SimConfig, scheme, policy, budget):
    solvers = SlotSolvers.from_config(cfg.solver)
    return run_campaign(sim, cfg.seeds, solvers, budget_mbps_per_cell=budget, scheme=scheme, policy=policy)


def _budget_label(sim: SimConfig, budget) -> float:
    if budget is not None:
        return float(budget)
    top = generate_topology(sim)
    return sim.bits_to_mbps(cluster_budget(sim, top).total) / top.cells_per_cluster


def cmd_simulate(args, cfg) -> int:
    sim = cfg.sim
    scheme = args.scheme or sim.scheme
    policies = [args.policy] if args.policy else (cfg.simulate.policies or [sim.policy])
    budgets = cfg.simulate.budgets_mbps or [None]
    out = _out_dir(args, cfg)
    runs = [("none", None)] if scheme == "baseline" else [(p, b) for b in budgets for p in policies]
    summary = []
    for policy, budget in runs:
        res = _campaign(cfg, sim, scheme, policy if scheme != "baseline" else "approx", budget)
        label = _budget_label(sim, budget)
        name = f"cdf_{scheme}" if scheme == "baseline" else f"cdf_{scheme}_{policy}_{_label(label)}mbps"
        r, qn = cdf_table(res.user_rates_mbps)
        write_csv(out / f"{name}.csv", CDF_HEADER, zip(r, qn))
        summary.append([label, scheme, policy, res.percell_sumrate_mbps])
        if args.verbose:
            write_csv(out / f"slots_{name[4:]}.csv", SLOT_HEADER, res.slot_rows)
        log.info("%s: per-cell sum rate %.3f Mbps", name, res.percell_sumrate_mbps)
    write_csv(out / "summary.csv", SWEEP_HEADER, summary)
    write_json(out / "manifest.json", manifest(cfg, "simulate"))
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    sim = cfg.sim
    spec = cfg.sweep
    schemes = [args.scheme] if args.scheme else list(spec.schemes)
    policies = [args.policy] if args.policy else list(spec.policies)
    out = _out_dir(args, cfg)
    rows = []
    base = None
    for budget in spec.budgets_mbps:
        for scheme in schemes:
            if scheme == "baseline":
                if base is None:
                    base = _campaign(cfg, sim, "baseline", "approx", budget).percell_sumrate_mbps
                rows.append([budget, "baseline", "none", base])
                continue
            for policy in policies:
                res = _campaign(cfg, sim, scheme, policy, budget)
                rows.append([budget, scheme, policy, res.percell_sumrate_mbps])
                log.info("budget %g %s/%s: %.3f Mbps", budget, scheme, policy, res.percell_sumrate_mbps)
    write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    write_json(out / "manifest.json", manifest(cfg, "sweep"))
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "gapcheck": cmd_gapcheck, "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, InstanceParseError, ValidationError, yaml.YAMLError, OSError) as exc:
        print(f"vmac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # yaml and config shape problems surface as ValueError subclasses
        if isinstance(exc, FactorizationError):
            print(f"vmac: solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"vmac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, InfeasibleError) as exc:
        print(f"vmac: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvariantError, AssertionError) as exc:
        print(f"vmac: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
