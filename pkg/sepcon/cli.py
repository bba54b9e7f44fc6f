"""Command-line interface for sepcon."""

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from sepcon import __version__
from sepcon.belief import filter_history, marginals, total_variation
from sepcon.config import load_system
from sepcon.constants import (
    DEFAULT_REPRESENTATION,
    EXAMPLE_RHO,
    EXAMPLE_SAMPLES,
    OUTPUT_DIR,
    OUTPUT_ENV_VAR,
)
from sepcon.errors import BudgetError, SepconError, ValidationError
from sepcon.gaussian import GaussianInit, binned_strategy_check, example_report
from sepcon.instances import tiny_suite
from sepcon.learning import learn_online
from sepcon.oracle import brute_force_posterior, exhaustive_optimal
from sepcon.repository import ArtifactRepository
from sepcon.simulator import cost_equality_check, monte_carlo_cost, run_episode, trace_records
from sepcon.solver import Solution, solve
from sepcon.system import System
from sepcon.ui.console import ConsoleUI, print_json_colored
from sepcon.utils import config_hash, fmt

EXIT_CODES = {"config": 2, "validation": 3, "budget": 4}
ORACLE_TOL = 1e-9
NEEDS_CONFIG = ("solve", "simulate", "filter-trace")


@dataclass
class RunConfig:
    """Validated command-line settings for one run."""

    command: str
    out: Path
    seed: int
    config: Optional[str] = None
    verbose: bool = False
    kind: str = DEFAULT_REPRESENTATION
    resolution: Optional[int] = None
    beta: Optional[float] = None
    coupling: Optional[str] = None
    episodes: int = 1000
    mode: str = "exact"
    workers: int = 1
    replan_every: Optional[int] = None
    trace_episodes: int = 1
    rho: float = EXAMPLE_RHO
    samples: int = EXAMPLE_SAMPLES
    instances: int = 0
    method: str = "auto"
    solution: Optional[str] = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        known = {k: v for k, v in vars(args).items() if k in cls.__dataclass_fields__}
        if getattr(args, "config_path", None):
            known["config"] = args.config_path
        cfg = cls(**known)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Raise ValidationError naming the first out-of-range flag."""
        if self.command in NEEDS_CONFIG and not self.config:
            raise ValidationError("a system config is required", "--config")
        if self.seed < 0:
            raise ValidationError("must be >= 0", "--seed")
        if self.resolution is not None and self.resolution < 1:
            raise ValidationError("must be >= 1", "--resolution")
        if self.beta is not None and self.beta < 0:
            raise ValidationError("must be >= 0", "--beta")
        if self.episodes < 1:
            raise ValidationError("must be >= 1", "--episodes")
        if self.workers < 1:
            raise ValidationError("must be >= 1", "--workers")
        if self.replan_every is not None and self.replan_every < 1:
            raise ValidationError("must be >= 1", "--replan-every")
        if self.trace_episodes < 0:
            raise ValidationError("must be >= 0", "--trace-episodes")
        if not -1.0 <= self.rho <= 1.0:
            raise ValidationError("must lie in [-1, 1]", "--rho")
        if self.samples < 0:
            raise ValidationError("must be >= 0", "--samples")
        if self.instances < 0:
            raise ValidationError("must be >= 0", "--instances")

    @property
    def progress(self) -> Optional[Callable[[str], None]]:
        return ConsoleUI.dim if self.verbose else None


def _load(cfg: RunConfig) -> Tuple[System, str]:
    """Load the configured system with flag overrides; returns it with its config hash."""
    system, raw = load_system(cfg.config)
    overrides = {k: v for k, v in (("beta", cfg.beta), ("coupling", cfg.coupling)) if v is not None}
    if overrides:
        system = system.with_overrides(beta=cfg.beta, coupling=cfg.coupling)
        return system, config_hash({"config": raw, "overrides": overrides})
    return system, config_hash(raw)


def _solve(cfg: RunConfig, system: System) -> Solution:
    ConsoleUI.dim(f"Solving {system.name} ({cfg.kind}, T={system.horizon}, |X|={system.num_states})")
    return solve(system, cfg.kind, cfg.resolution, progress=cfg.progress)


def _strategy(cfg: RunConfig, system: System, digest: str) -> Any:
    """Strategy from a saved solution when --solution is given, else solved afresh."""
    if cfg.solution is None:
        return _solve(cfg, system).strategy
    repo = ArtifactRepository(cfg.out)
    solution = repo.load_solution(Path(cfg.solution), system, digest)
    ConsoleUI.dim(f"Loaded {solution.kind} solution from {cfg.solution}")
    return solution.strategy


def cmd_solve(cfg: RunConfig) -> None:
    """Handle solve command."""
    system, digest = _load(cfg)
    solution = _solve(cfg, system)
    repo = ArtifactRepository(cfg.out)
    target = repo.prepare(f"{system.name}_solve")
    meta = repo.meta(digest, cfg.seed, system=system.name, kind=cfg.kind)
    repo.save_solution(target, solution, meta)
    repo.write_csv(
        target / "solution.csv",
        ("stage", "node", "belief", "value", "action"),
        solution.table(),
        meta,
    )
    ConsoleUI.success(f"V_0 = {fmt(solution.initial_value())}")
    ConsoleUI.table(
        ("stage", "size"),
        [{"stage": t, "size": len(v)} for t, v in enumerate(solution.values)],
    )
    ConsoleUI.dim(f"Saved to: {target}")


def _summary_rows(pairs: Sequence[Tuple[str, Any]]) -> List[Dict[str, Any]]:
    return [{"metric": k, "value": v} for k, v in pairs]


def cmd_simulate(cfg: RunConfig) -> None:
    """Handle simulate command."""
    system, digest = _load(cfg)
    strategy = _strategy(cfg, system, digest)
    repo = ArtifactRepository(cfg.out)
    target = repo.prepare(f"{system.name}_simulate_{cfg.mode}")
    meta = repo.meta(digest, cfg.seed, system=system.name, mode=cfg.mode)

    if cfg.mode == "learned":
        learned = learn_online(
            system,
            strategy,
            cfg.episodes,
            cfg.seed,
            replan_every=cfg.replan_every,
            kind=cfg.kind,
            resolution=cfg.resolution,
            progress=cfg.progress,
        )
        repo.write_csv(
            target / "tv_curve.csv",
            ("episode", "tv"),
            [{"episode": i, "tv": tv} for i, tv in enumerate(learned.tv_curve)],
            meta,
        )
        est = monte_carlo_cost(
            system, strategy, "learned", cfg.episodes, cfg.seed, learned.estimate, cfg.workers
        )
        extra = [("final_tv", learned.tv_curve[-1]), ("replans", learned.replans)]
        belief_system = system.with_actual_kernel(learned.estimate.kernel())
    else:
        report = cost_equality_check(system, strategy, cfg.episodes, cfg.seed, cfg.workers)
        est = report.estimate
        extra = [
            ("coinciding_episodes", report.coinciding),
            ("mismatch_zero_when_coinciding", report.mismatch_zero_when_coinciding),
            ("penalty_iff_states_equal", report.penalty_iff_equal),
            ("costs_agree", report.costs_agree),
        ]
        belief_system = None

    rows = _summary_rows(
        [
            ("episodes", est.episodes),
            ("J", est.model_cost),
            ("J_stderr", est.model_stderr),
            ("J_hat", est.actual_cost),
            ("J_hat_stderr", est.actual_stderr),
            ("gap", est.gap),
            ("gap_stderr", est.gap_stderr),
            ("mismatch", est.mismatch),
        ]
        + extra
    )
    repo.write_csv(target / "summary.csv", ("metric", "value"), rows, meta)
    traces = [
        trace_records(
            run_episode(
                system, strategy, cfg.mode, seed=cfg.seed + i, belief_system=belief_system, update=False
            )
        )
        for i in range(min(cfg.trace_episodes, cfg.episodes))
    ]
    if traces:
        repo.write_trace(target / "trace.jsonl", traces, meta)
    ConsoleUI.table(("metric", "value"), rows)
    ConsoleUI.dim(f"Saved to: {target}")


def cmd_filter_trace(cfg: RunConfig) -> None:
    """Handle filter-trace command: one episode, filter beliefs checked against path enumeration."""
    system, digest = _load(cfg)
    strategy = _strategy(cfg, system, digest)
    traj = run_episode(system, strategy, "exact", seed=cfg.seed)
    observations = traj.observations + [traj.y_final]
    beliefs = filter_history(system, traj.actions, observations)
    rows = []
    for t, pi in enumerate(beliefs):
        try:
            exact = brute_force_posterior(system, traj.actions[:t], observations[: t + 1])
            gap: Optional[float] = total_variation(pi, exact)
        except BudgetError:
            gap = None
        model, actual = marginals(pi)
        rows.append(
            {
                "stage": t,
                "u": traj.actions[t] if t < len(traj.actions) else None,
                "y": observations[t],
                "belief": pi.flat,
                "model_marginal": model,
                "actual_marginal": actual,
                "brute_force_tv": gap,
            }
        )
    repo = ArtifactRepository(cfg.out)
    target = repo.prepare(f"{system.name}_filter")
    meta = repo.meta(digest, cfg.seed, system=system.name)
    columns = ("stage", "u", "y", "belief", "model_marginal", "actual_marginal", "brute_force_tv")
    repo.write_csv(target / "filter.csv", columns, rows, meta)
    repo.write_trace(target / "trace.jsonl", [trace_records(traj)], meta)
    ConsoleUI.table(("stage", "u", "y", "model_marginal", "brute_force_tv"), rows)
    ConsoleUI.dim(f"Saved to: {target}")


def cmd_example(cfg: RunConfig) -> None:
    """Handle example command."""
    report = example_report(cfg.rho, cfg.samples, cfg.seed)
    digest = config_hash({"example": "gaussian", "rho": cfg.rho, "samples": cfg.samples})
    repo = ArtifactRepository(cfg.out)
    sign = "m" if cfg.rho < 0 else "p"
    target = repo.prepare(f"example_rho_{sign}{abs(cfg.rho):g}")
    meta = repo.meta(digest, cfg.seed, rho=cfg.rho)
    rows = report.rows()
    repo.write_csv(target / "example.csv", ("quantity", "optimal", "grid", "published"), rows, meta)
    walk = [
        {"step": rec.step, "coefficient": key, "value": value}
        for rec in report.walkthrough
        for key, value in rec.coefficients.items()
    ]
    repo.write_csv(target / "walkthrough.csv", ("step", "coefficient", "value"), walk, meta)

    ConsoleUI.heading(f"Gaussian example (rho = {fmt(cfg.rho)})")
    ConsoleUI.table(("quantity", "optimal", "grid", "published"), rows)
    if cfg.samples > 0:
        ConsoleUI.dim(
            f"sampled cost {fmt(report.sampled_cost)} ± {fmt(report.sampled_stderr)} "
            f"({cfg.samples} draws)"
        )
        check = binned_strategy_check(GaussianInit(cfg.rho), min(cfg.samples, 10**5), seed=cfg.seed)
        ConsoleUI.dim(
            f"binned u2: {fmt(check.binned_cost)} vs linear {fmt(check.linear_cost)} "
            f"({'nonlinear wins' if check.nonlinear_wins else 'linear not beaten'})"
        )
    if cfg.verbose:
        ConsoleUI.label("Walkthrough")
        print_json_colored([{"step": r.step, "formula": r.formula, **r.coefficients} for r in report.walkthrough])
    if report.discrepancy:
        ConsoleUI.warn(
            f"u2 gain {fmt(report.optimal.gain_u2)} differs from the published 0.5 "
            f"(which is optimal at rho = {fmt(report.consistent_rho)})"
        )
    ConsoleUI.dim(f"Saved to: {target}")


def cmd_oracle_check(cfg: RunConfig) -> None:
    """Handle oracle-check command: DP value against exhaustive strategy search."""
    systems: List[System] = []
    parts: Dict[str, Any] = {"instances": cfg.instances, "seed": cfg.seed}
    if cfg.config:
        system, digest = _load(cfg)
        systems.append(system)
        parts["config"] = digest
    systems.extend(tiny_suite(cfg.instances, cfg.seed))
    if not systems:
        raise ValidationError("give a system config or --instances N", "oracle-check")

    rows = []
    for system in systems:
        dp = solve(system, "alpha", progress=cfg.progress).initial_value()
        result = exhaustive_optimal(system, cfg.method, progress=cfg.progress)
        diff = abs(dp - result.cost)
        rows.append(
            {
                "system": system.name,
                "dp": dp,
                "oracle": result.cost,
                "diff": diff,
                "method": result.method,
                "strategies": result.strategies,
                "ok": diff <= ORACLE_TOL,
            }
        )
    repo = ArtifactRepository(cfg.out)
    target = repo.prepare("oracle_check")
    meta = repo.meta(config_hash(parts), cfg.seed)
    columns = ("system", "dp", "oracle", "diff", "method", "strategies", "ok")
    repo.write_csv(target / "oracle.csv", columns, rows, meta)
    ConsoleUI.table(columns, rows)
    ConsoleUI.dim(f"Saved to: {target}")
    failed = [r["system"] for r in rows if not r["ok"]]
    if failed:
        raise SepconError(f"DP and oracle disagree beyond {ORACLE_TOL:g} on: {', '.join(failed)}")
    ConsoleUI.success(f"DP matches oracle on {len(rows)} system(s)")


COMMANDS: Dict[str, Callable[[RunConfig], None]] = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "filter-trace": cmd_filter_trace,
    "example": cmd_example,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepcon",
        description="sepcon - separated control strategies for a CPS model run beside the actual CPS",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  sepcon solve tiny                         # fixtures/tiny.json, alpha vectors
  sepcon solve tiny --kind grid --resolution 8
  sepcon simulate tiny --episodes 10000 --seed 7
  sepcon simulate learning --mode learned --episodes 500
  sepcon simulate tiny --solution runs/tiny_solve/solution.json
  sepcon filter-trace noiseless --seed 3
  sepcon example --rho -0.5
  sepcon oracle-check tiny --instances 10

Outputs go to --out (default: ${OUTPUT_ENV_VAR} or ./runs).
        """,
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--out", type=Path, default=OUTPUT_DIR, help="Output directory")
    common.add_argument("--seed", type=int, default=0, help="Base random seed")
    common.add_argument("-v", "--verbose", action="store_true", help="Show progress")

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--beta", type=float, default=None, help="Override mismatch weight")
    system.add_argument(
        "--coupling", choices=("shared", "independent"), default=None, help="Override coupling"
    )
    system.add_argument(
        "--kind", choices=("alpha", "grid"), default=DEFAULT_REPRESENTATION, help="Value representation"
    )
    system.add_argument(
        "--grid-m", "--resolution", dest="resolution", type=int, default=None, help="Grid resolution m"
    )
    system.add_argument("--config", dest="config_path", default=None, help="Path to a system JSON")

    sub = parser.add_subparsers(dest="command")

    solve_p = sub.add_parser("solve", parents=[common, system], help="Solve the belief-space DP")
    solve_p.add_argument("config", nargs="?", default=None, help="Fixture name or path to a system JSON")

    sim_p = sub.add_parser("simulate", parents=[common, system], help="Run model and actual side by side")
    sim_p.add_argument("config", nargs="?", default=None, help="Fixture name or path to a system JSON")
    sim_p.add_argument("-n", "--episodes", type=int, default=1000, help="Episode count")
    sim_p.add_argument("--mode", choices=("exact", "learned"), default="exact", help="Belief mode")
    sim_p.add_argument("--workers", type=int, default=1, help="Parallel episode workers")
    sim_p.add_argument("--replan-every", type=int, default=None, help="Re-solve every E learning episodes")
    sim_p.add_argument("--trace-episodes", type=int, default=1, help="Episodes written to trace.jsonl")
    sim_p.add_argument("--solution", default=None, help="Reuse a saved solution.json instead of solving")

    filt_p = sub.add_parser("filter-trace", parents=[common, system], help="Trace the joint filter on one episode")
    filt_p.add_argument("config", nargs="?", default=None, help="Fixture name or path to a system JSON")
    filt_p.add_argument("--solution", default=None, help="Reuse a saved solution.json instead of solving")

    ex_p = sub.add_parser("example", parents=[common], help="Two-subsystem Gaussian example")
    ex_p.add_argument("--rho", type=float, default=EXAMPLE_RHO, help="Initial-state covariance")
    ex_p.add_argument("--samples", type=int, default=EXAMPLE_SAMPLES, help="Monte Carlo draws (0 disables)")

    or_p = sub.add_parser("oracle-check", parents=[common, system], help="Compare DP against exhaustive search")
    or_p.add_argument("config", nargs="?", default=None, help="Optional fixture name or path")
    or_p.add_argument("--instances", type=int, default=0, help="Random tiny instances to add")
    or_p.add_argument("--method", choices=("auto", "enumerate", "tree"), default="auto", help="Oracle search")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    ConsoleUI.banner(__version__)
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 0
    try:
        cfg = RunConfig.from_args(args)
        COMMANDS[cfg.command](cfg)
        return 0
    except SepconError as e:
        ConsoleUI.error(str(e))
        ConsoleUI.failure_line(e.kind, str(e))
        return EXIT_CODES.get(e.kind, 1)
    except Exception as e:
        ConsoleUI.error(str(e))
        ConsoleUI.failure_line("runtime", f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
