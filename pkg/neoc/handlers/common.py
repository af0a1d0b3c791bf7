"""Shared CLI plumbing: common flags, RunConfig assembly, problem/basis/u0 resolution."""
import argparse
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from neoc.config import settings
from neoc.errors import UsageError
from neoc.schemas import RunConfig
from neoc.services.basis import (
    BasisSet,
    QuadratureGrid,
    default_order,
    gauss_grid,
    monomial_basis,
    parse_basis_spec,
    quadratic_basis,
    warn_if_nonpolynomial,
)
from neoc.services.export import write_json
from neoc.services.hjb import HjbOptions
from neoc.services.laws import ControlLaw, LinearGain, expr_law
from neoc.services.lqr import lqr_problem, stabilizing_gain
from neoc.services.problem import ProblemSpec, builtin, catalog, load_problem_file

logger = logging.getLogger(__name__)


def add_common_args(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--builtin", help="catalog problem name")
    source.add_argument("--problem", help="path to a problem file")
    parser.add_argument("--basis", help="multi-indices, e.g. '2;4;6' or '2 0;1 1;0 2'")
    parser.add_argument("--quad-order", type=int, help="Gauss-Legendre nodes per axis")
    parser.add_argument("--max-iter", type=int, default=settings.max_iter)
    parser.add_argument("--tol", type=float, default=settings.tol_w)
    parser.add_argument("--u0", help="initial admissible law, one expression per control, comma separated")
    parser.add_argument("--out", default=settings.output_dir)
    parser.add_argument("--dt", type=float, default=settings.dt)
    parser.add_argument("--horizon", type=float, default=settings.horizon)
    parser.add_argument("--grid-pts", type=int, default=settings.grid_pts)
    parser.add_argument("--seed", type=int, default=settings.seed)
    parser.add_argument("--recalc", action="store_true", help="also solve at the perturbed parameter")


def parse_vector(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"expected a space-separated vector, got '{text}'") from None


def build_config(args: argparse.Namespace) -> RunConfig:
    raw = {
        "command": args.command,
        "builtin": args.builtin,
        "problem": args.problem,
        "basis": args.basis,
        "quad_order": args.quad_order,
        "max_iter": args.max_iter,
        "tol": args.tol,
        "u0": [t.strip() for t in args.u0.split(",")] if args.u0 else None,
        "delta": parse_vector(getattr(args, "delta", None)),
        "delta_param": getattr(args, "delta_param", None),
        "deltas": parse_deltas(getattr(args, "deltas", None)),
        "steps": parse_steps(getattr(args, "steps", None)),
        "recalc": args.recalc,
        "polish": getattr(args, "polish", False),
        "out": args.out,
        "dt": args.dt,
        "horizon": args.horizon,
        "grid_pts": args.grid_pts,
        "seed": args.seed,
    }
    try:
        return RunConfig(**raw)
    except ValidationError as e:
        raise UsageError(str(e)) from e


def parse_steps(text: str | None) -> list[int]:
    if text is None:
        return [1]
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"--steps expects a comma-separated list of integers, got '{text}'") from None


def parse_deltas(text: str | None) -> list[list[float]] | None:
    """'0.1,0.2' (first parameter) or '0.1 0;0 0.2' (full vectors separated by ';')."""
    if text is None:
        return None
    if ";" in text:
        return [parse_vector(chunk) for chunk in text.split(";") if chunk.strip()]
    return [[v] for v in parse_vector(text)]


@dataclass
class Setup:
    problem: ProblemSpec
    basis: BasisSet
    grid: QuadratureGrid
    opts: HjbOptions
    out_dir: Path


def load(cfg: RunConfig) -> ProblemSpec:
    if cfg.builtin:
        return builtin(cfg.builtin)
    return load_problem_file(cfg.problem)


def resolve_basis(cfg: RunConfig, problem: ProblemSpec) -> BasisSet:
    spec = cfg.basis
    if spec is None and cfg.builtin:
        spec = catalog()[cfg.builtin].basis
    if spec is None:
        if problem.lqr is not None:
            return quadratic_basis(problem.state_dim)
        raise UsageError("--basis is required for this problem")
    return monomial_basis(problem.state_dim, parse_basis_spec(spec, problem.state_dim))


def resolve_u0(cfg: RunConfig, problem: ProblemSpec) -> ControlLaw:
    """--u0 as given; LQR problems fall back to a stabilizing linear gain."""
    if cfg.u0:
        return expr_law(problem, cfg.u0)
    if problem.lqr is not None:
        A, B, _ = lqr_problem(problem).matrices()
        return LinearGain(stabilizing_gain(A, B), name="u0")
    raise UsageError("--u0 is required for nonlinear problems")


def prepare(cfg: RunConfig) -> Setup:
    settings.seed = cfg.seed
    problem = load(cfg)
    basis = resolve_basis(cfg, problem)
    order = cfg.quad_order or default_order(basis)
    grid = gauss_grid((problem.lo, problem.hi), order)
    warn_if_nonpolynomial(problem, order)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "run.json", cfg)
    opts = HjbOptions(max_iter=cfg.max_iter, tol_w=cfg.tol)
    return Setup(problem, basis, grid, opts, out_dir)


def delta_vector(cfg: RunConfig, problem: ProblemSpec) -> np.ndarray:
    if cfg.delta is None:
        raise UsageError("--delta is required")
    if cfg.delta_param is not None:
        if cfg.delta_param not in problem.alpha_names:
            raise UsageError(
                f"unknown parameter '{cfg.delta_param}'; choose from {', '.join(problem.alpha_names)}"
            )
        if len(cfg.delta) != 1:
            raise UsageError("--delta-param takes a scalar --delta")
        delta = np.zeros(problem.param_dim)
        delta[problem.alpha_names.index(cfg.delta_param)] = cfg.delta[0]
        return delta
    if len(cfg.delta) != problem.param_dim:
        raise UsageError(f"--delta needs {problem.param_dim} entries, got {len(cfg.delta)}")
    return np.array(cfg.delta, dtype=float)
