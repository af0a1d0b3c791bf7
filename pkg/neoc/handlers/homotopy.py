import logging

import numpy as np

from neoc.errors import SolverError
from neoc.handlers.common import add_common_args, delta_vector, prepare, resolve_u0
from neoc.schemas import HomotopyArtifact, HomotopyRow, RunConfig
from neoc.services.export import write_csv, write_json
from neoc.services.hjb import policy_iteration
from neoc.services.sensitivity import homotopy_neoc, recalculate
from neoc.services.sim import grid_points

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("homotopy", help="NEOC in N linear steps for large perturbations")
    add_common_args(parser)
    parser.add_argument("--delta", help="perturbation vector, quoted and space separated")
    parser.add_argument("--steps", default="1", help="comma-separated step counts, e.g. 1,10,50,100")
    parser.add_argument("--polish", action="store_true", help="one Galerkin step after each update")
    parser.set_defaults(handler=run)


def _write(cfg: RunConfig, out_dir, delta, rows: list[HomotopyRow]) -> None:
    write_csv(
        out_dir / "homotopy.csv",
        ["steps", "sup", "rms"],
        ([r.steps, r.sup if r.sup is not None else "", r.rms if r.rms is not None else ""] for r in rows),
    )
    write_json(out_dir / "homotopy.json", HomotopyArtifact(
        config=cfg, delta_alpha=delta.tolist(), polish=cfg.polish, rows=rows,
    ))


def run(cfg: RunConfig) -> int:
    setup = prepare(cfg)
    problem = setup.problem
    delta = delta_vector(cfg, problem)
    base = policy_iteration(problem, None, setup.basis, setup.grid, resolve_u0(cfg, problem), setup.opts)
    points = grid_points(problem.lo, problem.hi, cfg.grid_pts)

    reference = None
    if cfg.recalc:
        recalc = recalculate(problem, setup.basis, setup.grid, base.alpha + delta, base=base, opts=setup.opts)
        reference = recalc.law().batch(points)

    rows: list[HomotopyRow] = []
    for n_steps in cfg.steps:
        try:
            result = homotopy_neoc(problem, setup.basis, setup.grid, base, delta, n_steps, cfg.polish)
        except SolverError as e:
            logger.error("Homotopy with N=%d failed: %s", n_steps, e)
            rows.append(HomotopyRow(steps=n_steps, failed_at=e.diagnostics.get("step")))
            _write(cfg, setup.out_dir, delta, rows)
            return 1
        row = HomotopyRow(steps=n_steps)
        if reference is not None:
            diff = np.abs(result.law.batch(points) - reference)
            row.sup, row.rms = float(diff.max()), float(np.sqrt(np.mean(diff**2)))
            logger.info("N=%d: sup error %.4g", n_steps, row.sup)
        rows.append(row)

    _write(cfg, setup.out_dir, delta, rows)
    return 0
