import logging

import numpy as np

from neoc.errors import UsageError
from neoc.handlers.common import add_common_args, prepare, resolve_u0
from neoc.schemas import RunConfig, SweepArtifact, SweepRowModel
from neoc.services.export import write_csv, write_json
from neoc.services.hjb import policy_iteration
from neoc.services.sensitivity import perturbation_sweep
from neoc.services.sim import grid_points

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.1, 0.2, 0.3, 0.4, 0.5)


def register(subparsers) -> None:
    parser = subparsers.add_parser("compare", help="NEOC error against recalculated laws over several perturbations")
    add_common_args(parser)
    parser.add_argument("--deltas", help="'0.1,0.2' on the first parameter or '0.1 0;0 0.2' as full vectors")
    parser.set_defaults(handler=run)


def _expand(deltas: list[list[float]] | None, q: int) -> list[np.ndarray]:
    if deltas is None:
        deltas = [[d] for d in DEFAULT_DELTAS]
    out = []
    for d in deltas:
        if len(d) == 1:
            vec = np.zeros(q)
            vec[0] = d[0]
        elif len(d) == q:
            vec = np.array(d, dtype=float)
        else:
            raise UsageError(f"each perturbation needs 1 or {q} entries, got {len(d)}")
        out.append(vec)
    return out


def run(cfg: RunConfig) -> int:
    setup = prepare(cfg)
    problem = setup.problem
    deltas = _expand(cfg.deltas, problem.param_dim)
    base = policy_iteration(problem, None, setup.basis, setup.grid, resolve_u0(cfg, problem), setup.opts)
    points = grid_points(problem.lo, problem.hi, cfg.grid_pts)
    rows = perturbation_sweep(problem, setup.basis, setup.grid, base, deltas, points, opts=setup.opts)

    q = problem.param_dim
    write_csv(
        setup.out_dir / "sweep.csv",
        [f"delta_{name}" for name in problem.alpha_names] + ["sup", "rms"],
        (row.delta_alpha + [row.sup, row.rms] for row in rows),
    )
    write_json(setup.out_dir / "sweep.json", SweepArtifact(
        config=cfg,
        rows=[SweepRowModel(delta_alpha=r.delta_alpha, sup=r.sup, rms=r.rms) for r in rows],
    ))
    logger.info("Sweep over %d perturbations of %d parameter(s) written", len(rows), q)
    return 0
