import logging

import numpy as np

from neoc.handlers.common import add_common_args, prepare, resolve_u0
from neoc.schemas import RunConfig, SolutionArtifact
from neoc.services.export import write_grid, write_json
from neoc.services.hjb import HjbSolution, closed_loop_linearization, is_hurwitz, policy_iteration
from neoc.services.problem import describe
from neoc.services.sim import grid_points

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("solve", help="Galerkin policy iteration at the nominal parameter")
    add_common_args(parser)
    parser.set_defaults(handler=run)


def write_solution(cfg: RunConfig, s: HjbSolution, out_dir) -> None:
    linear = closed_loop_linearization(s)
    eig = np.linalg.eigvals(linear)
    if not is_hurwitz(linear):
        logger.warning("Closed-loop linearization at the origin is not Hurwitz: %s", eig.tolist())
    artifact = SolutionArtifact(
        config=cfg,
        problem=describe(s.problem),
        basis=s.basis.spec(),
        quad_order=s.grid.order,
        closed_loop_eigenvalues=[[float(z.real), float(z.imag)] for z in eig],
        **s.summary(),
    )
    write_json(out_dir / "solution.json", artifact)
    points = grid_points(s.problem.lo, s.problem.hi, cfg.grid_pts)
    values, _ = s.basis.evaluate(points)
    write_grid(out_dir / "value_grid.csv", points, {"value": values @ s.weights})
    write_grid(out_dir / "control_grid.csv", points, {"u": s.law().batch(points)})


def run(cfg: RunConfig) -> int:
    setup = prepare(cfg)
    u0 = resolve_u0(cfg, setup.problem)
    s = policy_iteration(setup.problem, None, setup.basis, setup.grid, u0, setup.opts)
    write_solution(cfg, s, setup.out_dir)
    logger.info("Solve finished: %d iterations, converged=%s", s.iterations, s.converged)
    return 0
