import logging

from neoc.handlers.common import add_common_args, delta_vector, prepare, resolve_u0
from neoc.schemas import RunConfig, SensitivityArtifact
from neoc.services.export import write_grid, write_json
from neoc.services.hjb import policy_iteration
from neoc.services.sensitivity import neoc_law, recalculate, weight_sensitivity
from neoc.services.sim import compare_laws, grid_points, probe_states

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("neoc", help="NEOC adjustment of the nominal law for a known perturbation")
    add_common_args(parser)
    parser.add_argument("--delta", help="perturbation vector, quoted and space separated")
    parser.set_defaults(handler=run)


def run(cfg: RunConfig) -> int:
    setup = prepare(cfg)
    problem = setup.problem
    delta = delta_vector(cfg, problem)
    u0 = resolve_u0(cfg, problem)

    base = policy_iteration(problem, None, setup.basis, setup.grid, u0, setup.opts)
    sens = weight_sensitivity(base)
    write_json(setup.out_dir / "sensitivity.json", SensitivityArtifact(
        config=cfg,
        alpha=base.alpha.tolist(),
        delta_alpha=delta.tolist(),
        J_w_alpha=sens.J_w_alpha.tolist(),
        cond=sens.cond,
    ))

    law = neoc_law(base, sens, delta)
    nominal = base.law("nominal")
    points = grid_points(problem.lo, problem.hi, cfg.grid_pts)
    write_grid(setup.out_dir / "neoc_grid.csv", points, {
        "u_nominal": nominal.batch(points),
        "u_neoc": law.batch(points),
    })

    if cfg.recalc:
        alpha_hat = base.alpha + delta
        recalc = recalculate(problem, setup.basis, setup.grid, alpha_hat, base=base, opts=setup.opts)
        report = compare_laws(
            problem,
            alpha_hat,
            {"nominal": nominal, "neoc": law, "recalc": recalc.law("recalc")},
            points,
            probes=probe_states(problem),
            dt=cfg.dt,
            T_max=cfg.horizon,
        )
        report.to_csv(setup.out_dir / "comparison.csv")
        report.to_json(setup.out_dir / "comparison.json", cfg)
        sup, _ = report.pair("neoc", "recalc")
        logger.info("sup |u_neoc - u_recalc| = %.4g", sup)
    return 0
