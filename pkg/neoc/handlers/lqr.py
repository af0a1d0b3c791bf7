import logging
from pathlib import Path

import numpy as np

from neoc.config import settings
from neoc.handlers.common import add_common_args, delta_vector, load
from neoc.schemas import GainsArtifact, RunConfig
from neoc.services.export import write_json
from neoc.services.lqr import check_assumptions, gains_report, lqr_problem

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("lqr", help="Riccati solve, gain sensitivity and NEOC gain")
    add_common_args(parser)
    parser.add_argument("--delta", help="perturbation: scalar with --delta-param, else a full vector")
    parser.add_argument("--delta-param", help="name of the perturbed parameter")
    parser.set_defaults(handler=run)


def _row(label: str, K: np.ndarray) -> str:
    return f"{label:8s} " + " ".join(f"{v:10.4f}" for v in np.ravel(K))


def run(cfg: RunConfig) -> int:
    settings.seed = cfg.seed
    problem = load(cfg)
    lp = lqr_problem(problem)
    delta = delta_vector(cfg, problem)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "run.json", cfg)

    assumptions = check_assumptions(lp)
    if not assumptions.passed:
        for message in assumptions.messages():
            logger.error(message)
        return 1

    report = gains_report(lp, delta, recalc=cfg.recalc)
    print(_row("K_nom", report.K_nom))
    if report.K_recal is not None:
        print(_row("K_recal", report.K_recal))
    print(_row("K_neoc", report.K_neoc))
    if not report.neoc_closed_loop_hurwitz:
        logger.warning("A - B K_neoc is not Hurwitz at the perturbed parameter")

    write_json(out_dir / "gains.json", GainsArtifact(
        config=cfg,
        alpha=lp.alpha_nominal.tolist(),
        delta_alpha=delta.tolist(),
        **report.summary(),
    ))
    return 0
