from neoc.handlers.solve import register as register_solve
from neoc.handlers.neoc import register as register_neoc
from neoc.handlers.homotopy import register as register_homotopy
from neoc.handlers.lqr import register as register_lqr
from neoc.handlers.compare import register as register_compare
from neoc.handlers.catalog import register as register_catalog


def register_all_handlers(subparsers) -> None:
    register_solve(subparsers)
    register_neoc(subparsers)
    register_homotopy(subparsers)
    register_lqr(subparsers)
    register_compare(subparsers)
    register_catalog(subparsers)
