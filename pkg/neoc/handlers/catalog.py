from neoc.services.problem import catalog


def register(subparsers) -> None:
    parser = subparsers.add_parser("list-builtins", help="list the builtin problem catalog")
    parser.set_defaults(handler=run, standalone=True)


def run(cfg=None) -> int:
    for name, entry in sorted(catalog().items()):
        u0 = ", ".join(entry.u0) if entry.u0 else "stabilizing LQR gain"
        print(f"{name:14s} {entry.description}")
        print(f"{'':14s} basis: {entry.basis}  u0: {u0}  delta: {' '.join(str(d) for d in entry.delta)}")
    return 0
