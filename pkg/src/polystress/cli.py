"""Command-line front end.

Exit codes: 0 every check passed, 1 a check failed, 2 configuration error,
3 numeric-domain error (chart exit, singular metric, ...).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .errors import ConfigError, JetOrderError, NumericDomainError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _write(out: str | None, data: bytes) -> None:
    if out is None:
        sys.stdout.write(data.decode())
    else:
        Path(out).write_bytes(data)


def cmd_verify(args) -> int:
    from .harness import RunConfig, emit_report, verify

    config = RunConfig.load(args.config)
    report = verify(config)
    _write(args.out, emit_report(report, args.format))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_energy(args) -> int:
    from .harness import RunConfig, energies

    config = RunConfig.load(args.config)
    if not config.domain.fully_periodic:
        raise ConfigError("energies are computed by periodic quadrature; the domain must be periodic")
    value = energies(config, [args.k])[args.k]
    print(f"E_{args.k} = {value!r}")
    return EXIT_OK


def cmd_flow(args) -> int:
    from .flow import FourierMap, gradient_flow
    from .harness import RunConfig

    config = RunConfig.load(args.config)
    if config.flow is None:
        raise ConfigError("configuration has no 'flow' block")
    f = config.flow
    k = int(f.k) if f.k is not None else config.orders[0]
    grid = config.grid()
    modes = int(f.modes) if f.modes is not None else max(1, min(4, (grid.nodes - 1) // 2))
    phi0 = FourierMap.from_map(config.map, grid, modes)
    result = gradient_flow(phi0, k, grid, f.eta, f.max_steps, f.tol)

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "energy", "max_tension", "eta", "sign", "conservation"])
        for s in result.steps:
            w.writerow([s.step, repr(s.energy), repr(s.max_tension), repr(s.eta), s.sign, repr(s.conservation)])
    print(f"flow {result.status} after {len(result.steps)} steps; final max|tau_{k}| = {result.final_tension:.3e}")
    if not result.monotone:
        return EXIT_FAIL
    return EXIT_FAIL if result.status == "budget" else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polystress", description="Polyharmonic stress-energy verification harness")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the identity checks of a configuration")
    v.add_argument("--config", required=True)
    v.add_argument("--out")
    v.add_argument("--format", choices=("csv", "text"), default="csv")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("flow", help="run the energy-decreasing flow")
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_flow)

    e = sub.add_parser("energy", help="print E_k")
    e.add_argument("--config", required=True)
    e.add_argument("-k", type=int, required=True)
    e.set_defaults(func=cmd_energy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, JetOrderError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericDomainError as exc:
        print(f"numeric domain error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
