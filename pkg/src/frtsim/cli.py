"""Command-line entry points.

Verbs:

* ``simulate`` -- run one scenario from a config file (or a bundled preset)
  and write ``trace.csv`` / ``relay.csv`` / ``summary.txt`` plus the resolved
  config echo and the zone-table dump.
* ``oracle``   -- print the analytic phasor solution for one fault.
* ``matrix``   -- run the oracle-equivalence batch over the full fault grid.
* ``zones``    -- dump the relay zone table as JSON.

Exit codes: 0 = success / all checks passed, 1 = a check failed,
2 = configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .controller import ConfigError
from .network import FAULT_TYPES, FaultSpec
from .oracle import IbrSourceSpec, SequenceNetworkOracle, SgSourceSpec
from .relay import RelayParams, ZoneTable
from .scenario import (
    PRESETS,
    echo_config,
    emit_csv,
    load_config,
    matrix_report,
    run_matrix,
    run_scenario,
)


def _base_config(args):
    if args.config:
        return load_config(args.config)
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r} (have {sorted(PRESETS)})")
        return PRESETS[args.preset]()
    raise ConfigError("either --config or --preset is required")


def _cmd_simulate(args) -> int:
    cfg = _base_config(args)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out:
        cfg.run.out_dir = args.out
    result = run_scenario(cfg)
    paths = emit_csv(result, cfg.run.out_dir)
    for p in paths:
        print(p)
    print(f"wall time: {result.summary['wall_time_s']} s")
    return 0


def _cmd_oracle(args) -> int:
    cfg = _base_config(args)
    if args.source == "sg":
        source = SgSourceSpec()
    else:
        source = IbrSourceSpec(mode=args.mode, z_v1=1j * args.xv1, z_v2=1j * args.xv2)
    orc = SequenceNetworkOracle(cfg.network, source, m=args.m, side=args.side)
    if args.source == "sg":
        e1 = complex(1.0)
    else:
        e1 = orc.operating_point(cfg.controller.p_ref, cfg.controller.q_ref,
                                 cfg.controller.v_n1, cfg.controller.rpc_droop)
    spec = FaultSpec(fault_type=args.fault, m=args.m, r_fault_ohm=args.rf,
                     t_on=0.1, t_off=1.0, side=args.side)
    sol = orc.solve(spec, e1)
    text = sol.report()
    if args.out:
        Path(args.out).write_text(text)
        print(args.out)
    else:
        print(text, end="")
    return 0 if sol.superposition_residual < 1e-9 else 1


def _cmd_matrix(args) -> int:
    cfg = _base_config(args)
    rows = run_matrix(cfg.network, ts=cfg.run.ts)
    text = matrix_report(rows)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0 if all(r.passed for r in rows) else 1


def _cmd_zones(args) -> int:
    zones = ZoneTable.build(RelayParams())
    text = json.dumps(zones.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(args.out)
    else:
        print(text, end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="frtsim", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p):
        p.add_argument("--config", help="scenario config JSON")
        p.add_argument("--preset", help=f"bundled preset ({', '.join(sorted(PRESETS))})")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--seed", type=int, default=None)

    p_sim = sub.add_parser("simulate", help="run a scenario and emit CSV outputs")
    add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_orc = sub.add_parser("oracle", help="analytic fault solution report")
    add_common(p_orc)
    p_orc.add_argument("--fault", choices=FAULT_TYPES, default="ag")
    p_orc.add_argument("--m", type=float, default=0.5)
    p_orc.add_argument("--rf", type=float, default=0.0, help="fault resistance, ohm")
    p_orc.add_argument("--side", choices=("forward", "reverse"), default="forward")
    p_orc.add_argument("--source", choices=("ibr", "sg"), default="ibr")
    p_orc.add_argument("--mode", choices=("interoperable", "conventional", "ideal"),
                       default="ideal")
    p_orc.add_argument("--xv1", type=float, default=0.0, help="virtual reactance, p.u.")
    p_orc.add_argument("--xv2", type=float, default=0.0)
    p_orc.set_defaults(func=_cmd_oracle)

    p_mat = sub.add_parser("matrix", help="oracle-equivalence batch")
    add_common(p_mat)
    p_mat.set_defaults(func=_cmd_matrix)

    p_z = sub.add_parser("zones", help="dump the relay zone table")
    p_z.add_argument("--out")
    p_z.set_defaults(func=_cmd_zones)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
