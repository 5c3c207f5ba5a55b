"""Command-line driver.

Subcommands
-----------
run            integrate a configured case and write CSV/XYZ/PNG output
bench-mem      measure data-structure bytes per atom for the configured box
gen-potential  write the synthetic Fe-like EAM table
check          validate a configuration and print derived quantities

Every subcommand that reads a configuration accepts ``--config FILE`` and
any number of ``--set key=value`` overrides; the key reference lives in
:mod:`latticemd.config`.
"""

import argparse
import logging
import sys
import time
from dataclasses import replace

import numpy as np

from .analysis import nrt_estimate
from .config import load_config
from .errors import ConfigError, LatticeMDError
from .forces import RED, build_color_partition
from .lattice import required_ghost_width
from .neighbors import build_offsets
from .potential import coefficient_bytes
from .sim import init_bcc, load_potential, make_box, run
from .store import ATOM_DTYPE
from .synthetic import NR, NRHO, write_synthetic_potential

log = logging.getLogger("latticemd")

REFERENCE_RECORD_BYTES = 104


def _load(args):
    cfg = load_config(args.config, overrides=args.set or ())
    pot = load_potential(cfg)
    a0 = cfg.a0 if cfg.a0 is not None else pot.a0
    cfg = replace(cfg, a0=a0).validate()
    return cfg, pot


def cmd_run(args):
    cfg, pot = _load(args)
    t0 = time.perf_counter()

    def progress(state):
        if state.step % 1000 == 0:
            log.info("step %d  t = %.4f ps  dt = %.3g ps", state.step, state.t, state.dt)

    try:
        result = run(cfg, pot, progress=progress)
    except LatticeMDError as exc:
        dump = getattr(exc, "dump_path", None)
        print(f"error: {exc}", file=sys.stderr)
        if dump:
            print(f"post-mortem snapshot written to {dump}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0
    peak_at = max(result.reports, key=lambda r: r.frenkel_pairs).t
    print(f"steps            {result.state.step}")
    print(f"simulated time   {result.state.t:.4f} ps")
    print(f"peak Frenkel     {result.peak_frenkel} (t = {peak_at:.4f} ps)")
    print(f"final Frenkel    {result.final_frenkel}")
    if cfg.pka.energy > 0:
        print(f"NRT estimate     {nrt_estimate(cfg.pka.energy):g} (E_d = 40 eV)")
    print(f"wall time        {wall:.1f} s")
    for name, p in result.outputs.items():
        print(f"{name:<16} {p}")
    return 0


def bench_memory(cfg, pot):
    """Bytes per atom held by slots, clash map, ghost bookkeeping and offsets."""
    store, _ = init_bcc(replace(cfg, temperature=0.0), pot)
    idx = build_offsets(store.box, pot.cutoff, cfg.skin * store.box.a0)
    n = store.n_atoms()
    total = store.nbytes + idx.nbytes + coefficient_bytes(pot)
    return {
        "atoms": n,
        "sites": store.box.n_sites,
        "store_bytes": store.nbytes,
        "offset_bytes": idx.nbytes,
        "table_bytes": coefficient_bytes(pot),
        "bytes_per_atom": total / n,
        "record_bytes": ATOM_DTYPE.itemsize,
    }


def cmd_bench_mem(args):
    cfg, pot = _load(args)
    m = bench_memory(cfg, pot)
    print(f"box              {' x '.join(map(str, cfg.box))} cells, {m['atoms']} atoms, {m['sites']} sites")
    print(f"atom record      {m['record_bytes']} bytes (reference figure {REFERENCE_RECORD_BYTES})")
    print(f"store            {m['store_bytes']} bytes")
    print(f"offsets          {m['offset_bytes']} bytes")
    print(f"spline tables    {m['table_bytes']} bytes")
    print(f"bytes/atom       {m['bytes_per_atom']:.1f}")
    return 0


def cmd_gen_potential(args):
    try:
        path = write_synthetic_potential(args.output, nrho=args.nrho, nr=args.nr)
    except OSError as exc:
        print(f"error: cannot write {args.output}: {exc.strerror}", file=sys.stderr)
        return 2
    print(f"wrote {path} (Nrho = {args.nrho}, Nr = {args.nr})")
    return 0


def check_report(cfg, pot):
    """Derived quantities of a configuration as ``(label, value)`` rows."""
    a0 = cfg.a0
    skin = cfg.skin * a0
    box = make_box(cfg, pot)
    idx = build_offsets(box, pot.cutoff, skin)
    part = build_color_partition(box, cfg.workers, pot.cutoff + skin)
    rows = [
        ("potential", f"{cfg.potential} (Z = {pot.atomic_number}, cutoff {pot.cutoff:.4f} A)"),
        ("box", f"{' x '.join(map(str, cfg.box))} cells, a0 = {a0} A, {2 * int(np.prod(cfg.box))} atoms"),
        ("ghost width", f"{box.ghost_width} cells ({box.ghost_width * a0:.4f} A)"),
        ("offsets even", f"{len(idx.even_offsets)} full / {len(idx.even_half)} half"),
        ("offsets odd", f"{len(idx.odd_offsets)} full / {len(idx.odd_half)} half"),
        ("workers", f"requested {cfg.workers}, effective {part.workers}"),
        ("blocks", f"{len(part.blocks)} z-slabs, min thickness {part.min_thickness} cells"),
        ("slabs", " ".join(f"[{z0},{z1}){'R' if c == RED else 'B'}" for (z0, z1), c in zip(part.blocks, part.colors))),
    ]
    return rows


def cmd_check(args):
    cfg, pot = _load(args)
    g = cfg.ghost_width
    if g is not None and pot.cutoff > g * cfg.a0:
        raise ConfigError(
            f"cutoff {pot.cutoff:.4f} A exceeds ghost_width * a0 = {g * cfg.a0:.4f} A "
            f"(need ghost_width >= {required_ghost_width(pot.cutoff, cfg.a0)})",
            key="ghost_width",
        )
    for label, value in check_report(cfg, pot):
        print(f"{label:<14} {value}")
    print("ok")
    return 0


def _config_args(p):
    p.add_argument("--config", "-c", help="configuration file (key = value lines)")
    p.add_argument("--set", "-s", action="append", metavar="KEY=VALUE", help="override one configuration key")


def build_parser():
    parser = argparse.ArgumentParser(prog="latticemd", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a cascade simulation")
    _config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench-mem", help="report data-structure bytes per atom")
    _config_args(p)
    p.set_defaults(func=cmd_bench_mem)

    p = sub.add_parser("gen-potential", help="write the synthetic Fe-like EAM table")
    p.add_argument("output", help="output file")
    p.add_argument("--nrho", type=int, default=NRHO)
    p.add_argument("--nr", type=int, default=NR)
    p.set_defaults(func=cmd_gen_potential)

    p = sub.add_parser("check", help="validate a configuration without running it")
    _config_args(p)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LatticeMDError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
