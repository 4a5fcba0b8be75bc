"""Command-line front-end.

Subcommands: simulate (one seeded in-process run), sweep-f, sweep-t,
permtest, serve / connect (networked two-process session). Exit codes:
0 success, 2 abandoned, 3 channel error, 4 config error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness, transport
from .bitcore import KeyString
from .harness import (
    CSV_HEADER,
    inject_errors,
    load_config,
    run_single,
    sweep_efficiency,
    sweep_time,
    write_csv,
)
from .protocol import ROLE_ALICE, ROLE_BOB, SessionConfig, reconcile

EXIT_OK = 0
EXIT_ABANDONED = 2
EXIT_CHANNEL = 3
EXIT_CONFIG = 4


def _parse_host_port(text: str):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got '{text}'")
    return host, int(port)


def _add_common(sub):
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--csv", help="write records to this CSV path")
    sub.add_argument("--seed", type=int, default=1, help="base seed")
    sub.add_argument("--latency-ms", type=float, default=0.0)
    sub.add_argument("-n", "--key-length", type=int, default=65536)
    sub.add_argument("-p", "--error-rate", type=float, default=0.02)
    sub.add_argument("--seed1", type=int, default=5)
    sub.add_argument("--seed2", type=int, default=78)
    sub.add_argument(
        "--retries", type=int, default=None,
        help="CRC-mismatch retries (default: session default; sweep-f: 0)",
    )


def _apply_config(args):
    if not args.config:
        return
    try:
        values = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    casts = {
        "key_length": int,
        "error_rate": float,
        "seed": int,
        "seed1": int,
        "seed2": int,
        "latency_ms": float,
        "retries": int,
        "trials": int,
        "csv": str,
        "protocol": str,
    }
    for key, raw in values.items():
        attr = key.replace("-", "_")
        if attr not in casts:
            print(f"config error: unknown key '{key}'", file=sys.stderr)
            sys.exit(EXIT_CONFIG)
        try:
            setattr(args, attr, casts[attr](raw))
        except ValueError:
            print(f"config error: bad value for '{key}'", file=sys.stderr)
            sys.exit(EXIT_CONFIG)


def _print_outcome(record):
    print(
        f"protocol={record.protocol} N={record.key_length} "
        f"p={record.p_true} status={record.status} passes={record.passes} "
        f"leak={record.leak_total} f={record.f if record.f else 'n/a'} "
        f"time_ms={record.time_ms:.2f}"
    )


def _cmd_simulate(args) -> int:
    record = run_single(
        args.protocol,
        args.key_length,
        args.error_rate,
        noise_seed=args.seed,
        seed1=args.seed1,
        seed2=args.seed2,
        key_seed=args.seed + 7,
        latency=args.latency_ms / 1e3,
        crc_retries=args.retries,
    )
    _print_outcome(record)
    if args.csv:
        write_csv([record], args.csv)
    return EXIT_OK if record.status == "success" else EXIT_ABANDONED


def _cmd_sweep_f(args) -> int:
    grid = [float(x) for x in args.grid.split(",")]
    records = sweep_efficiency(
        grid, args.trials, key_length=args.key_length,
        base_seed=args.seed, protocol=args.protocol,
        crc_retries=0 if args.retries is None else args.retries,
    )
    if args.csv:
        write_csv(records, args.csv)
    else:
        print(CSV_HEADER)
        for rec in records:
            print(rec.to_csv_row())
    return EXIT_OK


def _cmd_sweep_t(args) -> int:
    grid = [float(x) for x in args.grid.split(",")]
    records = sweep_time(grid, args.trials, key_length=args.key_length,
                         base_seed=args.seed)
    if args.csv:
        write_csv(records, args.csv)
    else:
        print(CSV_HEADER)
        for rec in records:
            print(rec.to_csv_row())
    return EXIT_OK


def _cmd_permtest(args) -> int:
    lines = []
    if args.mode == "seeds":
        rows = harness.permtest_seed_sweep(
            key_length=args.key_length, seed1=args.seed1,
            block_length=args.block_length, samples=args.samples,
            sample_seed=args.seed,
        )
        lines = [f"seed2,d_tot"] + [f"{s},{d:.6f}" for s, d in rows]
    else:
        rows = harness.permtest_block_sweep(
            key_length=args.key_length, seed1=args.seed1, seed2=args.seed2
        )
        lines = [f"n,d_tot"] + [f"{n},{d:.6f}" for n, d in rows]
    text = "\n".join(lines)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _networked(args, role: str) -> int:
    rng = np.random.default_rng(args.seed + 7)
    key = KeyString.random(args.key_length, rng)
    if role == ROLE_BOB:
        key, _ = inject_errors(key, args.error_rate, args.seed)
    extra = {} if args.retries is None else {"crc_retries": args.retries}
    config = SessionConfig(
        args.key_length, args.error_rate, args.seed1, args.seed2, role, **extra
    )
    try:
        if role == ROLE_ALICE:
            host, port = _parse_host_port(args.listen)
            srv, _ = transport.listen(host, port)
            channel = transport.accept(srv, latency=args.latency_ms / 1e3)
            srv.close()
        else:
            host, port = _parse_host_port(args.peer)
            channel = transport.connect(host, port, latency=args.latency_ms / 1e3)
    except (transport.ChannelError, ValueError) as exc:
        print(f"channel error: {exc}", file=sys.stderr)
        return EXIT_CHANNEL
    outcome = reconcile(key, config, channel)
    channel.close()
    print(
        f"role={role} status={outcome.status} reason={outcome.reason} "
        f"passes={outcome.passes_run} leak={outcome.ledger.total} "
        f"f={outcome.efficiency_f}"
    )
    if outcome.status == "success":
        return EXIT_OK
    return EXIT_CHANNEL if outcome.reason == "channel" else EXIT_ABANDONED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkrecon")
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="one seeded in-process run")
    _add_common(sim)
    sim.add_argument("--protocol", choices=["proposed", "cascade"],
                     default="proposed")

    swf = subs.add_parser("sweep-f", help="efficiency vs error rate")
    _add_common(swf)
    swf.add_argument("--grid", default="0.01,0.0125,0.02,0.025,0.04,0.05,0.08,0.1")
    swf.add_argument("--trials", type=int, default=10)
    swf.add_argument("--protocol", choices=["proposed", "cascade"],
                     default="proposed")

    swt = subs.add_parser("sweep-t", help="processing time vs error rate")
    _add_common(swt)
    swt.add_argument("--grid", default="0.01,0.02,0.03,0.04")
    swt.add_argument("--trials", type=int, default=5)
    swt.set_defaults(key_length=8 * 65536)

    pt = subs.add_parser("permtest", help="permutation separation quality")
    _add_common(pt)
    pt.add_argument("--mode", choices=["seeds", "blocks"], default="seeds")
    pt.add_argument("--block-length", type=int, default=16)
    pt.add_argument("--samples", type=int, default=1000)

    srv = subs.add_parser("serve", help="listen for a peer (reference side)")
    _add_common(srv)
    srv.add_argument("--listen", required=True, metavar="HOST:PORT")

    con = subs.add_parser("connect", help="connect to a peer (correcting side)")
    _add_common(con)
    con.add_argument("--peer", required=True, metavar="HOST:PORT")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_config(args)
    handlers = {
        "simulate": _cmd_simulate,
        "sweep-f": _cmd_sweep_f,
        "sweep-t": _cmd_sweep_t,
        "permtest": _cmd_permtest,
        "serve": lambda a: _networked(a, ROLE_ALICE),
        "connect": lambda a: _networked(a, ROLE_BOB),
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
