"""Command line entry point: ``hetofdma <subcommand> [flags]``.

Grids accept comma lists and ``start:stop:step`` ranges (stop included),
e.g. ``--snr 4:16:2``. ``--config`` reads a YAML or JSON mapping whose keys
are the long flag names with dashes or underscores; flags given on the
command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import yaml

from . import channel, harness
from ._backend import NAME as BACKEND
from .model import ConfigError, NonConvergenceError, SystemConfig

EXIT_OK, EXIT_USAGE, EXIT_NONCONV = 0, 2, 3

# per-subcommand defaults, in the units of the flags
DEFAULTS = {
    "outage": dict(snr="0:20:1", rdc="80"),
    "min-snr": dict(rdc="16:176:16", target=0.01),
    "rate-region": dict(snr="20", rdc="0:176:16"),
    "diversity": dict(snr="20", rdc="32", ndc="4:16:2"),
    "convergence": dict(dc_users="1:12:1", n="16,32,64,128", trials=20, snr=None),
    "solve": dict(snr="20", rdc="80", algos="optimal_ts"),
    "draw-channel": dict(),
}
COMMON = dict(n="64", users=8, dc_users="4", trials=500, seed=0, algos=",".join(harness.ALGOS),
              workers=1, gap=channel.DEFAULT_GAP, trial=0)


def parse_grid(text, cast=float):
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = part.split(":")
            if len(bits) != 3:
                raise ConfigError(f"range {part!r} must be start:stop:step")
            a, b, s = (float(x) for x in bits)
            if s <= 0 or b < a:
                raise ConfigError(f"bad range {part!r}")
            n = int(np.floor((b - a) / s + 1e-9)) + 1
            out += [cast(round(a + i * s, 10)) for i in range(n)]
        else:
            out.append(cast(float(part)) if cast is int else cast(part))
    if not out:
        raise ConfigError(f"empty grid {text!r}")
    return tuple(out)


def _parser():
    p = argparse.ArgumentParser(prog="hetofdma",
                                description="Subcarrier and power allocation for mixed DC/NDC traffic")
    p.add_argument("--version", action="version", version=f"%(prog)s ({BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--n", help="subcarriers (grid for convergence)")
        s.add_argument("--users", type=int, help="total users K")
        s.add_argument("--dc-users", help="DC users K1 (grid for convergence)")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output path (CSV, or JSON for solve)")
        if name == "draw-channel":
            s.add_argument("--trial", type=int)
            continue
        s.add_argument("--rdc", help="total DC rate in bits per OFDM symbol")
        s.add_argument("--snr", help="total transmit SNR in dB")
        s.add_argument("--algos", help="comma list of " + ",".join(harness.ALGOS))
        s.add_argument("--gap", type=float, help="SNR gap (linear)")
        if name == "solve":
            s.add_argument("--channel", required=True, help="CSV from draw-channel")
            continue
        s.add_argument("--trials", type=int)
        s.add_argument("--workers", type=int)
        if name == "min-snr":
            s.add_argument("--target", type=float, help="target outage probability")
        if name == "diversity":
            s.add_argument("--ndc", help="grid of NDC user counts")
    return p


def _settings(args):
    merged = dict(COMMON)
    merged.update(DEFAULTS[args.command])
    if args.config:
        try:
            with open(args.config) as fh:
                data = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        for k, v in data.items():
            key = str(k).replace("-", "_")
            if key not in merged and key not in vars(args):
                raise ConfigError(f"unknown config key {k!r}")
            merged[key] = ",".join(map(str, v)) if isinstance(v, list) else v
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config"):
            merged[k] = v
    return merged


def _spec(kind, o, **extra):
    kw = dict(kind=kind, K=int(o["users"]), K1=int(parse_grid(o["dc_users"], int)[0]),
              N=int(parse_grid(o["n"], int)[0]), trials=int(o["trials"]), seed=int(o["seed"]),
              algos=parse_grid(o["algos"], str), gap=float(o["gap"]))
    kw.update(extra)
    return harness.ExperimentSpec(**kw)


def _run(args):
    o = _settings(args)
    cmd = args.command
    if cmd == "draw-channel":
        K, N = int(o["users"]), int(parse_grid(o["n"], int)[0])
        real = channel.draw_realization(channel.build_model(), K, N, int(o["seed"]), int(o["trial"]))
        channel.dump_csv(o.get("out") or sys.stdout, real.freq_response)
        return
    if cmd == "solve":
        h = channel.load_csv(o["channel"])
        K1 = int(parse_grid(o["dc_users"], int)[0])
        rdc = float(parse_grid(o["rdc"])[0])
        cfg = (SystemConfig.equal_split(h.shape[0], K1, h.shape[1], 1.0, rdc) if K1
               else SystemConfig(h.shape[0], 0, h.shape[1], 1.0, ()))
        algo = parse_grid(o["algos"], str)[0]
        if algo not in harness.ALGOS + ("oracle",):
            raise ConfigError(f"unknown algorithm {algo!r}")
        res = harness.solve_one(cfg, h, algo, gap=float(o["gap"]),
                                snr_db=float(parse_grid(o["snr"])[0]))
        text = json.dumps(res, indent=1)
        if o.get("out"):
            with open(o["out"], "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return
    if cmd == "outage":
        spec = _spec("outage_sweep", o, snr_grid=parse_grid(o["snr"]), rdc_grid=parse_grid(o["rdc"]))
    elif cmd == "min-snr":
        spec = _spec("min_snr", o, rdc_grid=parse_grid(o["rdc"]), target_outage=float(o["target"]))
    elif cmd == "rate-region":
        spec = _spec("rate_region", o, snr_grid=parse_grid(o["snr"]), rdc_grid=parse_grid(o["rdc"]))
    elif cmd == "diversity":
        spec = _spec("diversity", o, snr_grid=parse_grid(o["snr"]), rdc_grid=parse_grid(o["rdc"]),
                     ndc_grid=parse_grid(o["ndc"], int))
    else:
        spec = _spec("convergence", o, dc_grid=parse_grid(o["dc_users"], int),
                     n_grid=parse_grid(o["n"], int), algos=("optimal_ts",))
    rows = harness.run(spec, workers=int(o["workers"]))
    harness.write_csv(rows, o.get("out") or sys.stdout)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        _run(args)
    except NonConvergenceError as exc:
        print(f"error: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
