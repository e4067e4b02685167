"""``hetune`` command line."""
import argparse
import json
import sys

from ..hecore import HeError
from . import experiments
from .config import ConfigError, ExperimentConfig, from_dict, load


def _config(args, **defaults):
    data = {}
    if args.config:
        cfg = load(args.config)
        data = cfg.to_dict()
    elif args.preset:
        data = {"preset": args.preset}
    data = {**defaults, **data}
    for key in ("backend", "out", "he_preset"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.seed is not None:
        data["seeds"] = args.seed
    return from_dict(data) if data else ExperimentConfig()


def _common(p, preset_default=None):
    p.add_argument("--config", help="experiment JSON file")
    p.add_argument("--preset", default=preset_default,
                   help="named preset (g1-paper, g2-paper, g2-literal, g3-paper)")
    p.add_argument("--seed", type=int, action="append",
                   help="seed to run; repeat for several (default 0..4)")
    p.add_argument("--backend", choices=["plaintext", "reference", "rlwe"])
    p.add_argument("--he-preset", dest="he_preset", help="HE parameter preset (paper, fast, shallow)")
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="hetune",
                                     description="Privacy-preserving PID tuning by encrypted extremum seeking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="run a tuning experiment")
    _common(p, "g1-paper")

    p = sub.add_parser("bench-paper", help="all benchmark plants with and without noise")
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--backend", default="plaintext", choices=["plaintext", "reference", "rlwe"])
    p.add_argument("--out", default="runs")

    p = sub.add_parser("n-sweep", help="repeat a tuning with shortened horizons")
    _common(p, "g2-paper")
    p.add_argument("--reductions", type=float, nargs="+", default=[0, 30, 50, 70],
                   help="percent reductions of N")

    p = sub.add_parser("timing", help="measure encryption and evaluation latency")
    _common(p, "g2-paper")
    p.add_argument("--repeats", type=int, default=20)

    p = sub.add_parser("keygen", help="generate and store key material")
    p.add_argument("--params", default="paper", help="HE preset name or params.json path")
    p.add_argument("--out", default="keys")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("replay", help="recompute a transcript's cloud side and compare")
    p.add_argument("transcript")
    return parser


def run(args):
    if args.command == "tune":
        report = experiments.cmd_tune(_config(args))
        return {"N": report["N"], "summary": report["summary"]}
    if args.command == "bench-paper":
        return experiments.cmd_bench_paper(args.out, args.seed, args.backend)["table"]
    if args.command == "n-sweep":
        return experiments.cmd_n_sweep(_config(args), args.reductions)["sweep"]
    if args.command == "timing":
        return experiments.cmd_timing(_config(args, backend="rlwe"), args.repeats)
    if args.command == "keygen":
        return experiments.cmd_keygen(args.params, args.out, args.seed)
    if args.command == "replay":
        return experiments.cmd_replay(args.transcript)
    raise AssertionError(args.command)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        result = run(args)
    except (ConfigError, HeError, ValueError, OSError) as exc:
        print(f"hetune {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, default=str))
    if args.command == "replay" and not result["identical"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
