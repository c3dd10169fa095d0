"""Command-line benchmark driver."""

import argparse
import json
import sys

from .bench import EXPERIMENTS, ExperimentSpec, records_to_csv, run_experiment

KEYS = ("experiment", "sizes", "eps", "mu", "delta", "leaf_capacity", "proxy",
        "seed", "out", "oracle_cap", "mask_timings")


def _onoff(text):
    t = str(text).lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError("expected on/off")


def _sizes(text):
    return [int(s) for s in str(text).replace(",", " ").split()]


def read_config(path):
    """JSON object, or plain ``key = value`` lines (``#`` starts a comment)."""
    with open(path) as fh:
        text = fh.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError:
        cfg = {}
        for ln in text.splitlines():
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise SystemExit(f"bad config line: {ln!r}")
            k, v = (t.strip() for t in ln.split("=", 1))
            cfg[k.replace("-", "_")] = _scalar(v)
    if not isinstance(cfg, dict):
        raise SystemExit("config must be a mapping")
    return cfg


def _scalar(v):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def parser():
    p = argparse.ArgumentParser(prog="hbsls-bench",
                                description="Run HBS least-squares experiments.")
    p.add_argument("--config", help="JSON or key = value file with any of the options below")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--sizes", type=_sizes, help="comma-separated sizes")
    p.add_argument("--eps", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--leaf-capacity", dest="leaf_capacity", type=int)
    p.add_argument("--proxy", type=_onoff, help="on/off")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--oracle-cap", dest="oracle_cap", type=float)
    p.add_argument("--mask-timings", dest="mask_timings", action="store_true",
                   default=None, help="leave timing columns empty")
    return p


def resolve(argv):
    args = parser().parse_args(argv)
    opts = {}
    if args.config:
        cfg = read_config(args.config)
        unknown = set(cfg) - set(KEYS)
        if unknown:
            raise SystemExit(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(cfg)
        if "sizes" in opts:
            opts["sizes"] = _sizes(opts["sizes"]) if isinstance(opts["sizes"], str) \
                else list(opts["sizes"])
        if "proxy" in opts:
            opts["proxy"] = _onoff(opts["proxy"])
    for k in KEYS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    if "experiment" not in opts or "sizes" not in opts:
        raise SystemExit("--experiment and --sizes are required")
    return opts


def main(argv=None):
    opts = resolve(argv)
    out = opts.pop("out", None)
    mask = bool(opts.pop("mask_timings", False))
    try:
        spec = ExperimentSpec(**opts)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    records = run_experiment(spec)
    text = records_to_csv(records, mask_timings=mask)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for r in records:
        if "error" in r.extra:
            print(f"{spec.experiment} size={r.N} failed: {r.extra['error']}",
                  file=sys.stderr)
            continue
        print(f"{spec.experiment} M={r.M} N={r.N} n_iter={r.n_iter} "
              f"E={'-' if r.E is None else f'{r.E:.2e}'} R={r.R:.2e} "
              f"converged={r.converged}", file=sys.stderr)
    return 0 if all(r.converged for r in records) else 1


if __name__ == "__main__":
    sys.exit(main())
