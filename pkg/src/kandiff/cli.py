"""Command line entry point: ``kandiff {train,enhance,eval,verify}``.

Exit codes: 0 success, 1 check or evaluation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("kandiff")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_sets(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def cmd_train(args) -> int:
    from .config import load_config
    from .train import train

    overrides = _parse_sets(args.set)
    overrides["train.phase"] = str(args.phase)
    if args.init:
        overrides["train.init_checkpoint"] = args.init
    if args.data:
        overrides["data.root"] = args.data
    if args.steps is not None:
        overrides["train.steps"] = str(args.steps)
    try:
        cfg = load_config(args.config, overrides, preset=args.preset)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc).strip("'\"")) from exc
    out = Path(args.out or cfg.io.checkpoint_dir)

    def show(rec):
        terms = "  ".join(f"{k}={v:.5g}" for k, v in rec.items() if k not in ("step", "time"))
        print(f"phase {cfg.train.phase} step {rec['step']:>6}  {terms}  [{rec['time']:.1f}s]", flush=True)

    result = train(cfg, resume=args.resume, out_dir=out, on_log=None if args.quiet else show)
    print(f"checkpoint: {result.checkpoint}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    from .checkpoint import load_model
    from .config import RunConfig
    from .enhance import enhance_dir
    from .train import build_schedule

    net, header, _ = load_model(args.ckpt)
    sched = build_schedule(RunConfig.from_dict({"schedule": header["config"].get("schedule", {})}))
    summary = enhance_dir(net, sched, args.inp, args.out, seed=args.seed, stochastic=args.stochastic)
    for path in summary.written:
        print(f"wrote {path}")
    for name, err in summary.failed.items():
        print(f"failed {name}: {err}", file=sys.stderr)
    return EXIT_FAIL if not summary.written else EXIT_OK


def evaluate_dirs(enhanced, ref):
    """Pair files by name and score each pair. Returns ``(report, problems)``."""
    from .imaging import PNGError, list_pngs, load_png
    from .metrics import MetricReport, psnr, ssim

    enhanced, ref = Path(enhanced), Path(ref)
    ours = {p.name: p for p in list_pngs(enhanced)}
    theirs = {p.name: p for p in list_pngs(ref)}
    problems = [f"no reference for {n}" for n in sorted(set(ours) - set(theirs))]
    problems += [f"no enhanced image for {n}" for n in sorted(set(theirs) - set(ours))]
    report = MetricReport()
    for name in sorted(set(ours) & set(theirs)):
        try:
            a, b = load_png(ours[name]), load_png(theirs[name])
            report.add(name, psnr(a, b), ssim(a, b))
        except (PNGError, ValueError) as exc:
            problems.append(f"{name}: {exc}")
    return report, problems


def cmd_eval(args) -> int:
    from .plotting import plot_metric_report

    report, problems = evaluate_dirs(args.enhanced, args.ref)
    for msg in problems:
        print(f"error: {msg}", file=sys.stderr)
    text = report.to_tsv()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        if report.count:
            plot_metric_report(report, out.with_suffix(".png"))
    return EXIT_FAIL if problems or not report.count else EXIT_OK


def cmd_verify(args) -> int:
    from .verify import format_report, format_result, run_checks

    print("status\tcheck\terror\ttolerance\ttime\tdetail", flush=True)
    results = run_checks(args.level, only=args.only, fault=args.fault,
                         on_result=lambda r: print(format_result(r), flush=True))
    failed = [r for r in results if not r.passed]
    print(f"#summary\t{len(results) - len(failed)}/{len(results)} passed\t"
          f"{sum(r.seconds for r in results):.1f}s")
    if args.report:
        from .plotting import plot_verify_timings

        path = Path(args.report)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_report(results))
        plot_verify_timings(results, path.with_suffix(".png"))
    return EXIT_FAIL if failed or not results else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kandiff", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train phase 1 or phase 2")
    t.add_argument("--config", help="INI file; omitted sections keep their defaults")
    t.add_argument("--phase", type=int, choices=(1, 2), required=True)
    t.add_argument("--resume", metavar="CKPT", help="continue a run of the same phase")
    t.add_argument("--init", metavar="CKPT", help="phase-1 checkpoint to start phase 2 from")
    t.add_argument("--preset", default="desk", help="desk (default), tiny or fullscale")
    t.add_argument("--data", metavar="DIR", help="dataset root with low/ and high/")
    t.add_argument("--steps", type=int)
    t.add_argument("--out", metavar="DIR", help="run directory (default io.checkpoint_dir)")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", default=[],
                   help="override one config value; repeatable")
    t.add_argument("-q", "--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("enhance", help="enhance every PNG in a directory")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--in", dest="inp", required=True, metavar="DIR")
    e.add_argument("--out", required=True, metavar="DIR")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--stochastic", action="store_true", help="add sampling noise at each step")
    e.set_defaults(func=cmd_enhance)

    v = sub.add_parser("eval", help="PSNR/SSIM of enhanced images against references")
    v.add_argument("--enhanced", required=True, metavar="DIR")
    v.add_argument("--ref", required=True, metavar="DIR")
    v.add_argument("--out", metavar="FILE", help="write the TSV report here, plus a .png chart")
    v.set_defaults(func=cmd_eval)

    c = sub.add_parser("verify", help="run the numerical self-checks")
    c.add_argument("--level", choices=("quick", "full"), default="quick")
    c.add_argument("--only", action="append", metavar="CHECK", help="run just this check; repeatable")
    c.add_argument("--fault", metavar="NAME",
                   help="inject a known fault (reverse-sign) to confirm the suite catches it")
    c.add_argument("--report", metavar="FILE", help="write the TSV report here, plus a timing chart")
    c.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
