"""Command-line entry point: ``detnet {describe,analyze,gradcheck,train,compare}``.

Exit codes: 0 success, 1 numeric check failed, 2 usage or resolution error.
"""

import argparse
import logging
import sys

from . import analyzers
from .arch import BUILTIN, SpecParseError, get_spec, parse_arch_spec, scale_width

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def resolve_arch(name=None, spec_file=None):
    if (name is None) == (spec_file is None):
        raise UsageError("give exactly one of an architecture name or --spec FILE")
    if spec_file is not None:
        try:
            with open(spec_file, encoding="utf-8") as fh:
                return parse_arch_spec(fh.read())
        except OSError as e:
            raise UsageError(f"cannot read {spec_file}: {e}") from None
        except SpecParseError as e:
            raise UsageError(f"{spec_file}: {e}") from None
    if name not in BUILTIN:
        raise UsageError(f"unknown architecture {name!r}; known: {', '.join(BUILTIN)}")
    return get_spec(name)


def _gflops(x):
    return f"{x / 1e9:.2f}G"


def cmd_describe(args, out):
    spec = resolve_arch(args.arch, args.spec)
    if args.depth:
        print(analyzers.depth(spec), file=out)
        return EXIT_OK
    widths = spec.stage_channels()
    print(f"arch {spec.name}", file=out)
    header = f"{'stage':<8}{'entry':<7}{'stride':>7}{'width':>7}  blocks"
    print(header, file=out)
    for st in spec.stages:
        blocks = " ".join(
            f"{b.kind.value}({b.c_in},{b.c_mid},{b.c_out},s{b.stride},d{b.dilation})" for b in st.blocks
        )
        print(f"{st.name:<8}{st.entry:<7}{st.stride_out:>7}{widths[st.name]:>7}  {blocks or '-'}", file=out)
    params = analyzers.count_params(spec, args.classes)
    print(f"stages {len(spec.stages)}", file=out)
    print(f"depth {analyzers.depth(spec)}", file=out)
    print(f"params {params.total} (trainable {params.trainable}, bn stats {params.buffers})", file=out)
    return EXIT_OK


def cmd_analyze(args, out):
    spec = resolve_arch(args.arch, args.spec)
    try:
        rep = analyzers.count_flops(spec, (args.input, args.input), args.classes)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out.write(rep.to_tsv() if args.format == "tsv" else rep.to_table())
    return EXIT_OK


def cmd_gradcheck(args, out):
    from .gradcheck import ALL_CASES, DEFAULT_EPS, run_case

    names = list(ALL_CASES) if args.ops == "all" else args.ops.split(",")
    unknown = [n for n in names if n not in ALL_CASES]
    if unknown:
        raise UsageError(f"unknown op {unknown[0]!r}; known: {', '.join(ALL_CASES)}")
    failed = False
    print(f"{'op':<24}{'eps':>8}{'max_rel_err':>14}  status", file=out)
    for name in names:
        eps = DEFAULT_EPS[name] if args.eps is None else args.eps
        worst = max(run_case(name, args.seed + k, eps).max_rel_error for k in range(args.seeds))
        ok = worst < args.tol
        failed |= not ok
        print(f"{name:<24}{eps:>8.0e}{worst:>14.3e}  {'ok' if ok else 'FAIL'}", file=out)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_train(args, out):
    from .arch import build_network
    from .trainer import SgdConfig, save_weights, synth_dataset, train_loop

    spec = resolve_arch(args.arch, args.spec)
    try:
        spec = scale_width(spec, args.toy_width)
    except ValueError as e:
        raise UsageError(str(e)) from None
    decay = sorted(i for i in (args.iters * 2 // 3, args.iters * 9 // 10) if 0 < i < args.iters)
    cfg = SgdConfig(
        base_lr=args.lr, momentum=0.9, weight_decay=args.weight_decay,
        warmup_iters=min(args.warmup, args.iters), warmup_factor=0.3,
        decay_iters=sorted(set(decay)), decay_factor=0.1, total_iters=args.iters,
    )
    data = synth_dataset(args.seed, args.samples, args.classes, args.hw)
    net = build_network(spec, n_classes=args.classes, seed=args.seed)
    report = train_loop(
        net, data, cfg, args.batch_size, seed=args.seed, freeze_bn=args.freeze_bn,
        freeze_stage1=args.freeze_stage1, flip=args.flip, eval_every=args.eval_every,
        target_accuracy=args.target_acc,
    )
    save_weights(net, args.out, iteration=len(report.losses))
    curve = args.out + ".loss.tsv"
    with open(curve, "w", encoding="utf-8") as fh:
        fh.write("iter\tloss\n")
        for i, v in enumerate(report.losses):
            fh.write(f"{i}\t{v:.6f}\n")
    print(f"arch {spec.name} iters {len(report.losses)} final_loss {report.losses[-1]:.4f}", file=out)
    print(f"train_accuracy {report.final_accuracy:.4f}", file=out)
    print(f"checkpoint {args.out}", file=out)
    print(f"loss_curve {curve}", file=out)
    if args.target_acc is not None and report.final_accuracy < args.target_acc:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_compare(args, out):
    a = resolve_arch(args.arch_a)
    b = resolve_arch(args.arch_b)
    rows = analyzers.compare(a, b, (args.input, args.input), args.classes)
    ra, rb = rows["a"], rows["b"]
    fmt = lambda t: ",".join(str(v) for v in t)  # noqa: E731
    print(f"{'':<10}{ra['name']:>20}{rb['name']:>20}{'delta(b-a)':>16}", file=out)
    print(f"{'depth':<10}{ra['depth']:>20}{rb['depth']:>20}{rb['depth'] - ra['depth']:>16}", file=out)
    print(f"{'flops':<10}{ra['flops']:>20}{rb['flops']:>20}{rb['flops'] - ra['flops']:>16}", file=out)
    print(f"{'gflops':<10}{_gflops(ra['flops']):>20}{_gflops(rb['flops']):>20}"
          f"{_gflops(rb['flops'] - ra['flops']):>16}", file=out)
    print(f"{'params':<10}{ra['params']:>20}{rb['params']:>20}{rb['params'] - ra['params']:>16}", file=out)
    print(f"{'strides':<10}{fmt(ra['strides']):>20}{fmt(rb['strides']):>20}", file=out)
    print(f"{'rf':<10}{fmt(ra['rf']):>20}{fmt(rb['rf']):>20}", file=out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="detnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def arch_args(sp):
        sp.add_argument("arch", nargs="?", help=f"built-in architecture ({', '.join(BUILTIN)})")
        sp.add_argument("--spec", metavar="FILE", help="architecture spec file instead of a built-in name")
        sp.add_argument("--classes", type=int, default=1000)

    d = sub.add_parser("describe", help="stage/block table, depth and parameter count")
    arch_args(d)
    d.add_argument("--depth", action="store_true", help="print only the main-path depth")
    d.set_defaults(func=cmd_describe)

    a = sub.add_parser("analyze", help="per-layer FLOPs/params report")
    arch_args(a)
    a.add_argument("--input", type=int, default=224)
    a.add_argument("--format", choices=("table", "tsv"), default="table")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("gradcheck", help="finite-difference checks of every operator and block")
    g.add_argument("--ops", default="all", help="'all' or comma-separated op names")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds per op")
    g.add_argument("--eps", type=float, default=None)
    g.add_argument("--tol", type=float, default=1e-3)
    g.set_defaults(func=cmd_gradcheck)

    t = sub.add_parser("train", help="toy training on synthetic data")
    t.add_argument("--arch", dest="arch", default=None)
    t.add_argument("--spec", metavar="FILE")
    t.add_argument("--toy-width", type=int, default=16, help="divide every channel count by this")
    t.add_argument("--iters", type=int, default=3000)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--weight-decay", type=float, default=1e-4)
    t.add_argument("--warmup", type=int, default=50)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--samples", type=int, default=2000)
    t.add_argument("--hw", type=int, default=64)
    t.add_argument("--classes", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--eval-every", type=int, default=100)
    t.add_argument("--target-acc", type=float, default=None, help="stop once train accuracy reaches this")
    t.add_argument("--flip", action="store_true")
    t.add_argument("--freeze-bn", action="store_true")
    t.add_argument("--freeze-stage1", action="store_true")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", help="side-by-side strides, rf, FLOPs, params, depth")
    c.add_argument("arch_a")
    c.add_argument("arch_b")
    c.add_argument("--input", type=int, default=224)
    c.add_argument("--classes", type=int, default=1000)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and args.arch is None and args.spec is None:
        args.arch = "detnet59"
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    try:
        return args.func(args, out)
    except UsageError as e:
        print(f"detnet: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
