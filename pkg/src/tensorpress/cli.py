"""Command-line interface: compress, inspect, verify, bench, gen.

Exit codes: 0 ok, 1 internal error, 2 config error, 3 I/O or format error,
4 verification mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench as bn
from . import pipeline as pl
from .errors import ArchiveError, ConfigError, VerificationError
from .tensors import DenseTensor, TensorArchive, load_archive, save_archive

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VERIFY = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensorpress",
                                description="Quantum-inspired weight tensor compression")
    p.add_argument("--json", action="store_true", help="machine-parsable stdout")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="compress an archive per a JSON config")
    c.add_argument("input", help="input QTNS archive")
    c.add_argument("config", help="JSON config file")
    c.add_argument("output", help="output QTNS archive")
    c.add_argument("--seed", type=int, default=None, help="override all config seeds")
    c.add_argument("--jobs", type=int, default=1, help="layer-level parallelism")

    i = sub.add_parser("inspect", help="list tensors in an archive")
    i.add_argument("archive")

    v = sub.add_parser("verify", help="re-check a compression report against artifacts")
    v.add_argument("original")
    v.add_argument("compressed")
    v.add_argument("report")

    b = sub.add_parser("bench", help="time dense/masked/factored matvec")
    b.add_argument("--size", action="append", default=[], metavar="MxNxR",
                   help="e.g. 2048x2048x128; repeatable")
    b.add_argument("--variants", default="dense,masked,factored")
    b.add_argument("--reps", type=int, default=100)
    b.add_argument("--warmup", type=int, default=10)
    b.add_argument("--density", type=float, default=0.5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None, help="write results JSON here")

    g = sub.add_parser("gen", help="generate a synthetic seeded archive")
    g.add_argument("output")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--layer", action="append", default=[], metavar="NAME=SHAPE[:rank=R]",
                   help="e.g. fc1=64x64 or conv1=8x4x3x3:rank=3; repeatable")
    return p


def cmd_compress(args) -> int:
    archive = load_archive(args.input)
    with open(args.config) as f:
        config = pl.PipelineConfig.from_json(f.read())
    out, report = pl.compress_archive(archive, config, jobs=args.jobs,
                                      seed_override=args.seed)
    save_archive(out, args.output)
    report_path = args.output + ".report.json"
    with open(report_path, "w") as f:
        f.write(report.to_json())
    if args.json:
        print(report.to_json(), end="")
    else:
        print(report.table())
        print(f"wrote {args.output} and {report_path}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    archive = load_archive(args.archive)
    if args.json:
        rows = []
        for name, t in archive.entries:
            rows.append({
                "name": name,
                "shape": list(t.shape),
                "params": t.size,
                "frobenius_norm": float(np.linalg.norm(t.data.astype(np.float64))),
                "sparsity": float(np.mean(t.data == 0)),
            })
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    header = f"{'name':<24} {'shape':<18} {'params':>10} {'fro norm':>12} {'sparsity':>9}"
    print(header)
    print("-" * len(header))
    for name, t in archive.entries:
        shape = "x".join(str(d) for d in t.shape)
        norm = float(np.linalg.norm(t.data.astype(np.float64)))
        sparsity = float(np.mean(t.data == 0))
        print(f"{name:<24} {shape:<18} {t.size:>10} {norm:>12.4f} {sparsity:>9.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    original = load_archive(args.original)
    compressed = load_archive(args.compressed)
    with open(args.report) as f:
        report = pl.CompressionReport.from_json(f.read())
    problems = pl.verify_report(original, compressed, report)
    if problems:
        raise VerificationError(problems[0])
    print("verify: OK" if not args.json else json.dumps({"status": "ok"}))
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = []
    for spec in args.size or ["1024x1024x64"]:
        parts = spec.lower().split("x")
        if len(parts) != 3:
            raise ConfigError(f"bad --size {spec!r}, expected MxNxR")
        sizes.append(tuple(int(x) for x in parts))
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    results = bn.run_bench(sizes, variants=variants, reps=args.reps,
                           warmup=args.warmup, density=args.density, seed=args.seed)
    if args.out:
        with open(args.out, "w") as f:
            f.write(bn.results_to_json(results))
    print(bn.results_to_json(results) if args.json else bn.results_table(results))
    return EXIT_OK


def _parse_layer_spec(spec: str):
    rank = None
    body = spec
    if ":" in spec:
        body, opt = spec.split(":", 1)
        key, _, val = opt.partition("=")
        if key != "rank" or not val.isdigit():
            raise ConfigError(f"bad layer option {opt!r}, expected rank=R")
        rank = int(val)
    name, _, shape_s = body.partition("=")
    if not name or not shape_s:
        raise ConfigError(f"bad --layer {spec!r}, expected NAME=SHAPE")
    try:
        shape = tuple(int(d) for d in shape_s.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad shape in --layer {spec!r}") from None
    if any(d < 1 for d in shape):
        raise ConfigError(f"dimensions must be >= 1 in --layer {spec!r}")
    return name, shape, rank


def gen_archive(layer_specs: list[str], seed: int) -> TensorArchive:
    rng = np.random.default_rng(seed)
    entries = []
    for spec in layer_specs:
        name, shape, rank = _parse_layer_spec(spec)
        if rank is not None:
            m = shape[0]
            n = int(np.prod(shape[1:]))
            if rank > min(m, n):
                raise ConfigError(f"layer {name!r}: rank {rank} > min{(m, n)}")
            data = (rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n)))
            data = data.reshape(shape)
        else:
            data = rng.standard_normal(shape)
        entries.append((name, DenseTensor(data, name=name)))
    return TensorArchive(entries=entries)


def cmd_gen(args) -> int:
    archive = gen_archive(args.layer, args.seed)
    save_archive(archive, args.output)
    if args.json:
        print(json.dumps({"output": args.output, "entries": archive.names()}))
    else:
        print(f"wrote {args.output} with {len(archive)} tensors")
    return EXIT_OK


COMMANDS = {
    "compress": cmd_compress,
    "inspect": cmd_inspect,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArchiveError, OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VerificationError as exc:
        print(f"verification mismatch: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
