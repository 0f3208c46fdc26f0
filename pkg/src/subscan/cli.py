"""Command-line interface.

Exit codes: 0 on success, 1 on validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from subscan.harness import (
    SyntheticSpec,
    evaluate_manifest,
    generate_synthetic,
    load_manifest,
    score_dataset,
)
from subscan.io import ActivationMatrix, build_background, load_matrix, load_model, save_matrix, save_model
from subscan.ltss import ScanConfig
from subscan.npss import SCORERS

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

_SUFFIX = {"binary": ".bin", "csv": ".csv"}


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _scan_config(args: argparse.Namespace) -> ScanConfig:
    return ScanConfig(alpha_max=args.alpha_max, scorer=args.scorer)


def cmd_background(args: argparse.Namespace) -> int:
    model = build_background(load_matrix(args.matrix, args.format))
    save_model(model, args.output)
    print(f"J={model.n_nodes} M={model.m_background}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    config = _scan_config(args)
    model = load_model(args.model)
    path = Path(args.eval)
    if path.stat().st_size == 0:
        matrix = ActivationMatrix(np.zeros((0, model.n_nodes)))
    else:
        matrix = load_matrix(path, args.format)
    results = score_dataset(model, matrix, config)
    records = []
    for sample_id, result in zip(matrix.ids(), results):
        record = {"sample_id": sample_id}
        record.update(result.to_dict(include_subset=not args.no_subset))
        records.append(record)
    payload = {
        "config": {"alpha_max": config.alpha_max, "scorer": config.scorer},
        "results": records,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        j_nodes=args.nodes,
        m_background=args.background,
        n_clean=args.clean,
        n_anomalous=args.anomalous,
        affected_fraction=args.fraction,
        shift_sigma=args.shift,
        seed=args.seed,
    )
    data = generate_synthetic(spec)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = _SUFFIX[args.format]
    for name in ("background", "clean", "anomalous"):
        save_matrix(getattr(data, name), out / f"{name}{suffix}", args.format)
    (out / "true_subset.txt").write_text(
        "".join(f"{j}\n" for j in data.true_subset), encoding="utf-8"
    )
    print(
        f"wrote {out}: J={spec.j_nodes} M={spec.m_background} clean={spec.n_clean} "
        f"anomalous={spec.n_anomalous} affected={len(data.true_subset)}"
    )
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    report = evaluate_manifest(load_manifest(args.manifest), _scan_config(args), seed=args.seed)
    _emit(report.to_json(), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    scan_flags = argparse.ArgumentParser(add_help=False)
    scan_flags.add_argument(
        "--alpha-max", type=float, default=0.5,
        help="ignore p-values at or above this threshold (default: 0.5)",
    )
    scan_flags.add_argument(
        "--scorer", choices=sorted(SCORERS), default="bj",
        help="scan statistic: bj = Berk-Jones, hc = Higher Criticism (default: bj)",
    )
    fmt_flag = argparse.ArgumentParser(add_help=False)
    fmt_flag.add_argument(
        "--format", choices=["binary", "csv"], default="binary",
        help="activation matrix file format (default: binary)",
    )
    seed_flag = argparse.ArgumentParser(add_help=False)
    seed_flag.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")

    parser = argparse.ArgumentParser(
        prog="subscan",
        description="Subset scanning of neural-network activations with nonparametric scan statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("background", parents=[fmt_flag], help="build a background model from clean activations")
    p.add_argument("matrix", help="clean activation matrix (rows = samples)")
    p.add_argument("--output", "-o", required=True, help="path of the background model file to write")
    p.set_defaults(func=cmd_background)

    p = sub.add_parser("score", parents=[scan_flags, fmt_flag], help="scan each evaluation sample")
    p.add_argument("model", help="background model file")
    p.add_argument("eval", help="evaluation activation matrix")
    p.add_argument("--output", "-o", help="write JSON here instead of standard output")
    p.add_argument("--no-subset", action="store_true", help="omit node subsets from the output")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", parents=[fmt_flag, seed_flag], help="generate a synthetic benchmark")
    p.add_argument("outdir", help="directory for background, clean, anomalous and true_subset.txt")
    p.add_argument("--nodes", type=int, default=512, help="number of nodes J (default: 512)")
    p.add_argument("--background", type=int, default=800, help="background samples M (default: 800)")
    p.add_argument("--clean", type=int, default=200, help="clean evaluation samples (default: 200)")
    p.add_argument("--anomalous", type=int, default=100, help="anomalous evaluation samples (default: 100)")
    p.add_argument("--fraction", type=float, default=0.1, help="fraction of shifted nodes (default: 0.1)")
    p.add_argument("--shift", type=float, default=3.0, help="mean shift in standard deviations (default: 3.0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", parents=[scan_flags, seed_flag], help="per-layer AUC report from a manifest")
    p.add_argument("manifest", help="JSON dataset manifest")
    p.add_argument("--output", "-o", help="write the JSON report here instead of standard output")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"subscan: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"subscan: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
