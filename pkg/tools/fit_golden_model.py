#!/usr/bin/env python3
"""Fit and freeze the golden model fixture.

Gradient-free procedure (see uavacc.golden): random-search over seeds for
the conv/hidden weights, class-centroid output head, fixed-point range
calibration, PACT alpha calibration. Writes
src/uavacc/fixtures/golden_model.s8uv and prints the per-mode accuracies
of the frozen model on a fresh synthetic evaluation set.

Run from the repository root:  python tools/fit_golden_model.py
"""

import argparse
import pathlib
import sys

import numpy as np

from uavacc import container, golden, pipeline


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=32,
                    help="number of candidate seeds to search")
    ap.add_argument("--per-class", type=int, default=96)
    ap.add_argument("--data-seed", type=int, default=0xACED)
    ap.add_argument("--target", type=float, default=0.95)
    ap.add_argument("--out", type=pathlib.Path,
                    default=pathlib.Path(__file__).resolve().parent.parent
                    / "src" / "uavacc" / "fixtures" / golden.FIXTURE_NAME)
    args = ap.parse_args(argv)

    model, info = golden.fit_golden_model(
        seeds=range(args.seeds), per_class=args.per_class,
        data_seed=args.data_seed, target=args.target, verbose=True)
    if info["fp32_val_accuracy"] < args.target:
        print(f"warning: best candidate only reached "
              f"{info['fp32_val_accuracy']:.4f} < target {args.target}")

    args.out.parent.mkdir(parents=True, exist_ok=True)
    container.save_model(model, args.out)
    print(f"frozen fixture: {args.out} (seed {info['seed']}, "
          f"val accuracy {info['fp32_val_accuracy']:.4f})")

    segments, labels = golden.golden_dataset(100, seed=0xE7A1)
    feats = pipeline.extract_features(segments, golden.GOLDEN_FEATURE)
    for name, mode in pipeline.MODE_NAMES.items():
        rep = pipeline.evaluate(model, feats, labels, mode)
        print(f"  {name}: accuracy {rep.accuracy:.4f} "
              f"far {rep.far:.4f} mdr {rep.mdr:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
