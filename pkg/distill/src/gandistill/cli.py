"""Minimal CLI: collect pairs from a corpus teacher, train, export corpora."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import torch

from .export import export_synthetic
from .losses import LossWeights
from .models import Generator
from .pairs import DatasetTeacher, collect_pairs
from .train import TrainSchedule, load_config, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gandistill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="distill a student generator from a corpus teacher")
    p.add_argument("--teacher-corpus", type=Path, required=True)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--config", type=Path, default=None, help="JSON weights/schedule")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("export-images", help="sample a trained generator into a corpus")
    p.add_argument("--checkpoint", type=Path, required=True, help="generator.pt")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--z-dim", type=int, default=128)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    args = parser.parse_args(argv)
    if args.command == "train":
        if args.config:
            weights, schedule, _ = load_config(args.config)
        else:
            # no real-data provider on this path: pure distillation
            weights = LossWeights(adv_real=0.0, disc_real=0.0)
            schedule = TrainSchedule(seed=args.seed)
        if args.steps is not None:
            schedule = replace(schedule, steps=args.steps)
        teacher = DatasetTeacher(args.teacher_corpus)
        pairs = collect_pairs(teacher, args.pairs, args.classes, seed=args.seed)
        result = train(pairs, weights=weights, schedule=schedule, out_dir=args.out)
        print(f"trained {len(result.history)} steps; checkpoints in {args.out}")
        return 0
    if args.command == "export-images":
        generator = Generator(args.classes, z_dim=args.z_dim)
        generator.load_state_dict(torch.load(args.checkpoint, weights_only=True))
        export_synthetic(generator, args.per_class, args.seed, args.out)
        print(f"wrote {args.per_class * args.classes} images to {args.out}")
        return 0
    return 2


def entry() -> None:
    sys.exit(main())
