"""Train/predict command line."""

from __future__ import annotations

import argparse
import json

from .model import ModelSpec
from .predict import predict_corpus
from .train import TrainConfig, train


def main(argv=None):
    ap = argparse.ArgumentParser(prog="sostrainer")
    sub = ap.add_subparsers(dest="cmd", required=True)

    tp = sub.add_parser("train", help="train on a simulation corpus")
    tp.add_argument("--corpus", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--epochs", type=int, default=138)
    tp.add_argument("--batch-size", type=int, default=6)
    tp.add_argument("--lr", type=float, default=1e-3)
    tp.add_argument("--weight-decay", type=float, default=1e-4)
    tp.add_argument("--tna-prob", type=float, default=0.0)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--growth", type=int, default=16)

    pp = sub.add_parser("predict", help="write estimate.ustn for corpus samples")
    pp.add_argument("--checkpoint", required=True)
    pp.add_argument("--corpus", required=True)
    pp.add_argument("--noise-db", type=float, default=None)
    pp.add_argument("--seed", type=int, default=0)

    args = ap.parse_args(argv)
    if args.cmd == "train":
        cfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                          learning_rate=args.lr, weight_decay=args.weight_decay,
                          tna_probability=args.tna_prob, seed=args.seed)
        log = train(args.corpus, args.out, cfg, spec=ModelSpec(growth=args.growth))
        print(json.dumps({"best_epoch": log["best_epoch"],
                          "best_val_mse": log["best_val_mse"]}))
    else:
        written = predict_corpus(args.checkpoint, args.corpus,
                                 noise_db=args.noise_db, seed=args.seed)
        print(f"wrote estimates for {len(written)} samples")


if __name__ == "__main__":
    main()
