"""NER smoke protocol on a user-supplied CoNLL03-format corpus.

Trains the full model and the no-fusion baseline for 10 epochs on each of 3
seeds with 100-d pretrained embeddings and compares mean dev F1. Exit status
is 0 when the full model's mean is higher.
"""
import argparse
import sys

from psatag.experiments import smoke_protocol


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--train", required=True)
    ap.add_argument("--dev", required=True)
    ap.add_argument("--embeddings", required=True, help="100-d text embeddings, e.g. glove.6B.100d.txt")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--tag-col", type=int, default=-1)
    args = ap.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    res = smoke_protocol(args.train, args.dev, args.embeddings, seeds=seeds, epochs=args.epochs,
                         tag_col=args.tag_col,
                         progress=lambda arm, seed, f1: print(f"{arm:<9} seed={seed} dev_f1={f1:.4f}", flush=True))
    print(f"psa mean={res.psa_mean:.4f}  no_fusion mean={res.baseline_mean:.4f}  "
          f"{'PASS' if res.passed else 'FAIL'}")
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
