"""Marker task whose label sits exactly 8 tokens earlier: full model vs. no fusion layers."""
import argparse
import json

from psatag.experiments import run_synthetic_comparison, synthetic_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--json", help="write the results here")
    args = ap.parse_args()
    cfg = synthetic_config(max_epochs=args.epochs, seed=args.seed)
    full, plain = run_synthetic_comparison(
        cfg, progress=lambda e: print(f"epoch {e.epoch:2d}  loss {e.train_loss:9.1f}  dev {e.dev_metric:.3f}", flush=True))
    rows = [vars(full), vars(plain)]
    for r in rows:
        print(f"{r['name']:<10} test={r['test_accuracy']:.3f} dev={r['dev_accuracy']:.3f} "
              f"epochs={r['epochs']} seconds={r['seconds']:.0f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
