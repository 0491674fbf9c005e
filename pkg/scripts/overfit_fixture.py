"""Memorise the bundled 20-sentence fixture and report the training accuracy curve."""
import argparse

from psatag.experiments import OVERFIT_FIXTURE, overfit_config, run_overfit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixture", default=str(OVERFIT_FIXTURE))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--target", type=float, default=0.99)
    args = ap.parse_args()
    res = run_overfit(args.fixture, overfit_config(seed=args.seed), args.target,
                      progress=lambda e: print(f"epoch {e.epoch:3d}  loss {e.train_loss:9.3f}  acc {e.dev_metric:.4f}",
                                               flush=True))
    print(f"accuracy={res.accuracy:.4f} epoch={res.epochs} seconds={res.seconds:.1f}")


if __name__ == "__main__":
    main()
