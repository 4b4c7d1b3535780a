"""Run a toy training job: python -m pusr_trainer <dataset_dir> <out.pusr>"""

import argparse

from .train import TrainConfig, train


def main() -> None:
    ap = argparse.ArgumentParser(prog="pusr_trainer")
    ap.add_argument("dataset_dir", help="directory of HR PNG images")
    ap.add_argument("output", help="checkpoint path to write")
    ap.add_argument("--variant", default="U")
    ap.add_argument("--scale", type=int, default=2)
    ap.add_argument("--patch", type=int, default=64)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log-every", type=int, default=100)
    args = ap.parse_args()
    cfg = TrainConfig(dataset_dir=args.dataset_dir, output_path=args.output,
                      variant=args.variant, scale=args.scale, patch=args.patch,
                      batch_size=args.batch_size, iterations=args.iterations,
                      seed=args.seed, log_every=args.log_every)
    result = train(cfg)
    print(f"wrote {result.checkpoint_path} "
          f"(final l1 {result.losses[-1]:.5f})")


if __name__ == "__main__":
    main()
