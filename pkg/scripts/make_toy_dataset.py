"""Write the seeded toy surveillance set (features, transcripts, frame labels, manifest)."""

import argparse

from rulevad.synthetic import ToySpec, write_toy_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--videos", type=int, default=200)
    ap.add_argument("--frames", type=int, default=32)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    spec = ToySpec(n_videos=args.videos, n_frames=args.frames, dim=args.dim, seed=args.seed)
    print(write_toy_dataset(args.out_dir, spec))


if __name__ == "__main__":
    main()
