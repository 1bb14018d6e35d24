"""Train on the toy set and report video BCE, frame AP/AUC and the mined class rules."""

import argparse
import tempfile

from rulevad.feature_store import load_manifest
from rulevad.lite_temporal import bce_loss
from rulevad.metrics import ScoredLabels, average_precision, roc_auc
from rulevad.synthetic import ToySpec, write_toy_dataset
from rulevad.training import TrainConfig, prepare_dataset, score_mixed, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bce-mode", choices=("video", "frame"), default="video")
    args = ap.parse_args()

    cfg = TrainConfig(max_steps=args.steps, learning_rate=args.lr, seed=args.seed, bce_mode=args.bce_mode,
                      min_support=0.1, min_confidence=0.9)
    with tempfile.TemporaryDirectory() as tmp:
        data = prepare_dataset(load_manifest(write_toy_dataset(tmp, ToySpec(seed=args.seed))), cfg)
    result = train(data, cfg)
    for step, bce, l_align, l_contrast, total in result.history[:: max(1, args.steps // 10)]:
        print(f"step {step:4d}  bce {bce:.4f}  align {l_align:.4f}  contrast {l_contrast:.4f}  total {total:.4f}")

    scores = [score_mixed(result.model, v.mixed) for v in data.videos]
    video_bce = bce_loss([s.pooled for s in scores], [v.label for v in data.videos])
    frames = ScoredLabels([x for s in scores for x in s.frame], [y for v in data.videos for y in v.frame_labels])
    print(f"video BCE {video_bce:.4f}  frame AP {average_precision(frames):.4f}  frame AUC {roc_auc(frames):.4f}")
    for name, rules in zip(data.text.names, data.text.rule_texts):
        print(f"{name}: {rules[:3]}")


if __name__ == "__main__":
    main()
