#!/usr/bin/env python3
"""Overfit the texture generator on a few synthetic animation samples.

The in-memory toy set pairs each identity with open/closed-mouth targets
under two emotions over identical vertex graphs, so the emotion vector is
the only signal separating half the pairs. Training to convergence and then
swapping the emotion vector shows how strongly the generator learned to use
it. With the defaults this reaches ~26 dB train PSNR in a few hundred steps
on one CPU core.
"""

import argparse
import time
from pathlib import Path

import numpy as np
import torch

from emoface.checkpoint import save_texture_model
from emoface.data import synthetic_texture_samples
from emoface.landmark_gen import EmotionVector
from emoface.pipeline import mean_sample_psnr
from emoface.texture_gen import (
    FrameBatch,
    FrameDiscriminator,
    GTConfig,
    GTModel,
    RandomConvPyramid,
    collate_texture_batch,
    train_texture_step,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--identities", type=int, default=2)
    parser.add_argument("--resolution", type=int, default=64)
    parser.add_argument("--channel-scale", type=float, default=0.25)
    parser.add_argument("--steps", type=int, default=400)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--lambda-adv", type=float, default=0.1,
                        help="small values keep tiny overfits from oscillating")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--log-every", type=int, default=50)
    parser.add_argument("--out", type=Path, help="checkpoint path (optional)")
    args = parser.parse_args()

    torch.set_num_threads(1)
    samples = synthetic_texture_samples(
        args.identities, resolution=args.resolution, seed=args.seed
    )
    cfg = GTConfig(resolution=args.resolution, channel_scale=args.channel_scale)
    torch.manual_seed(args.seed)
    model = GTModel(cfg)
    disc = FrameDiscriminator(cfg)
    extractor = RandomConvPyramid(seed=args.seed)
    full = collate_texture_batch(cfg, samples)
    n = full.identity.shape[0]
    opt_g = torch.optim.Adam(model.parameters(), lr=args.lr)
    opt_d = torch.optim.Adam(disc.parameters(), lr=args.lr)
    rng = np.random.default_rng(args.seed)

    start = time.perf_counter()
    for step in range(args.steps):
        idx = torch.as_tensor(rng.choice(n, size=min(args.batch, n), replace=False))
        batch = FrameBatch(
            full.identity[idx], full.heat_diff[idx], full.emotion[idx], full.target[idx]
        )
        report = train_texture_step(
            model, disc, batch, opt_g, opt_d, extractor, lambda_adv=args.lambda_adv
        )
        if step % args.log_every == 0 or step == args.steps - 1:
            psnr = mean_sample_psnr(model, full)
            print(f"step {step:5d}  rec {report.reconstruction:.4f}  "
                  f"per {report.perceptual:.4f}  train psnr {psnr:.2f} dB")
    elapsed = time.perf_counter() - start
    print(f"{args.steps} steps in {elapsed:.1f}s "
          f"({1000.0 * elapsed / args.steps:.0f} ms/step)")

    # how much of the output is driven by the emotion vector alone
    alt = torch.as_tensor(EmotionVector.of("happy", "low").to_array()).unsqueeze(0)
    with torch.no_grad():
        base = model(full.identity[:1], full.heat_diff[:1], full.emotion[:1])
        swapped = model(full.identity[:1], full.heat_diff[:1], alt)
    print(f"emotion-swap mean |delta|: {(base - swapped).abs().mean().item():.4f}")

    if args.out is not None:
        model.eval()
        save_texture_model(args.out, model)
        print(f"saved {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
