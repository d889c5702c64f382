#!/usr/bin/env python3
"""Train the model variants (single-scale, two-scale, three-scale, plain
decoder) on the same data and print their angle-update table side by side.

Desk-scale counterpart of the variant comparison workflow: the numbers are
not meaningful as research results, the point is that every variant trains,
rolls out and evaluates through the same harness.
"""

import argparse
import time

import numpy as np

from strider.data import assemble_dataset, compute_norm_stats, pack_dataset
from strider.metrics import angle_update_report, angle_update_table
from strider.model import tiny_config
from strider.session import ControlInput, constant_script, run_script
from strider.skeleton import default_skeleton
from strider.synth import generate_clip
from strider.terrain import load_terrain
from strider.train import TrainConfig, fit_packed

VARIANTS = {
    "two-scale": {},
    "single-scale": {"scales": ("fine",)},
    "three-scale": {"scales": ("fine", "coarse", "middle")},
    "plain-decoder": {"decoder_variant": "plain"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=1500)
    ap.add_argument("--ticks", type=int, default=300)
    ap.add_argument("--seed", type=int, default=2)
    args = ap.parse_args()

    clip = generate_clip("walking", "line", "flat", 600, 60.0, seed=7)
    skeleton = default_skeleton()
    terrain = load_terrain("flat")
    script = constant_script(args.ticks, ControlInput(np.array([0.0, 1.0]), 1.2, 1))
    tables = []
    for name, overrides in VARIANTS.items():
        cfg = tiny_config(mpn_dropout=0.2, **overrides)
        samples = assemble_dataset([clip], cfg)
        stats = compute_norm_stats(samples, cfg)
        packed = pack_dataset(samples, stats, cfg)
        tcfg = TrainConfig(
            epochs=10_000, learning_rate=2e-3, seed=args.seed,
            val_fraction=0.0, max_steps=args.steps, lr_decay_step=args.steps * 3 // 5,
        )
        t0 = time.time()
        result = fit_packed(packed, cfg, tcfg, stats)
        rollout = run_script(result.params, terrain, script, warm=clip)
        rot = np.stack([f.rotations for f in rollout.clip.frames])
        report = angle_update_report(rot, skeleton, 60.0, scenario="flat")
        print(f"{name}: {cfg.memory_tokens} memory tokens, trained {result.steps} steps "
              f"in {time.time() - t0:.0f}s, full-body {report.full:.1f} deg/s")
        tables.append((name, report))
    print()
    for name, report in tables:
        print(angle_update_table([report], label=name))
        print()


if __name__ == "__main__":
    main()
