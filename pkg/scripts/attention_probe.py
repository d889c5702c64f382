#!/usr/bin/env python3
"""Print the decoder's attention over past-pose memory tokens for a few
sample frames of a clip: which scales and offsets the control query reads.
"""

import argparse

import numpy as np

from strider.checkpoint import load_checkpoint
from strider.data import assemble_samples, normalize_input, valid_target_range
from strider.model import concat_scales, encode_scale, export_attention, memory_token_labels
from strider.session import load_motion_file


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--clip", required=True)
    ap.add_argument("--frames", type=int, nargs="*", default=None)
    args = ap.parse_args()

    params, _, _ = load_checkpoint(args.checkpoint)
    cfg = params.config
    clip = load_motion_file(args.clip)
    targets = valid_target_range(len(clip.frames), cfg)
    wanted = set(args.frames or [targets[0], targets[len(targets) // 2], targets[-1]])
    labels = memory_token_labels(cfg)
    header = "  ".join(f"{s[:4]}+{k:<2}" for s, k in labels)

    for i, sample in zip(targets, assemble_samples(clip, cfg)):
        if i not in wanted:
            continue
        scales_n, traj_n = normalize_input(sample.scales, sample.traj, params.norm, cfg)
        encoded = [encode_scale(m, sp, cfg) for m, sp in zip(scales_n, params.scales)]
        maps = export_attention(concat_scales(encoded), traj_n, params)
        print(f"frame {i} (gait {clip.frames[i].gait}):")
        print(f"           {header}")
        for li, layer in enumerate(maps):
            for hi, row in enumerate(layer):
                cells = "  ".join(f"{w:.3f}" for w in row)
                print(f"  L{li} H{hi}:  {cells}")
        mean = np.mean(maps[0], axis=0)
        top = sorted(zip(labels, mean), key=lambda kv: -kv[1])[:3]
        print("  layer-0 head-mean top tokens: " +
              ", ".join(f"{s}+{k} ({w:.3f})" for (s, k), w in top))
        print()


if __name__ == "__main__":
    main()
