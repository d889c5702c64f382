"""Command-line entry point: data generation, training, evaluation,
headless simulation, the network service and checkpoint inspection."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_clip, save_clip
from .errors import ConfigError
from .metrics import angle_update_table, angle_update_report, paired_t_test
from .model import (
    ModelConfig,
    default_config,
    memory_token_labels,
    param_count,
    tiny_config,
)
from .session import (
    ControlInput,
    constant_script,
    load_motion_file,
    load_script,
    run_script,
    save_rollout,
)
from .skeleton import GAITS, default_skeleton
from .synth import PATHS, SynthSpec, generate_synthetic_dataset
from .terrain import BUILTIN_TERRAINS, load_terrain
from .train import TrainConfig, fit


def _model_config(args) -> ModelConfig:
    cfg = tiny_config() if args.tiny else default_config()
    overrides = {}
    if args.scales:
        overrides["scales"] = tuple(args.scales.split(","))
    if args.decoder:
        overrides["decoder_variant"] = args.decoder
    if args.dropout is not None:
        overrides["dropout"] = args.dropout
    if args.mpn_dropout is not None:
        overrides["mpn_dropout"] = args.mpn_dropout
    return replace(cfg, **overrides).validate() if overrides else cfg


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tiny", action="store_true", help="desk-scale model preset")
    p.add_argument("--scales", default="", help="comma list: fine,coarse[,middle]")
    p.add_argument("--decoder", default="", choices=["", "control", "plain"])
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--mpn-dropout", dest="mpn_dropout", type=float, default=None)


def cmd_gen_data(args) -> int:
    spec = SynthSpec(
        gaits=tuple(args.gait or ["walking"]),
        paths=tuple(args.path or ["line"]),
        terrain=args.terrain,
        frames=args.frames,
        fps=args.fps,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clips = generate_synthetic_dataset(spec)
    manifest = []
    for clip in clips:
        path = out / f"{clip.clip_id}.mclip"
        save_clip(path, clip)
        manifest.append({"file": path.name, "frames": len(clip), "split": "train"})
        print(f"wrote {path} ({len(clip)} frames)")
    with open(out / "manifest.json", "w") as fh:
        json.dump({"clips": manifest, "seed": args.seed}, fh, indent=2, sort_keys=True)
    print(f"wrote {out / 'manifest.json'}")
    return 0


def _load_clips(paths) -> list:
    clips = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            manifest = p / "manifest.json"
            if manifest.exists():
                doc = json.loads(manifest.read_text())
                clips.extend(load_clip(p / c["file"]) for c in doc["clips"])
            else:
                clips.extend(load_clip(f) for f in sorted(p.glob("*.mclip")))
        else:
            clips.append(load_clip(p))
    if not clips:
        raise ConfigError("no clips found")
    return clips


def cmd_train(args) -> int:
    clips = _load_clips(args.data)
    mcfg = _model_config(args)
    tcfg = TrainConfig(
        lambda_l1=args.l1,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        loss_variant=args.loss,
        val_fraction=args.val_fraction,
        max_steps=args.max_steps,
        target_mse=args.target_mse,
        lr_decay_step=args.lr_decay_step,
        checkpoint_dir=args.checkpoint_dir,
        skeleton_hash=clips[0].skeleton_hash,
    )
    result = fit(clips, mcfg, tcfg, progress=lambda s: print(s, flush=True))
    save_checkpoint(
        args.out,
        result.params,
        clips[0].skeleton_hash,
        meta=json.dumps(
            {"train_config": vars(args_namespace_copy(args)), "steps": result.steps},
            sort_keys=True, default=str,
        ),
    )
    trace_path = args.trace or (str(args.out) + ".trace.json")
    Path(trace_path).write_text(result.trace_json())
    print(f"wrote {args.out}")
    print(f"wrote {trace_path}")
    return 0


def args_namespace_copy(args) -> argparse.Namespace:
    ns = argparse.Namespace(**{k: v for k, v in vars(args).items() if k != "func"})
    return ns


def cmd_simulate(args) -> int:
    params, skel_hash, _ = load_checkpoint(args.checkpoint)
    terrain = load_terrain(args.terrain)
    if args.script:
        script = load_script(args.script)
    else:
        gait = GAITS.index(args.gait)
        speed = args.speed
        script = constant_script(
            args.ticks, ControlInput(np.array([0.0, 1.0]), speed, gait)
        )
    warm = load_motion_file(args.warm_clip) if args.warm_clip else None
    rollout = run_script(
        params, terrain, script, warm=warm, seed=args.seed,
        scenario=args.scenario or terrain.name,
    )
    # rollout files carry their producing configuration inline
    rollout.metrics["producer"] = {
        k: v for k, v in vars(args).items() if k != "func" and v not in (None, "")
    }
    save_rollout(args.out, rollout)
    print(f"wrote {args.out}")
    print(json.dumps(rollout.metrics, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    skeleton = default_skeleton()
    if args.ttest:
        if len(args.inputs) != 2:
            raise ConfigError("t-test needs exactly two rollouts")
        series = []
        for p in args.inputs:
            clip = load_motion_file(p)
            rot = np.stack([f.rotations for f in clip.frames])
            from .metrics import angle_update_series

            s = angle_update_series(rot, skeleton.subset("full"), clip.fps)
            # paired unit: per-second windows of the full-body angle update
            fps = int(clip.fps)
            n = len(s) // fps
            series.append(np.array([s[i * fps : (i + 1) * fps].mean() for i in range(n)]))
        n = min(map(len, series))
        report = paired_t_test(series[0][:n], series[1][:n])
        print(
            f"paired t-test (per-second full-body angle update, n={n}): "
            f"t={report.t_statistic:.4f} df={report.degrees_of_freedom} "
            f"p={report.p_value:.4f} mean_diff={report.mean_difference:.3f}"
        )
        return 0
    reports = []
    for p in args.inputs:
        clip = load_motion_file(p)
        rot = np.stack([f.rotations for f in clip.frames])
        scenario = clip.terrain_ref or Path(p).stem
        reports.append(angle_update_report(rot, skeleton, clip.fps, scenario=scenario))
    print(angle_update_table(reports, label=args.label))
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(
                [vars(r) for r in reports], sort_keys=True, indent=2, default=float
            )
        )
        print(f"wrote {args.json_out}")
    return 0


def cmd_serve(args) -> int:
    import asyncio

    from .service import MotionService, ServiceConfig

    params, _, _ = load_checkpoint(args.checkpoint)
    terrain = load_terrain(args.terrain)
    config = ServiceConfig(
        host=args.host,
        port=args.port,
        tick_rate=args.tick_rate,
        session_cap=args.session_cap,
        record_dir=args.record_dir,
    )
    service = MotionService(params, terrain, config)

    async def main():
        await service.start()
        print(f"serving on ws://{config.host}:{service.port} (terrain {terrain.name})")
        await asyncio.Future()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def cmd_inspect(args) -> int:
    params, skel_hash, meta = load_checkpoint(args.checkpoint)
    cfg = params.config
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    print(f"skeleton hash: {skel_hash}")
    print(f"parameters: {param_count(cfg)}")
    print(f"memory tokens: {cfg.memory_tokens}")
    if meta:
        print(f"meta: {meta}")
    if args.clip is not None:
        from .data import assemble_samples, normalize_input
        from .model import concat_scales, encode_scale, export_attention
        from .trajectory import trajectory_to_vector

        clip = load_motion_file(args.clip)
        samples = assemble_samples(clip, cfg)
        target = args.frame
        sample = None
        from .data import valid_target_range

        for i, s in zip(valid_target_range(len(clip.frames), cfg), samples):
            if i == target:
                sample = s
                break
        if sample is None:
            raise ConfigError(f"frame {target} is not a valid sample target")
        scales_n, traj_n = normalize_input(sample.scales, sample.traj, params.norm, cfg)
        encoded = [
            encode_scale(m, sp, cfg) for m, sp in zip(scales_n, params.scales)
        ]
        memory = concat_scales(encoded)
        maps = export_attention(memory, traj_n, params)
        labels = memory_token_labels(cfg)
        print(f"attention for target frame {target}:")
        print("tokens: " + "  ".join(f"{s}+{k}" for s, k in labels))
        for li, layer in enumerate(maps):
            for hi, row in enumerate(layer):
                cells = " ".join(f"{w:.3f}" for w in row)
                print(f"layer {li} head {hi}: {cells}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strider",
        description="Real-time character motion controller: train, simulate, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic motion clips")
    p.add_argument("--gait", action="append", default=None, choices=list(GAITS))
    p.add_argument("--path", action="append", default=None, choices=list(PATHS))
    p.add_argument("--terrain", default="flat", help=f"builtin {sorted(BUILTIN_TERRAINS)} or grid file")
    p.add_argument("--frames", type=int, default=600)
    p.add_argument("--fps", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit the controller on clips")
    p.add_argument("data", nargs="+", help="clip files or dataset directories")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", default="", help="loss trace path (default <out>.trace.json)")
    _add_model_flags(p)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--l1", type=float, default=0.01)
    p.add_argument("--loss", default="mse", choices=["mse", "mae", "ce-contact"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.1)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.add_argument("--target-mse", dest="target_mse", type=float, default=None)
    p.add_argument("--lr-decay-step", dest="lr_decay_step", type=int, default=None)
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="headless scripted rollout")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--terrain", default="flat")
    p.add_argument("--script", default="", help="control script file")
    p.add_argument("--ticks", type=int, default=600)
    p.add_argument("--gait", default="walking", choices=list(GAITS))
    p.add_argument("--speed", type=float, default=1.2)
    p.add_argument("--warm-clip", dest="warm_clip", default="")
    p.add_argument("--scenario", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="angle-update tables and t-tests")
    p.add_argument("inputs", nargs="+", help="rollout or clip files")
    p.add_argument("--ttest", action="store_true")
    p.add_argument("--label", default="model")
    p.add_argument("--json-out", dest="json_out", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the WebSocket motion service")
    p.add_argument("--checkpoint", required=True, help="or env STRIDER_CHECKPOINT")
    p.add_argument("--terrain", default=os.environ.get("STRIDER_TERRAIN", "flat"))
    p.add_argument("--host", default=os.environ.get("STRIDER_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("STRIDER_PORT", "8765")))
    p.add_argument("--tick-rate", dest="tick_rate", type=float,
                   default=float(os.environ.get("STRIDER_TICK_RATE", "60")))
    p.add_argument("--session-cap", dest="session_cap", type=int,
                   default=int(os.environ.get("STRIDER_SESSION_CAP", "8")))
    p.add_argument("--record-dir", dest="record_dir",
                   default=os.environ.get("STRIDER_RECORD_DIR"))
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("inspect", help="dump checkpoint config and attention maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip", default=None, help="clip for attention inspection")
    p.add_argument("--frame", type=int, default=100)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
