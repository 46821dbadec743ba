"""Command-line entry point.

Subcommands: synth, train, eval, predict, travmap, gradcheck. Exit codes:
0 success, 1 runtime failure (non-finite loss, format errors in data),
2 usage errors and missing files. Every run echoes its fully resolved
configuration and seed into the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_params, save_params
from .config import RunConfig, echo_config, load_config
from .data import build_segments, parse_trajectory_file, Dataset
from .grid import ConvGridProvider, FileGridProvider
from .metrics import evaluate, linear_baseline, ade as ade_metric
from .model import ModelConfig, TrajGanModel, make_batch
from .synth import SceneSpec, load_bundle, write_bundle
from .train import TrainConfig, substream, train
from .traversability import build_map, write_pgm, write_sidecar, write_text_grid
from .verify import micro_objective_check


def _model_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(
        mode=cfg.mode, z_dim=cfg.z_dim, n_max=cfg.n_max,
        obs_len=cfg.obs_len, pred_len=cfg.pred_len,
        representation=cfg.representation,
        attention_recompute=cfg.attention_recompute,
        dis_per_step=cfg.dis_per_step, provider=cfg.provider,
        grid_channels=cfg.grid_channels, conv_hidden=cfg.conv_hidden,
    )


def _build_provider(cfg: RunConfig, mcfg: ModelConfig, rng: np.random.Generator):
    if mcfg.provider == "file":
        if not cfg.grid_file:
            raise FileNotFoundError("file provider requires model.grid_file")
        provider = FileGridProvider(cfg.grid_file)
        if provider.out_channels != mcfg.grid_channels:
            raise ValueError(f"grid file has {provider.out_channels} channels, "
                             f"model configured for {mcfg.grid_channels}")
        return provider
    return ConvGridProvider(rng, in_channels=mcfg.raster_channels,
                            hidden_channels=mcfg.conv_hidden,
                            out_channels=mcfg.grid_channels)


def _load_data(cfg: RunConfig):
    if cfg.data_dir:
        dataset, rasters, walkables, _ = load_bundle(cfg.data_dir)
        return dataset, rasters, walkables
    if cfg.data_file:
        points = parse_trajectory_file(cfg.data_file)
        dataset = build_segments(points, obs_len=cfg.obs_len, pred_len=cfg.pred_len,
                                 scene_id=Path(cfg.data_file).stem)
        return dataset, {}, {}
    raise FileNotFoundError("no input data: set data.data_dir or data.data_file")


def _build_model(cfg: RunConfig) -> TrajGanModel:
    mcfg = _model_config(cfg)
    init_rng = substream(cfg.seed, "init")
    provider = _build_provider(cfg, mcfg, init_rng)
    return TrajGanModel(mcfg, init_rng, provider=provider)


def _load_model(checkpoint_path, cfg: RunConfig) -> TrajGanModel:
    arrays, meta = load_params(checkpoint_path)
    mcfg = ModelConfig(**meta["model"]) if "model" in meta else _model_config(cfg)
    rng = np.random.default_rng(0)  # init values are replaced by the checkpoint
    provider = _build_provider(cfg, mcfg, rng) if mcfg.provider == "file" else \
        ConvGridProvider(rng, in_channels=mcfg.raster_channels,
                         hidden_channels=mcfg.conv_hidden,
                         out_channels=mcfg.grid_channels)
    model = TrajGanModel(mcfg, rng, provider=provider)
    model.load_state(arrays)
    return model


def _overrides(args) -> dict:
    keys = ("seed", "epochs", "batch_size", "mode", "k", "out_dir", "data_dir",
            "data_file", "lr", "lambda_l2", "provider", "grid_file")
    return {k: getattr(args, k, None) for k in keys}


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out / "resolved_config.toml")
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = SceneSpec(kind=args.kind)
    if args.spec_file:
        import dataclasses as dc
        from .config import tomllib
        path = Path(args.spec_file)
        if not path.exists():
            raise FileNotFoundError(f"scene spec file not found: {path}")
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        valid = {f.name for f in dc.fields(SceneSpec)}
        for key, value in doc.items():
            if key not in valid:
                raise ValueError(f"unknown scene-spec key {key!r}")
            setattr(spec, key, value)
    if args.agents is not None:
        spec.n_agents = args.agents
    if args.frames is not None:
        spec.frames = args.frames
    spec.validate()
    out = write_bundle(args.out, spec, args.scenes, args.seed)
    dataset, _, _, _ = load_bundle(out)
    print(f"wrote {args.scenes} scene(s) to {out} "
          f"({len(dataset.segments)} segments, seed {args.seed})")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    dataset, rasters, _ = _load_data(cfg)
    if not dataset.segments:
        raise RuntimeError("training dataset has no segments")
    out = _prepare_out(cfg)
    model = _build_model(cfg)
    tcfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                       lambda_l2=cfg.lambda_l2, seed=cfg.seed, augment=cfg.augment,
                       checkpoint_every=cfg.checkpoint_every)
    log = train(model, dataset, rasters, tcfg,
                log_path=out / "train_log.jsonl", checkpoint_dir=out)
    final = log.final
    print(f"trained {cfg.epochs} epoch(s), {log.generator_steps} generator steps; "
          f"final train ADE {final.train_ade:.4f}, G loss {final.g_loss:.4f}, "
          f"D loss {final.d_loss:.4f}")
    print(f"checkpoint: {out / 'checkpoint_final.bin'}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    dataset, rasters, _ = _load_data(cfg)
    out = _prepare_out(cfg)
    model = _load_model(args.checkpoint, cfg)
    report = evaluate(model, dataset, rasters, k=cfg.k, seed=cfg.seed,
                      collision_threshold=cfg.collision_threshold)
    if cfg.units != "meters" and cfg.unit_scale != 1.0:
        report = report.scaled(cfg.unit_scale, cfg.units)
    if args.with_linear:
        lin_ades = [ade_metric(linear_baseline(s.observed, cfg.pred_len), s.future)
                    for s in dataset.segments]
        print(f"linear baseline ADE {float(np.mean(lin_ades)):.4f} {cfg.units}")
    print(report.lines())
    record = dataclasses.asdict(report)
    with open(out / "report.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_predict(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    dataset, rasters, _ = _load_data(cfg)
    out = _prepare_out(cfg)
    model = _load_model(args.checkpoint, cfg)
    z_rng = substream(cfg.seed, "predict-z")
    pred_path = out / "predictions.jsonl"
    att_path = out / "attention.jsonl"
    n = 0
    with open(pred_path, "w", encoding="utf-8") as pf, \
         open(att_path, "w", encoding="utf-8") as af:
        for seg in dataset.segments:
            batch = make_batch([seg], model.config)
            z = z_rng.standard_normal((batch.num_agents, model.config.z_dim))
            gen = model.generate(batch, z,
                                 rasters if model.gates.physical_stream else None,
                                 export_attention=args.export_attention)
            pred = gen.pred_abs()
            for i, aid in enumerate(seg.agent_ids):
                pf.write(json.dumps({
                    "scene": seg.scene_id, "start_frame": int(seg.start_frame),
                    "agent_id": int(aid), "pred": pred[i].tolist(),
                }, sort_keys=True) + "\n")
                n += 1
            if args.export_attention:
                for step, w in enumerate(gen.social_weights):
                    for i, aid in enumerate(seg.agent_ids):
                        af.write(json.dumps({
                            "scene": seg.scene_id, "start_frame": int(seg.start_frame),
                            "agent_id": int(aid), "step": step, "kind": "social",
                            "weights": w[i].tolist(),
                        }, sort_keys=True) + "\n")
                for step, w in enumerate(gen.physical_weights):
                    for i, aid in enumerate(seg.agent_ids):
                        af.write(json.dumps({
                            "scene": seg.scene_id, "start_frame": int(seg.start_frame),
                            "agent_id": int(aid), "step": step, "kind": "physical",
                            "weights": w[i].tolist(),
                        }, sort_keys=True) + "\n")
    print(f"wrote {n} agent predictions to {pred_path}")
    if args.export_attention:
        print(f"attention weights: {att_path}")
    return 0


def cmd_travmap(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    dataset, rasters, walkables = _load_data(cfg)
    out = _prepare_out(cfg)
    model = _load_model(args.checkpoint, cfg)
    tmap = build_map(model, dataset, rasters, n_seeds=args.seeds,
                     samples_per_seed=args.samples, threshold=args.threshold,
                     seed=cfg.seed, bilinear=args.bilinear)
    write_pgm(tmap, out / "traversability.pgm")
    write_text_grid(tmap, out / "traversability.txt")
    write_sidecar(tmap, out / "traversability.json")
    if tmap.empty_warning:
        print("warning: no trajectory passed the discriminator threshold; map is empty",
              file=sys.stderr)
    if walkables:
        from .traversability import mass_inside
        scene0 = dataset.segments[0].scene_id
        frac = mass_inside(tmap, walkables[scene0])
        print(f"map mass {tmap.mass:.0f}, acceptance rate {tmap.acceptance_rate:.2f}, "
              f"mass inside walkable {frac * 100:.1f}%")
    else:
        print(f"map mass {tmap.mass:.0f}, acceptance rate {tmap.acceptance_rate:.2f}")
    return 0


def cmd_gradcheck(args) -> int:
    report = micro_objective_check(seed=args.seed, samples_per_param=args.samples,
                                   tol=args.tol)
    for entry in sorted(report.entries, key=lambda e: -e.max_rel_error)[:args.show]:
        print(f"  {entry.name}: rel err {entry.max_rel_error:.3e} "
              f"({entry.checked} elements)")
    print(report.summary())
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajgan",
        description="Multi-agent trajectory forecasting with dual attention and an LSTM GAN.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", dest="out_dir", default=None)
        p.add_argument("--data-dir", dest="data_dir", default=None,
                       help="scene bundle directory (from synth)")
        p.add_argument("--data-file", dest="data_file", default=None,
                       help="plain trajectory text file (frame agent x y)")
        p.add_argument("--mode", default=None, help="ablation mode, e.g. T_A+I_A")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p.add_argument("--kind", default="corridor", choices=["corridor", "crossing"])
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--spec-file", default=None, help="TOML file of scene-spec fields")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lambda-l2", dest="lambda_l2", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (best-of-k)")
    common(p, checkpoint=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--with-linear", action="store_true",
                   help="also report the least-squares linear baseline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write predictions for a dataset")
    common(p, checkpoint=True)
    p.add_argument("--export-attention", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("travmap", help="build a traversability map")
    common(p, checkpoint=True)
    p.add_argument("--seeds", type=int, default=30)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--bilinear", action="store_true")
    p.set_defaults(func=cmd_travmap)

    p = sub.add_parser("gradcheck", help="finite-difference check of the objective")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=4, help="elements checked per tensor")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--show", type=int, default=5, help="worst tensors to print")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
