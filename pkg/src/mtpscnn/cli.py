"""Command-line entry point: ``mtpscnn <subcommand> ...``.

Settings resolve as built-in defaults, then an optional INI file given with
``--config`` (keys mirror flag names, read from the ``[DEFAULT]`` section and
the section named after the subcommand), then explicit flags.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PhotometricError

log = logging.getLogger("mtpscnn")


# --- helpers -------------------------------------------------------------------


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(out: Path, args: argparse.Namespace) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    manifest = {
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "output_dir": str(out),
        "version": __version__,
    }
    _dump_json(out / "manifest.json", manifest)


def _model_config(args):
    from .model import ModelConfig

    return ModelConfig(
        variant=args.variant, K=args.K, L=args.L, M=args.M, N=args.N, C=args.C,
        dropout_rate=args.dropout, seed=args.seed, use_mask=not args.no_mask,
    )


def _train_config(args):
    from .train import TrainConfig

    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, lr_decay=args.lr_decay,
        lr_decay_every=args.lr_decay_every, frames=args.frames, crop=args.crop, seed=args.seed,
        precision=args.precision,
    )


def _estimator(args, parser):
    from .io import load_checkpoint
    from .train import baseline_estimator, network_estimator

    if args.method == "baseline":
        return baseline_estimator
    if not args.checkpoint:
        parser.error("--checkpoint is required with --method mtpscnn")
    return network_estimator(load_checkpoint(args.checkpoint))


def error_map_image(errors_deg: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Angular errors mapped linearly from [0, 90] degrees to gray [0, 1]; background is black."""
    return np.where(mask, np.clip(errors_deg / 90.0, 0.0, 1.0), 0.0)


# --- subcommands ---------------------------------------------------------------


def cmd_render(args, parser) -> int:
    from .dataset import DatasetSample, synthetic_dataset
    from .io import write_object_dir
    from .render import BRDF, Heightfield, Scene, Sphere, random_heightfield, render_stack, sample_light_directions
    from .geometry import NormalMap

    if args.lights < 1:
        parser.error("--lights must be at least 1")
    if args.size < 3:
        parser.error("--size must be at least 3")
    if args.count < 1:
        parser.error("--count must be at least 1")
    out = _out_dir(args.output)
    if args.random:
        kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
        samples = synthetic_dataset(
            kinds, args.count, args.seed, size=args.size, q=args.lights,
            max_polar_deg=args.max_polar, dtype=np.float64,
        )
        for s in samples:
            write_object_dir(out / s.name, s)
        log.info("wrote %d objects to %s", len(samples), out)
    else:
        if args.count != 1:
            parser.error("--count > 1 needs --random")
        rng = np.random.default_rng(args.seed)
        brdf = BRDF(args.brdf, args.albedo, args.specular, args.shininess)
        if args.shape == "sphere":
            radius = args.radius if args.radius else 0.45 * args.size
            geometry = Sphere((args.size // 2, args.size // 2), radius)
        else:
            geometry = Heightfield(random_heightfield(args.size, args.size, rng))
        scene = Scene(args.size, args.size, geometry, brdf)
        lights = sample_light_directions(args.lights, args.max_polar, rng)
        normals, mask = scene.normal_map()
        sample = DatasetSample(render_stack(scene, lights), lights, mask, NormalMap(normals, mask), out.name)
        write_object_dir(out, sample)
        log.info("wrote %d frames to %s", args.lights, out)
    write_manifest(out, args)
    return 0


def cmd_train(args, parser) -> int:
    from .io import load_dataset_dir, save_checkpoint
    from .model import build_model, count_parameters
    from .train import train

    cfg = _train_config(args)
    model = build_model(_model_config(args), dtype=cfg.dtype)
    data = load_dataset_dir(args.data)
    out = _out_dir(args.output)
    log.info("training %s (%d parameters) on %d objects", model.config.variant, count_parameters(model), len(data))

    def on_epoch(epoch, loss):
        print(f"epoch {epoch + 1:3d}  loss {loss:.6f}", flush=True)

    _, history = train(model, data, cfg, on_epoch=on_epoch)
    save_checkpoint(model, out / "model.ckpt")
    (out / "loss_history.txt").write_text(
        "".join(f"{i + 1} {v:.9g}\n" for i, v in enumerate(history)), encoding="utf-8"
    )
    _dump_json(out / "loss_history.json", {"epoch_mean_loss": history, "steps": model.step})
    write_manifest(out, args)
    return 0


def cmd_eval(args, parser) -> int:
    from .io import load_dataset_dir, write_image
    from .train import evaluate

    estimator = _estimator(args, parser)
    data = load_dataset_dir(args.data)
    report = evaluate(estimator, data)
    for line in report.lines():
        print(line)
    if args.output:
        out = _out_dir(args.output)
        (out / "report.txt").write_text("\n".join(report.lines()) + "\n", encoding="utf-8")
        _dump_json(out / "report.json", {"mae": report.mae, "mean": report.mean, "method": args.method})
        masks = {name: s.mask for name, s in zip(report.mae, data)}
        for name, err in report.error_maps.items():
            write_image(out / f"{name}_error.png", error_map_image(err, masks[name]), bits=8)
        write_manifest(out, args)
    return 0


def cmd_predict(args, parser) -> int:
    from .geometry import encode_normal_rgb
    from .io import load_dataset_dir, write_image

    estimator = _estimator(args, parser)
    data = load_dataset_dir(args.data)
    out = _out_dir(args.output)
    for s in data:
        nm = estimator(s)
        write_image(out / f"{s.name}_normal.png", encode_normal_rgb(nm.normals, nm.mask), bits=16)
        print(f"{s.name}: {int(nm.mask.sum())} pixels")
    write_manifest(out, args)
    return 0


def cmd_gradcheck(args, parser) -> int:
    from .nn.gradsuite import CHECKS, TOLERANCE, run_suite

    ops = args.op or None
    if ops:
        bad = sorted(set(ops) - set(CHECKS))
        if bad:
            parser.error(f"unknown --op {bad}; choose from {sorted(CHECKS)}")
    if args.seeds < 1:
        parser.error("--seeds must be at least 1")
    results = run_suite(range(args.seed, args.seed + args.seeds), ops)
    lines = [f"{r.op:<14} max rel err {r.max_error:.3e}  {'PASS' if r.passed else 'FAIL'}" for r in results]
    for line in lines:
        print(line)
    failed = [r for r in results if not r.passed]
    if failed:
        for r in failed:
            print(f"FAILED: {r.op} max relative error {r.max_error:.3e} >= {TOLERANCE:g}", file=sys.stderr)
    if args.output:
        out = _out_dir(args.output)
        (out / "gradcheck.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        _dump_json(out / "gradcheck.json", {r.op: r.max_error for r in results})
        write_manifest(out, args)
    return 1 if failed else 0


def cmd_ablate(args, parser) -> int:
    from .io import load_dataset_dir
    from .train import ablate_variants

    cfg = _train_config(args)
    data = load_dataset_dir(args.data)
    eval_data = load_dataset_dir(args.eval_data) if args.eval_data else None
    table = ablate_variants(data, _model_config(args), cfg, eval_data)
    out = _out_dir(args.output)
    lines = [f"{variant:<12} {mae:8.3f}" for variant, mae in table.items()]
    for line in lines:
        print(line)
    (out / "ablation.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _dump_json(out / "ablation.json", table)
    write_manifest(out, args)
    return 0


# --- parser --------------------------------------------------------------------


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--variant", default="t-irfe-iafe", choices=["t-irfe-iafe", "t-iafe-irfe", "m-irfe-iafe"])
    g.add_argument("--K", type=int, default=3, help="number of inter-frame blocks")
    g.add_argument("--L", type=int, default=3, help="number of intra-frame blocks")
    g.add_argument("--M", type=int, default=3, help="frame kernel extent (odd)")
    g.add_argument("--N", type=int, default=3, help="spatial kernel extent (odd)")
    g.add_argument("--C", type=int, default=128, help="feature channels")
    g.add_argument("--dropout", type=float, default=0.2)
    g.add_argument("--no-mask", action="store_true", help="do not mask the lighting maps")


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=30)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--lr-decay", type=float, default=0.5)
    g.add_argument("--lr-decay-every", type=int, default=5)
    g.add_argument("--frames", type=int, default=16, help="frames per sample during training")
    g.add_argument("--crop", type=int, default=0, help="random training window side in pixels (0: whole image)")
    g.add_argument("--precision", choices=["float32", "float64"], default="float32")


def _add_estimator_flags(p):
    p.add_argument("--method", choices=["mtpscnn", "baseline"], default="mtpscnn")
    p.add_argument("--checkpoint", help="trained model (required for --method mtpscnn)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtpscnn", description="Photometric stereo normal estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="INI file with default values for this command")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = add("render", cmd_render, "Render a synthetic object directory")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--shape", choices=["sphere", "heightfield"], default="sphere")
    p.add_argument("--brdf", choices=["lambertian", "phong", "blinn_phong"], default="lambertian")
    p.add_argument("--albedo", type=float, default=0.8)
    p.add_argument("--specular", type=float, default=0.0)
    p.add_argument("--shininess", type=float, default=32.0)
    p.add_argument("--radius", type=float, default=None, help="sphere radius in pixels (default 0.45 * size)")
    p.add_argument("--lights", type=int, default=16)
    p.add_argument("--max-polar", type=float, default=60.0, help="light cone half-angle in degrees")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--random", action="store_true", help="randomize shape and material per object")
    p.add_argument("--count", type=int, default=1, help="objects to render (with --random)")
    p.add_argument("--kinds", default="lambertian-sphere,blinn_phong-sphere,lambertian-heightfield,blinn_phong-heightfield")

    p = add("train", cmd_train, "Train a network on object directories")
    p.add_argument("--data", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_model_flags(p)
    _add_train_flags(p)

    p = add("eval", cmd_eval, "Mean angular error against ground truth")
    p.add_argument("--data", required=True)
    p.add_argument("-o", "--output")
    _add_estimator_flags(p)

    p = add("predict", cmd_predict, "Estimate normal maps (no ground truth needed)")
    p.add_argument("--data", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_estimator_flags(p)

    p = add("gradcheck", cmd_gradcheck, "Finite-difference check of every operator")
    p.add_argument("--op", action="append", help="restrict to this operator (repeatable)")
    p.add_argument("--seeds", type=int, default=20, help="number of consecutive seeds starting at --seed")
    p.add_argument("-o", "--output")

    p = add("ablate", cmd_ablate, "Train and evaluate all three architecture variants")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data")
    p.add_argument("-o", "--output", required=True)
    _add_model_flags(p)
    _add_train_flags(p)
    return parser


def _apply_config_file(parser, sub, argv, path):
    """Install INI values as defaults of the ``sub`` subparser."""
    ini = configparser.ConfigParser()
    if not ini.read(path, encoding="utf-8"):
        parser.error(f"cannot read config file {path}")
    values = dict(ini.defaults())
    if ini.has_section(argv[0]):
        values.update(ini.items(argv[0]))
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.strip().lstrip("-").replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            parser.error(f"unknown key {key!r} in {path}")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = ini.BOOLEAN_STATES.get(raw.strip().lower())
            if defaults[dest] is None:
                parser.error(f"{key} must be a boolean")
        elif isinstance(action, argparse._AppendAction):
            defaults[dest] = raw.split()
        else:
            defaults[dest] = action.type(raw) if action.type else raw
            if action.choices is not None and defaults[dest] not in action.choices:
                parser.error(f"{key}={raw!r} is not one of {action.choices}")
    sub.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        subs = parser._subparsers._group_actions[0].choices
        cmd = next((a for a in argv if a in subs), None)
        if cmd in subs:
            _apply_config_file(parser, subs[cmd], [cmd], known.config)
    args = parser.parse_args(argv)
    args._parser = parser._subparsers._group_actions[0].choices[args.command]
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    sub = args._parser
    del args._parser
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, sub)
    except PhotometricError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
