"""Command-line entry point: data generation, training, inference, evaluation
and mesh export.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, dump_config, load_config
from .evaluate import ABLATION_LABELS, build_report, contact_cd, evaluate_scenes, pose_errors, reconstruction_cd
from .fields.model import VARIANTS, FieldModel
from .fields.object_field import (ObjectModel, PretrainConfig, ReconstructionError, TrainingError,
                                  pretrain_object, reconstruct_mesh, tool_query_sets)
from .geom.mesh import TOOL_KINDS, write_obj, write_ply
from .infer import BaselineError, InferConfig, InferenceError, Observation, run_inference
from .ndiff import CheckpointError
from .sim.dataset import DataError, generate_dataset, load_dataset, read_manifest, read_record, record_name
from .trainer import TrainingConfig, train_joint

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
log = logging.getLogger("vtfield")


class UsageError(ValueError):
    pass


class Outputs:
    """Tracks files and directories created by a command so they can be
    removed if it fails."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        self.paths.append(Path(path))
        return Path(path)

    def mkdir(self, path):
        path = Path(path)
        missing = []
        p = path
        while not p.exists():
            missing.append(p)
            p = p.parent
        path.mkdir(parents=True, exist_ok=True)
        self.paths.extend(reversed(missing))
        return path

    def remove(self):
        for p in reversed(self.paths):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists() or p.with_name(p.name + ".partial").exists():
                p.unlink(missing_ok=True)
                p.with_name(p.name + ".partial").unlink(missing_ok=True)


def free_stem(path, suffixes):
    """First of ``path``, ``path.1``, ``path.2`` ... for which none of
    ``path + suffix`` exists, so earlier reports are never overwritten."""
    path = Path(path)
    for k in range(10000):
        stem = path if k == 0 else path.with_name(f"{path.name}.{k}")
        if not any(stem.with_name(stem.name + s).exists() for s in suffixes):
            return stem
    raise UsageError(f"too many reports at {path}")


def rel(path, run_dir):
    return Path(os.path.relpath(Path(path).resolve(), Path(run_dir).resolve())).as_posix()


def parse_tools(spec):
    if spec == "all":
        return list(TOOL_KINDS)
    tools = [t.strip() for t in spec.split(",") if t.strip()]
    bad = [t for t in tools if t not in TOOL_KINDS]
    if bad or not tools:
        raise UsageError(f"unknown tools {bad}; expected 'all' or a comma list of {', '.join(TOOL_KINDS)}")
    return tools


def load_field_model(path):
    try:
        return FieldModel.load(path)
    except (OSError, KeyError) as e:
        raise CheckpointError(f"{path}: {e}") from e


def infer_config(args):
    config = InferConfig()
    if getattr(args, "config", None):
        config = load_config(args.config, config)
    over = {}
    for key in ("pose_from", "surface"):
        if getattr(args, key, None) is not None:
            over[key] = getattr(args, key)
    if args.seed is not None:
        over["seed"] = args.seed
    config = replace(config, **over)
    if config.pose_from not in ("vision", "tactile", "both"):
        raise ConfigError(f"pose_from must be vision, tactile or both, got '{config.pose_from}'")
    if config.surface not in ("learned", "gt"):
        raise ConfigError(f"surface must be learned or gt, got '{config.surface}'")
    return config


# -- subcommands -----------------------------------------------------------------
def cmd_gen_data(args, out):
    tools = parse_tools(args.tools)
    if args.per_tool < 1:
        raise UsageError("--per-tool must be >= 1")
    dest = Path(args.out)
    if (dest / "manifest.txt").exists():
        raise UsageError(f"{dest} already holds a dataset; choose a new --out")
    out.mkdir(dest)
    out.add(dest / "records")
    out.add(dest / "manifest.txt")
    seed = 0 if args.seed is None else args.seed
    man = generate_dataset(tools, args.per_tool, args.split, seed, dest)
    log.info("wrote %d records to %s", sum(int(man[f"count.{t}"]) for t in tools), dest)


def cmd_pretrain(args, out):
    man = read_manifest(Path(args.data) / "manifest.txt")
    available = [t for t in man.get("tools", "").split(",") if t]
    tools = available if args.tool == "all" else parse_tools(args.tool)
    if not tools:
        raise DataError(f"{args.data}: dataset lists no tools")
    config = PretrainConfig()
    over = {}
    if args.epochs is not None:
        over["epochs"] = args.epochs
    if args.lr is not None:
        over["lr"] = args.lr
    if args.seed is not None:
        over["seed"] = args.seed
    config = replace(config, **over)
    qsets = tool_query_sets(tools, config.seed)
    logpath = out.add(Path(args.out).with_name(Path(args.out).name + ".log"))
    out.mkdir(logpath.parent)
    with open(logpath, "w") as fh:
        def emit(line):
            fh.write(line + "\n")
            log.info(line)
        model = pretrain_object(qsets, config, log=emit)
    out.add(args.out)
    model.save(args.out, extra={"pretrain": {k: getattr(config, k) for k in ("epochs", "lr", "seed")}})
    log.info("saved object model for %s to %s", ",".join(tools), args.out)


def training_config(args):
    config = TrainingConfig()
    if args.config:
        config = load_config(args.config, config)
    over = {}
    for key in ("epochs", "lr", "variant", "batch"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    if args.seed is not None:
        over["seed"] = args.seed
    config = replace(config, **over)
    if config.variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got '{config.variant}'")
    try:
        return config.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None


def cmd_train(args, out):
    config = training_config(args)
    _, records = load_dataset(args.data)
    obj = ObjectModel.load(args.object)
    missing = sorted({r.tool for r in records} - set(obj.tools))
    if missing:
        raise DataError(f"object model has no code for tools {missing}")
    logpath = out.add(Path(args.out).with_name(Path(args.out).name + ".log"))
    out.mkdir(logpath.parent)
    with open(logpath, "w") as fh:
        def emit(line):
            fh.write(line + "\n")
            log.info(line)
        model, _ = train_joint(records, obj, config, log=emit)
    out.add(args.out)
    model.save(args.out)
    log.info("saved %s model (%d trials) to %s", config.variant, len(records), args.out)


def cmd_infer(args, out):
    config = infer_config(args)
    model = load_field_model(args.model)
    record = read_record(args.scene)
    if record.tool not in model.obj.tools:
        raise DataError(f"model has no code for tool '{record.tool}'")
    run_dir = out.mkdir(args.out)
    stem = free_stem(run_dir / "report", (".txt", ".kv", ".ply"))
    result = run_inference(model, Observation.from_record(record), config)
    ply = out.add(stem.with_name(stem.name + ".ply"))
    write_ply(ply, result.contact.points_world, result.contact.probs)
    trans, rot = pose_errors(result.pose.xi, record.xi)
    rows = [
        ("scene", rel(args.scene, run_dir)),
        ("model", rel(args.model, run_dir)),
        ("tool", record.tool),
        ("pose_from", config.pose_from),
        ("surface", config.surface),
        ("seed", config.seed),
        ("xi_x", f"{result.pose.xi[0]:.9g}"),
        ("xi_z", f"{result.pose.xi[1]:.9g}"),
        ("xi_theta", f"{result.pose.xi[2]:.9g}"),
        ("pose_steps", result.pose.steps),
        ("pose_restarts", result.pose.restarts),
        ("pose_residual", f"{result.pose.residual:.9g}"),
        ("code_steps", result.code_steps),
        ("code_residual_init", f"{result.code_residual_init:.9g}"),
        ("code_residual", f"{result.code_residual:.9g}"),
        ("contact_passes", result.contact_passes),
        ("contact_points", len(result.contact.points)),
        ("contact_fallback", int(result.contact.fallback)),
        ("contact_ply", rel(ply, run_dir)),
        ("trans_err_mm", f"{trans:.9g}"),
        ("rot_err_deg", f"{rot:.9g}"),
        ("contact_cd", f"{contact_cd(result.contact.points_world, record):.9g}"),
    ]
    kv = out.add(stem.with_name(stem.name + ".kv"))
    kv.write_text("".join(f"{k}={v}\n" for k, v in rows))
    txt = out.add(stem.with_name(stem.name + ".txt"))
    width = max(len(k) for k, _ in rows)
    txt.write_text("".join(f"{k.ljust(width)}  {v}\n" for k, v in rows))
    # wall-clock varies run to run, so it goes to a separate log rather than the report
    with open(run_dir / "timings.log", "a") as fh:
        fh.write(f"report={rel(kv, run_dir)} " + " ".join(f"{k}_s={v:.4f}" for k, v in result.timings.items())
                 + f" pose_steps={result.pose.steps} code_steps={result.code_steps}"
                 + f" contact_passes={result.contact_passes}\n")
    for k, v in result.timings.items():
        log.info("stage %s: %.3f s", k, v)


_WORKER = {}


def _eval_worker_init(paths, config, runs, sources):
    _WORKER["models"] = {k: (FieldModel.load(p) if p else None) for k, p in paths.items()}
    _WORKER["args"] = (config, runs, sources)


def _eval_worker(path):
    config, runs, sources = _WORKER["args"]
    return evaluate_scenes(_WORKER["models"], [read_record(path)], config, sources, runs, icp=True)[0]


def cmd_eval(args, out):
    config = infer_config(args)
    paths = {"full": args.model}
    for spec in args.variant or []:
        name, sep, p = spec.partition("=")
        if not sep or name not in VARIANTS or name == "full":
            raise UsageError(f"--variant expects wo_acts=CKPT or wo_obj_pose=CKPT, got '{spec}'")
        paths[name] = p
    for name in VARIANTS[1:]:
        paths.setdefault(name, None)
    models = {k: (load_field_model(p) if p else None) for k, p in paths.items()}
    _, records = load_dataset(args.data)
    missing = sorted({r.tool for r in records} - set(models["full"].obj.tools))
    if missing:
        raise DataError(f"model has no code for tools {missing}")
    sources = ("both", "vision", "tactile")
    runs = [("full", "both"), ("full", "vision"), ("full", "tactile")]
    absent = []
    for name in VARIANTS[1:]:
        if models[name] is None:
            absent.append(ABLATION_LABELS[f"{name}@both"])
        else:
            runs.append((name, "both"))
    runs = tuple(runs)
    t0 = time.perf_counter()
    if args.jobs > 1 and len(records) > 1:
        rec_dir = Path(args.data) / "records"
        files = []
        counts = {}
        for r in records:
            i = counts.get(r.tool, 0)
            counts[r.tool] = i + 1
            files.append(str(rec_dir / record_name(r.tool, i)))
        with ProcessPoolExecutor(args.jobs, initializer=_eval_worker_init,
                                 initargs=(paths, config, runs, sources)) as pool:
            results = list(pool.map(_eval_worker, files))
    else:
        results = evaluate_scenes(models, records, config, sources, runs, icp=True,
                                  log=lambda s: log.info(s))
    results.sort(key=lambda r: r.trial)
    recon = {tool: reconstruction_cd(models["full"].obj, tool, config.recon_resolution, seed=config.seed)
             for tool in sorted({r.tool for r in records})}
    report = build_report(results, recon, absent)
    log.info("evaluated %d scenes in %.1f s", len(results), time.perf_counter() - t0)

    target = Path(args.out)
    run_dir = out.mkdir(target.parent if str(target.parent) else Path("."))
    stem = free_stem(target, (".txt", ".kv"))
    header = [("model", rel(args.model, run_dir)), ("data", rel(args.data, run_dir)),
              ("scenes", len(results)), ("seed", config.seed)]
    for name in VARIANTS[1:]:
        if paths[name]:
            header.append((f"variant.{name}", rel(paths[name], run_dir)))
    txt = out.add(stem.with_name(stem.name + ".txt"))
    txt.write_text("".join(f"# {k}: {v}\n" for k, v in header) + report.to_text())
    scene_lines = []
    for r in results:
        parts = [f"scene={r.tool}:{r.trial}"]
        for src, (mm, deg) in r.errors.items():
            parts.append(f"trans_mm.{src}={mm:.9g} rot_deg.{src}={deg:.9g}")
        for key, v in r.contact.items():
            parts.append(f"contact_cd.{ABLATION_LABELS.get(key, key)}={v:.9g}")
        scene_lines.append(" ".join(parts) + "\n")
    kv = out.add(stem.with_name(stem.name + ".kv"))
    kv.write_text("".join(f"{k}={v}\n" for k, v in header) + report.to_keyvalue()
                  + "".join(scene_lines))
    sys.stdout.write(report.to_text())


def cmd_export_mesh(args, out):
    try:
        obj = ObjectModel.load(args.model)
    except (OSError, KeyError) as e:
        raise CheckpointError(f"{args.model}: {e}") from e
    if args.tool not in obj.tools:
        raise UsageError(f"model has no code for tool '{args.tool}' (has {', '.join(obj.tools)})")
    if args.resolution < 8:
        raise UsageError("--resolution must be >= 8")
    mesh = reconstruct_mesh(obj, args.tool, args.resolution)
    out.mkdir(Path(args.out).parent)
    out.add(args.out)
    write_obj(args.out, mesh)
    log.info("wrote %d vertices, %d faces to %s", len(mesh.vertices), len(mesh.faces), args.out)


# -- argument parsing -------------------------------------------------------------
def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (eval only)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vtfield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="simulate press interactions")
    g.add_argument("--tools", default="all")
    g.add_argument("--per-tool", type=int, required=True)
    g.add_argument("--split", choices=["train", "test"], required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    g = sub.add_parser("pretrain", parents=[common], help="pretrain the object SDF field")
    g.add_argument("--data", required=True)
    g.add_argument("--tool", default="all")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_pretrain)

    g = sub.add_parser("train", parents=[common], help="train tactile and contact fields")
    g.add_argument("--data", required=True)
    g.add_argument("--object", required=True)
    g.add_argument("--config", help="key=value file of training settings")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch", type=int)
    g.add_argument("--variant", choices=VARIANTS)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("infer", parents=[common], help="pose, trial code and contact for one scene")
    g.add_argument("--model", required=True)
    g.add_argument("--scene", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="key=value file of inference settings")
    g.add_argument("--pose-from", choices=["vision", "tactile", "both"])
    g.add_argument("--surface", choices=["learned", "gt"])
    g.set_defaults(func=cmd_infer)

    g = sub.add_parser("eval", parents=[common], help="metrics table over a dataset")
    g.add_argument("--model", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--out", required=True, help="report path stem (.txt and .kv are added)")
    g.add_argument("--config", help="key=value file of inference settings")
    g.add_argument("--variant", action="append", help="NAME=CKPT for wo_acts / wo_obj_pose")
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("export-mesh", parents=[common], help="marching-cubes mesh of a tool (canonical frame)")
    g.add_argument("--model", required=True)
    g.add_argument("--tool", required=True)
    g.add_argument("--resolution", type=int, default=256)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_export_mesh)

    g = sub.add_parser("show-config", parents=[common], help="print default settings as key=value")
    g.add_argument("which", choices=["train", "infer"])
    g.set_defaults(func=lambda a, o: sys.stdout.write(dump_config(TrainingConfig() if a.which == "train"
                                                                    else InferConfig())))
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        parser.print_usage(sys.stderr)
        print("vtfield: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    out = Outputs()
    code = EXIT_OK
    try:
        with np.errstate(over="ignore", under="ignore"):
            args.func(args, out)
    except (UsageError, ConfigError) as e:
        print(f"vtfield: error: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except (DataError, CheckpointError, OSError) as e:
        print(f"vtfield: data error: {e}", file=sys.stderr)
        code = EXIT_DATA
    except (TrainingError, InferenceError, ReconstructionError, BaselineError, FloatingPointError) as e:
        print(f"vtfield: numeric failure: {e}", file=sys.stderr)
        code = EXIT_NUMERIC
    except BaseException:
        out.remove()
        raise
    if code != EXIT_OK:
        out.remove()
    return code


if __name__ == "__main__":
    sys.exit(main())
