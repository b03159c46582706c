"""A reduced-scale end-to-end run through the command line."""
from pathlib import Path

from vtfield.cli import main

TRAIN_CFG = "trunk_width=16\ncontact_points=100\nbatch=2\n"
INFER_CFG = "pose_steps=20\ncode_steps=10\nn_surface=300\nrecon_resolution=32\n"


def run(*argv):
    code = main([str(a) for a in argv])
    if code != 0:
        raise AssertionError(f"vtfield {' '.join(map(str, argv))} exited with {code}")


def run_pipeline(root, tools="hex,cylinder", per_tool=2, pretrain_epochs=20, train_epochs=2):
    """Generate, pretrain, train, infer and evaluate under ``root``.

    Returns the paths of every artifact whose bytes should be reproducible.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "train.cfg").write_text(TRAIN_CFG)
    (root / "infer.cfg").write_text(INFER_CFG)
    run("gen-data", "--tools", tools, "--per-tool", per_tool, "--split", "train", "--out", root / "train")
    run("gen-data", "--tools", tools, "--per-tool", 1, "--split", "test", "--out", root / "test")
    run("pretrain", "--data", root / "train", "--epochs", pretrain_epochs, "--lr", 1e-3, "--out", root / "obj.ckpt")
    run("train", "--data", root / "train", "--object", root / "obj.ckpt", "--config", root / "train.cfg",
        "--epochs", train_epochs, "--out", root / "full.ckpt")
    scene = sorted((root / "test" / "records").glob("*.rec"))[0]
    run("infer", "--model", root / "full.ckpt", "--scene", scene, "--config", root / "infer.cfg",
        "--out", root / "run")
    run("eval", "--model", root / "full.ckpt", "--data", root / "test", "--config", root / "infer.cfg",
        "--out", root / "reports" / "eval")
    run("export-mesh", "--model", root / "obj.ckpt", "--tool", tools.split(",")[0], "--resolution", 32,
        "--out", root / "mesh.obj")
    return {
        "obj.ckpt": root / "obj.ckpt",
        "full.ckpt": root / "full.ckpt",
        "report.kv": root / "run" / "report.kv",
        "report.txt": root / "run" / "report.txt",
        "report.ply": root / "run" / "report.ply",
        "eval.kv": root / "reports" / "eval.kv",
        "eval.txt": root / "reports" / "eval.txt",
        "mesh.obj": root / "mesh.obj",
    }
