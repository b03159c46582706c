"""Desk-scale benchmark artifacts, built once and cached on disk.

Used by the experiment scripts and the acceptance tests. Every stage is
seeded, so a cache directory can be deleted and rebuilt bit-for-bit.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .fields.model import FieldModel
from .fields.object_field import ObjectModel, PretrainConfig, pretrain_object, tool_query_sets
from .geom.mesh import TOOL_KINDS
from .sim.dataset import generate_dataset, load_dataset
from .trainer import TrainingConfig, train_joint

TRAIN_PER_TOOL = 30
TEST_PER_TOOL = 5
TRAIN_SEED = 0
TEST_SEED = 1


@dataclass
class DeskSetup:
    root: Path
    tools: tuple = TOOL_KINDS
    train_per_tool: int = TRAIN_PER_TOOL
    test_per_tool: int = TEST_PER_TOOL
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig.desk)

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def train_dir(self):
        return self.root / f"train_{self.train_per_tool}"

    @property
    def test_dir(self):
        return self.root / f"test_{self.test_per_tool}"

    @property
    def object_path(self):
        return self.root / f"object_e{self.pretrain.epochs}.ckpt"

    def field_path(self, variant):
        t = self.training
        return self.root / f"field_{variant}_n{self.train_per_tool}_e{t.epochs}_w{t.trunk_width}.ckpt"


def _timed(log, what, fn, record=None):
    """Run ``fn``; with ``record`` the wall-clock is also written to ``record``."""
    t0 = time.perf_counter()
    out = fn()
    elapsed = time.perf_counter() - t0
    if log:
        log(f"{what}: {elapsed:.1f} s")
    if record is not None:
        Path(record).parent.mkdir(parents=True, exist_ok=True)
        Path(record).write_text(f"{elapsed:.3f}\n")
    return out


def build_seconds(path):
    """Recorded build time of a cached artifact, or None if unknown."""
    p = Path(str(path) + ".seconds")
    return float(p.read_text()) if p.exists() else None


def dataset(setup: DeskSetup, split, log=None):
    path = setup.train_dir if split == "train" else setup.test_dir
    if not (path / "manifest.txt").exists():
        n = setup.train_per_tool if split == "train" else setup.test_per_tool
        seed = TRAIN_SEED if split == "train" else TEST_SEED
        _timed(log, f"generate {split}", lambda: generate_dataset(setup.tools, n, split, seed, path),
               str(path) + ".seconds")
    return load_dataset(path)[1]


def object_model(setup: DeskSetup, log=None):
    if not setup.object_path.exists():
        qsets = tool_query_sets(setup.tools, setup.pretrain.seed)
        model = _timed(log, "pretrain", lambda: pretrain_object(qsets, setup.pretrain, log=log),
                       str(setup.object_path) + ".seconds")
        setup.root.mkdir(parents=True, exist_ok=True)
        model.save(setup.object_path)
    return ObjectModel.load(setup.object_path)


def field_model(setup: DeskSetup, variant="full", log=None):
    path = setup.field_path(variant)
    if not path.exists():
        records = dataset(setup, "train", log)
        obj = object_model(setup, log)
        config = replace(setup.training, variant=variant)
        model, _ = _timed(log, f"train {variant}", lambda: train_joint(records, obj, config, log=log),
                          str(path) + ".seconds")
        model.save(path)
    return FieldModel.load(path)
