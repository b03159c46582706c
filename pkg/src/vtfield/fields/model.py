"""The combined field model: frozen object module, two tactile hypernetworks,
the contact hypernetwork and the trial-code table."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import ndiff as nd
from .contact_field import CONTACT_SPEC
from .object_field import ObjectModel, hypernet_from_blobs
from .tactile_field import POSE_DIM, SENSOR_CODE_DIM, SENSORS, TACTILE_SPEC, TRIAL_CODE_DIM

VARIANTS = ("full", "wo_acts", "wo_obj_pose")


@dataclass
class FieldModel:
    obj: ObjectModel
    H_T: dict
    H_C: nd.HyperNetParams
    trial_codes: np.ndarray
    variant: str = "full"
    shear_input: str = "pooled"
    meta: dict = field(default_factory=dict)

    @property
    def use_pose(self):
        return self.variant != "wo_obj_pose"

    @property
    def use_acts(self):
        return self.variant != "wo_acts"

    def trainable(self):
        out = {}
        for s in SENSORS:
            out.update({f"H_T_{s}.{k}": v for k, v in self.H_T[s].tensors().items()})
        out.update({f"H_C.{k}": v for k, v in self.H_C.tensors().items()})
        return out

    def freeze(self):
        for t in self.trainable().values():
            t.requires_grad = False
            t.grad = None
        return self

    def blobs(self):
        out = self.obj.blobs()
        out.update({k: v.data for k, v in self.trainable().items()})
        out["trial_code_table"] = self.trial_codes
        return out

    def manifest(self):
        man = self.obj.manifest()
        man["sections"] = ["H_O", "object_codes", "H_T_left", "H_T_right", "H_C", "trial_code_table"]
        man["fields"] = {
            "variant": self.variant,
            "shear_input": self.shear_input,
            "trunk_width": int(self.H_C.trunk_width),
            "trunk_layers": len(self.H_C.trunk_w),
            "tactile_target": list(TACTILE_SPEC.dims),
            "contact_target": list(CONTACT_SPEC.dims),
            "trial_code_dim": TRIAL_CODE_DIM,
            "n_trials": int(len(self.trial_codes)),
        }
        man["config"] = dict(self.meta)
        return man

    def save(self, path):
        return nd.write_checkpoint(path, self.manifest(), self.blobs())

    @classmethod
    def load(cls, path):
        manifest, blobs = nd.read_checkpoint(path)
        if "fields" not in manifest:
            raise nd.CheckpointError(f"{path}: not a full field-model checkpoint")
        obj = ObjectModel.from_blobs(manifest, blobs)
        f = manifest["fields"]
        tw, tl = f["trunk_width"], f["trunk_layers"]
        H_T = {s: hypernet_from_blobs(blobs, f"H_T_{s}.", POSE_DIM + SENSOR_CODE_DIM, TACTILE_SPEC, tl, tw)
               for s in SENSORS}
        H_C = hypernet_from_blobs(blobs, "H_C.", POSE_DIM + TRIAL_CODE_DIM, CONTACT_SPEC, tl, tw)
        return cls(obj, H_T, H_C, blobs["trial_code_table"], f["variant"], f["shear_input"],
                   manifest.get("config", {}))


def init_field_model(obj: ObjectModel, n_trials, rng, trunk_width=128, head_scale=0.1,
                     code_std=0.1, variant="full", shear_input="pooled"):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant '{variant}' (expected one of {VARIANTS})")
    H_T = {s: nd.init_hypernet(POSE_DIM + SENSOR_CODE_DIM, TACTILE_SPEC, rng, trunk_width=trunk_width,
                               head_scale=head_scale) for s in SENSORS}
    H_C = nd.init_hypernet(POSE_DIM + TRIAL_CODE_DIM, CONTACT_SPEC, rng, trunk_width=trunk_width,
                           head_scale=head_scale)
    codes = rng.normal(0.0, code_std, (n_trials, TRIAL_CODE_DIM)).astype(np.float32)
    return FieldModel(obj, H_T, H_C, codes, variant, shear_input)
