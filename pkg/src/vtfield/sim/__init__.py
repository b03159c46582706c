"""Analytic desk-scale simulator of grasped-tool presses against a table."""
from . import frames
from .scene import (DELTA_PEN, GRASP_HEIGHT, InconsistentSceneError, PressResult, Scene, ToolAsset,
                    UnreachableSceneError, get_tool, label_contacts, resolve_press, sample_interaction)
from .tactile import (GRID, KAPPA_T, SENSORS, EmptyTactileError, SensorGrid, augment_shear,
                      normalize_shear, sensor_frame, synthesize_shear, tactile_cloud)
from .render import camera_centers, finger_meshes, render_partial_cloud
from .dataset import (DataError, InteractionRecord, decode_record, encode_record, generate_dataset,
                      generate_record, load_dataset, read_manifest, read_record, simulate_record,
                      write_record)
