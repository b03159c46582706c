"""Object, tactile and contact fields."""
from .object_field import (CODE_DIM, OBJECT_SPEC, DegenerateNormalError, ObjectModel, PretrainConfig,
                           ReconstructionError, TrainingError, object_forward, pretrain_object,
                           reconstruct_mesh, surface_normal, tool_query_sets)
from .tactile_field import (SENSOR_CODE_DIM, SENSORS, TACTILE_SPEC, TRIAL_CODE_DIM, sensor_slice,
                            shear_loss, tactile_forward)
from .contact_field import (CONTACT_IN, CONTACT_SPEC, assemble_input, contact_forward, contact_logits,
                            contact_loss, contact_loss_from_logits, pooled_shear)
from .model import VARIANTS, FieldModel, init_field_model
