from .losses import (DistillHead, PixelHead, batch_initial_states, distill_loss,
                     flatten_pixels, half_noise_time, pixel_aux_loss,
                     teacher_features, total_loss)
from .model import (BatchedCondition, Denoiser, DenoiserOutput, DiTBlock,
                    PlannerConfig, PlannerError, SceneEncoder, SceneFeatures,
                    drop_route_mask, stack_conditions)
from .plan import plan
from .train import (PlannerBundle, PlannerTrainConfig, freeze, state_checksum,
                    train_planner)

__all__ = [
    "BatchedCondition", "Denoiser", "DenoiserOutput", "DiTBlock", "DistillHead",
    "PixelHead", "PlannerBundle", "PlannerConfig", "PlannerError",
    "PlannerTrainConfig", "SceneEncoder", "SceneFeatures", "batch_initial_states",
    "distill_loss", "drop_route_mask", "flatten_pixels", "freeze",
    "half_noise_time", "pixel_aux_loss", "plan", "stack_conditions",
    "state_checksum", "teacher_features", "total_loss", "train_planner",
]
