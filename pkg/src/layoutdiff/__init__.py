"""Joint discrete-continuous diffusion engine for 2-D graphic layouts.

Boxes diffuse through a Gaussian chain, classes through a synchronized
absorbing-state chain; a transformer denoiser reverses both jointly and can
be conditioned on any subset of component classes, positions, and sizes.
"""

__version__ = "0.1.0"

from .core import (
    BBox,
    ClassLabel,
    Component,
    ConditionSpec,
    DatasetSchema,
    Layout,
    LayoutError,
    from_signal,
    normalize,
    read_jsonl,
    to_signal,
    write_jsonl,
)
from .schedule import DiffusionSchedule, build_cosine_schedule, discrete_step_of

__all__ = [
    "BBox",
    "ClassLabel",
    "Component",
    "ConditionSpec",
    "DatasetSchema",
    "DiffusionSchedule",
    "Layout",
    "LayoutError",
    "build_cosine_schedule",
    "discrete_step_of",
    "from_signal",
    "normalize",
    "read_jsonl",
    "to_signal",
    "write_jsonl",
    "__version__",
]
