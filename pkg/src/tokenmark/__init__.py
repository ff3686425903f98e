"""tokenmark: green/red-list watermarking testbed for autoregressive token
streams — embedding by logit bias, detection by z-test, channel corruption
models, and radioactivity experiments with trainable student models.
"""

from ._kernels import IMPL as kernel_backend  # noqa: F401
from .core import (  # noqa: F401
    Codebook,
    GreenMask,
    ScheduleKind,
    TokenSequence,
    UnitSchedule,
    WatermarkParams,
    make_rar_schedule,
    make_var_schedule,
)
from .detect import DetectionReport, detect, tpr_at_fpr, z_statistic  # noqa: F401
from .embed import (  # noqa: F401
    LogitSource,
    SyntheticModel,
    bias_logits,
    generate_clean,
    generate_watermarked,
    sample,
    softmax,
)
from .seeding import SeedChain, hash_sentinel, hash_unit, partition  # noqa: F401

__version__ = "0.1.0"
