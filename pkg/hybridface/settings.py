import os
from pathlib import Path

from django.core.exceptions import ImproperlyConfigured

from hybridface.config import (
    env_bool,
    env_float,
    env_int,
    env_int_list,
    env_str,
    load_environment,
)

BASE_DIR = Path(__file__).resolve().parent.parent
load_environment(BASE_DIR)


DEBUG = env_bool("DEBUG", default=True)

SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "")
if not SECRET_KEY:
    if DEBUG:
        SECRET_KEY = "dev-only-secret-key"
    else:
        raise ImproperlyConfigured("DJANGO_SECRET_KEY must be set when DEBUG=False")

INSTALLED_APPS = [
    "faces",
]

DATABASES = {}

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

# Head rig
HEAD_SUBDIVISIONS = env_int("HEAD_SUBDIVISIONS", default=3)
HEAD_N_SHAPE = env_int("HEAD_N_SHAPE", default=300)
HEAD_N_EXPR = env_int("HEAD_N_EXPR", default=50)
HEAD_RIG_SEED = env_int("HEAD_RIG_SEED", default=0)

if HEAD_SUBDIVISIONS < 0 or HEAD_SUBDIVISIONS > 5:
    raise ImproperlyConfigured("HEAD_SUBDIVISIONS must be between 0 and 5")
if HEAD_N_SHAPE < 1:
    raise ImproperlyConfigured("HEAD_N_SHAPE must be >= 1")
if HEAD_N_EXPR < 1:
    raise ImproperlyConfigured("HEAD_N_EXPR must be >= 1")

# Renderer
RENDER_RESOLUTION = env_int("RENDER_RESOLUTION", default=224)
if RENDER_RESOLUTION < 16:
    raise ImproperlyConfigured("RENDER_RESOLUTION must be >= 16")

# Tokenizer and geometry encoders
TOKEN_SCALES = env_int("TOKEN_SCALES", default=4)
TOKEN_DIM = env_int("TOKEN_DIM", default=256)
TOKEN_MULTI_SCALE = env_bool("TOKEN_MULTI_SCALE", default=True)
BACKBONE_CHANNELS = env_int_list("BACKBONE_CHANNELS", default=[16, 32, 64, 128])

if TOKEN_SCALES < 1:
    raise ImproperlyConfigured("TOKEN_SCALES must be >= 1")
if TOKEN_DIM < 1:
    raise ImproperlyConfigured("TOKEN_DIM must be >= 1")
if len(BACKBONE_CHANNELS) != TOKEN_SCALES:
    raise ImproperlyConfigured("BACKBONE_CHANNELS must list one width per scale")

# Synthesizer
SYNTH_BLOCKS = env_int("SYNTH_BLOCKS", default=TOKEN_SCALES)
SYNTH_BASE_CHANNELS = env_int("SYNTH_BASE_CHANNELS", default=16)
SYNTH_ADAIN_HIDDEN = env_int("SYNTH_ADAIN_HIDDEN", default=128)
SYNTH_TOKEN_DECODER = env_bool("SYNTH_TOKEN_DECODER", default=True)
SYNTH_TOKEN_ORDER = env_str("SYNTH_TOKEN_ORDER", default="mirror")

if SYNTH_BLOCKS != TOKEN_SCALES:
    raise ImproperlyConfigured("SYNTH_BLOCKS must equal TOKEN_SCALES")
if SYNTH_BASE_CHANNELS < 1 or SYNTH_ADAIN_HIDDEN < 1:
    raise ImproperlyConfigured("synthesizer widths must be >= 1")
if SYNTH_TOKEN_ORDER not in {"mirror", "sequential"}:
    raise ImproperlyConfigured("SYNTH_TOKEN_ORDER must be mirror or sequential")
if RENDER_RESOLUTION % (2**SYNTH_BLOCKS) != 0:
    raise ImproperlyConfigured(
        "RENDER_RESOLUTION must be divisible by 2**SYNTH_BLOCKS"
    )

# Loss weights
LOSS_EC = env_float("LOSS_EC", default=1.0)
LOSS_LMK = env_float("LOSS_LMK", default=100.0)
LOSS_TC = env_float("LOSS_TC", default=5.0)
LOSS_PDL = env_float("LOSS_PDL", default=500.0)
LOSS_RG = env_float("LOSS_RG", default=10.0)
LOSS_IC = env_float("LOSS_IC", default=10.0)
LOSS_PHO = env_float("LOSS_PHO", default=1.0)
LOSS_PER = env_float("LOSS_PER", default=1.0)
LOSS_TC_SQUARED = env_bool("LOSS_TC_SQUARED", default=False)
LOSS_NORMALIZE = env_bool("LOSS_NORMALIZE", default=False)

for _name in (
    "LOSS_EC",
    "LOSS_LMK",
    "LOSS_TC",
    "LOSS_PDL",
    "LOSS_RG",
    "LOSS_IC",
    "LOSS_PHO",
    "LOSS_PER",
):
    if globals()[_name] < 0:
        raise ImproperlyConfigured(f"{_name} must be >= 0")

POSE_MASK_EPSILON = env_float("POSE_MASK_EPSILON", default=0.05)
POSE_MASK_DIR = env_str(
    "POSE_MASK_DIR", default=str(BASE_DIR / "faces" / "data" / "landmark_masks")
)
REGION_MASK_DILATION_PX = env_int("REGION_MASK_DILATION_PX", default=2)

if POSE_MASK_EPSILON <= 0:
    raise ImproperlyConfigured("POSE_MASK_EPSILON must be > 0")
if REGION_MASK_DILATION_PX < 0:
    raise ImproperlyConfigured("REGION_MASK_DILATION_PX must be >= 0")

# Training
TRAIN_LR = env_float("TRAIN_LR", default=0.001)
TRAIN_BETA1 = env_float("TRAIN_BETA1", default=0.9)
TRAIN_BETA2 = env_float("TRAIN_BETA2", default=0.999)
TRAIN_BATCH_SIZE = env_int("TRAIN_BATCH_SIZE", default=16)
TRAIN_STAGE1_STEPS = env_int("TRAIN_STAGE1_STEPS", default=2000)
TRAIN_STAGE2_STEPS = env_int("TRAIN_STAGE2_STEPS", default=5000)
TRAIN_SEED = env_int("TRAIN_SEED", default=0)
TRAIN_AUGMENTATIONS = env_int("TRAIN_AUGMENTATIONS", default=2)
TRAIN_GRAD_CLIP = env_float("TRAIN_GRAD_CLIP", default=1.0)
TRAIN_NUM_WORKERS = env_int("TRAIN_NUM_WORKERS", default=0)
TRAIN_LOG_EVERY = env_int("TRAIN_LOG_EVERY", default=10)

if TRAIN_LR <= 0:
    raise ImproperlyConfigured("TRAIN_LR must be > 0")
if not (0 <= TRAIN_BETA1 < 1 and 0 <= TRAIN_BETA2 < 1):
    raise ImproperlyConfigured("TRAIN_BETA1 and TRAIN_BETA2 must be in [0, 1)")
if TRAIN_BATCH_SIZE < 1:
    raise ImproperlyConfigured("TRAIN_BATCH_SIZE must be >= 1")
if TRAIN_STAGE1_STEPS < 0 or TRAIN_STAGE2_STEPS < 0:
    raise ImproperlyConfigured("stage lengths must be >= 0")
if TRAIN_AUGMENTATIONS < 1:
    raise ImproperlyConfigured("TRAIN_AUGMENTATIONS must be >= 1")
if TRAIN_GRAD_CLIP <= 0:
    raise ImproperlyConfigured("TRAIN_GRAD_CLIP must be > 0")
if TRAIN_NUM_WORKERS < 0:
    raise ImproperlyConfigured("TRAIN_NUM_WORKERS must be >= 0")
if TRAIN_LOG_EVERY < 1:
    raise ImproperlyConfigured("TRAIN_LOG_EVERY must be >= 1")

# Expression augmentation
AUG_JITTER_PROB = env_float("AUG_JITTER_PROB", default=0.7)
AUG_JITTER_FRACTION = env_float("AUG_JITTER_FRACTION", default=0.3)
AUG_JITTER_SCALE = env_float("AUG_JITTER_SCALE", default=0.5)
AUG_JAW_PROB = env_float("AUG_JAW_PROB", default=0.5)
AUG_JAW_RANGE = env_float("AUG_JAW_RANGE", default=0.15)
AUG_ZERO_PROB = env_float("AUG_ZERO_PROB", default=0.1)
AUG_SWAP_PROB = env_float("AUG_SWAP_PROB", default=0.1)
AUG_EXPR_BOUND = env_float("AUG_EXPR_BOUND", default=3.0)
AUG_JAW_BOUND = env_float("AUG_JAW_BOUND", default=0.5)

for _name in ("AUG_JITTER_PROB", "AUG_JITTER_FRACTION", "AUG_JAW_PROB"):
    if not 0 <= globals()[_name] <= 1:
        raise ImproperlyConfigured(f"{_name} must be in [0, 1]")
for _name in ("AUG_ZERO_PROB", "AUG_SWAP_PROB"):
    if not 0 <= globals()[_name] <= 1:
        raise ImproperlyConfigured(f"{_name} must be in [0, 1]")
if AUG_JITTER_SCALE < 0 or AUG_JAW_RANGE < 0:
    raise ImproperlyConfigured("augmentation scales must be >= 0")
if AUG_EXPR_BOUND <= 0 or AUG_JAW_BOUND <= 0:
    raise ImproperlyConfigured("augmentation bounds must be > 0")

# Synthetic data
SYNTH_DATA_COUNT = env_int("SYNTH_DATA_COUNT", default=500)
SYNTH_DATA_IDENTITIES = env_int("SYNTH_DATA_IDENTITIES", default=10)
SYNTH_DATA_SEED = env_int("SYNTH_DATA_SEED", default=0)
SYNTH_DATA_SHAPE_STD = env_float("SYNTH_DATA_SHAPE_STD", default=1.0)
SYNTH_DATA_EXPR_STD = env_float("SYNTH_DATA_EXPR_STD", default=1.0)
SYNTH_DATA_JAW_MAX = env_float("SYNTH_DATA_JAW_MAX", default=0.3)
SYNTH_DATA_YAW_MAX = env_float("SYNTH_DATA_YAW_MAX", default=0.5)
SYNTH_DATA_PITCH_MAX = env_float("SYNTH_DATA_PITCH_MAX", default=0.2)
SYNTH_DATA_SCALE_MIN = env_float("SYNTH_DATA_SCALE_MIN", default=0.65)
SYNTH_DATA_SCALE_MAX = env_float("SYNTH_DATA_SCALE_MAX", default=0.8)
SYNTH_DATA_SHIFT_MAX = env_float("SYNTH_DATA_SHIFT_MAX", default=0.08)
SYNTH_DATA_LIGHT_STD = env_float("SYNTH_DATA_LIGHT_STD", default=0.3)

if SYNTH_DATA_COUNT < 1:
    raise ImproperlyConfigured("SYNTH_DATA_COUNT must be >= 1")
if SYNTH_DATA_IDENTITIES < 1:
    raise ImproperlyConfigured("SYNTH_DATA_IDENTITIES must be >= 1")
if not 0 < SYNTH_DATA_SCALE_MIN <= SYNTH_DATA_SCALE_MAX:
    raise ImproperlyConfigured(
        "SYNTH_DATA_SCALE_MIN must be > 0 and <= SYNTH_DATA_SCALE_MAX"
    )

# Evaluation
METRIC_DISTANCE = env_str("METRIC_DISTANCE", default="l1")
if METRIC_DISTANCE not in {"l1", "l2"}:
    raise ImproperlyConfigured("METRIC_DISTANCE must be l1 or l2")

LOG_LEVEL = os.getenv("FACES_LOG_LEVEL", "INFO").upper()
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "structured": {
            "format": (
                '{"ts":"%(asctime)s","level":"%(levelname)s",'
                '"logger":"%(name)s","message":"%(message)s"}'
            ),
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "structured",
        },
    },
    "loggers": {
        "faces": {
            "handlers": ["console"],
            "level": LOG_LEVEL,
            "propagate": False,
        },
    },
}
