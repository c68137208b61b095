"""Run configuration: settings defaults overlaid with an optional key-value file.

The file uses the ``.env`` syntax (``KEY=value`` lines) and the same key
names as the environment variables read by ``hybridface.settings``.
"""

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from faces.domain.exceptions import ConfigurationError, DataIOError, ValidationError
from faces.domain.head_model import RigSpec
from faces.domain.losses import LossWeights
from faces.networks.encoders import GeometryEncoderConfig, TokenizerConfig
from faces.networks.synthesizer import SynthesizerConfig
from faces.tasks.augmentation import AugmentationSpec
from faces.tasks.generate_synthetic import SyntheticSceneSpec
from faces.tasks.training import TrainConfig
from hybridface.config import (
    env_bool,
    env_float,
    env_int,
    env_int_list,
    env_str,
    load_config_file,
)

INT_KEYS = (
    "HEAD_SUBDIVISIONS",
    "HEAD_N_SHAPE",
    "HEAD_N_EXPR",
    "HEAD_RIG_SEED",
    "RENDER_RESOLUTION",
    "TOKEN_SCALES",
    "TOKEN_DIM",
    "SYNTH_BLOCKS",
    "SYNTH_BASE_CHANNELS",
    "SYNTH_ADAIN_HIDDEN",
    "REGION_MASK_DILATION_PX",
    "TRAIN_BATCH_SIZE",
    "TRAIN_STAGE1_STEPS",
    "TRAIN_STAGE2_STEPS",
    "TRAIN_SEED",
    "TRAIN_AUGMENTATIONS",
    "TRAIN_NUM_WORKERS",
    "TRAIN_LOG_EVERY",
    "SYNTH_DATA_COUNT",
    "SYNTH_DATA_IDENTITIES",
    "SYNTH_DATA_SEED",
)
FLOAT_KEYS = (
    "LOSS_EC",
    "LOSS_LMK",
    "LOSS_TC",
    "LOSS_PDL",
    "LOSS_RG",
    "LOSS_IC",
    "LOSS_PHO",
    "LOSS_PER",
    "POSE_MASK_EPSILON",
    "TRAIN_LR",
    "TRAIN_BETA1",
    "TRAIN_BETA2",
    "TRAIN_GRAD_CLIP",
    "AUG_JITTER_PROB",
    "AUG_JITTER_FRACTION",
    "AUG_JITTER_SCALE",
    "AUG_JAW_PROB",
    "AUG_JAW_RANGE",
    "AUG_ZERO_PROB",
    "AUG_SWAP_PROB",
    "AUG_EXPR_BOUND",
    "AUG_JAW_BOUND",
    "SYNTH_DATA_SHAPE_STD",
    "SYNTH_DATA_EXPR_STD",
    "SYNTH_DATA_JAW_MAX",
    "SYNTH_DATA_YAW_MAX",
    "SYNTH_DATA_PITCH_MAX",
    "SYNTH_DATA_SCALE_MIN",
    "SYNTH_DATA_SCALE_MAX",
    "SYNTH_DATA_SHIFT_MAX",
    "SYNTH_DATA_LIGHT_STD",
)
BOOL_KEYS = (
    "TOKEN_MULTI_SCALE",
    "SYNTH_TOKEN_DECODER",
    "LOSS_TC_SQUARED",
    "LOSS_NORMALIZE",
)
STR_KEYS = ("SYNTH_TOKEN_ORDER", "POSE_MASK_DIR", "METRIC_DISTANCE")
LIST_KEYS = ("BACKBONE_CHANNELS",)
KNOWN_KEYS = frozenset(INT_KEYS + FLOAT_KEYS + BOOL_KEYS + STR_KEYS + LIST_KEYS)


@dataclass(frozen=True)
class RunConfig:
    rig: RigSpec
    resolution: int
    tokenizer: TokenizerConfig
    geometry: GeometryEncoderConfig
    synthesizer: SynthesizerConfig
    losses: LossWeights
    training: TrainConfig
    augmentation: AugmentationSpec
    synthetic: SyntheticSceneSpec
    pose_mask_epsilon: float
    pose_mask_dir: str
    metric_distance: str

    def digest(self):
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _read_values(values):
    readers = {}
    for name in INT_KEYS:
        readers[name] = env_int(name, getattr(settings, name), source=values)
    for name in FLOAT_KEYS:
        readers[name] = env_float(name, getattr(settings, name), source=values)
    for name in BOOL_KEYS:
        readers[name] = env_bool(name, getattr(settings, name), source=values)
    for name in STR_KEYS:
        readers[name] = env_str(name, getattr(settings, name), source=values)
    for name in LIST_KEYS:
        readers[name] = env_int_list(name, getattr(settings, name), source=values)
    return readers


def build_run_config(path=None, *, overrides=None):
    values = {}
    if path is not None and not Path(path).exists():
        raise DataIOError(f"config file {path} does not exist")
    try:
        if path is not None:
            values.update(load_config_file(path))
        values.update({key: str(value) for key, value in (overrides or {}).items()})
        unknown = sorted(set(values) - KNOWN_KEYS)
        if unknown:
            raise ValidationError(f"unknown configuration keys: {', '.join(unknown)}")
        resolved = _read_values(values)
    except ImproperlyConfigured as exc:
        raise ValidationError(str(exc)) from exc

    if resolved["METRIC_DISTANCE"] not in {"l1", "l2"}:
        raise ValidationError("METRIC_DISTANCE must be l1 or l2")
    if resolved["SYNTH_BLOCKS"] != resolved["TOKEN_SCALES"]:
        raise ValidationError("SYNTH_BLOCKS must equal TOKEN_SCALES")

    resolution = resolved["RENDER_RESOLUTION"]
    channels = tuple(resolved["BACKBONE_CHANNELS"])
    try:
        return RunConfig(
            rig=RigSpec(
                subdivisions=resolved["HEAD_SUBDIVISIONS"],
                n_shape=resolved["HEAD_N_SHAPE"],
                n_expr=resolved["HEAD_N_EXPR"],
                seed=resolved["HEAD_RIG_SEED"],
            ),
            resolution=resolution,
            tokenizer=TokenizerConfig(
                n_scales=resolved["TOKEN_SCALES"],
                token_dim=resolved["TOKEN_DIM"],
                channels=channels,
                resolution=resolution,
                multi_scale=resolved["TOKEN_MULTI_SCALE"],
            ),
            geometry=GeometryEncoderConfig(
                n_shape=resolved["HEAD_N_SHAPE"],
                n_expr=resolved["HEAD_N_EXPR"],
                channels=channels,
                resolution=resolution,
            ),
            synthesizer=SynthesizerConfig(
                n_blocks=resolved["SYNTH_BLOCKS"],
                base_channels=resolved["SYNTH_BASE_CHANNELS"],
                adain_hidden=resolved["SYNTH_ADAIN_HIDDEN"],
                token_dim=resolved["TOKEN_DIM"],
                use_token_decoder=resolved["SYNTH_TOKEN_DECODER"],
                token_order=resolved["SYNTH_TOKEN_ORDER"],
                resolution=resolution,
            ),
            losses=LossWeights(
                ec=resolved["LOSS_EC"],
                lmk=resolved["LOSS_LMK"],
                tc=resolved["LOSS_TC"],
                pdl=resolved["LOSS_PDL"],
                rg=resolved["LOSS_RG"],
                ic=resolved["LOSS_IC"],
                pho=resolved["LOSS_PHO"],
                per=resolved["LOSS_PER"],
            ),
            training=TrainConfig(
                lr=resolved["TRAIN_LR"],
                beta1=resolved["TRAIN_BETA1"],
                beta2=resolved["TRAIN_BETA2"],
                batch_size=resolved["TRAIN_BATCH_SIZE"],
                stage1_steps=resolved["TRAIN_STAGE1_STEPS"],
                stage2_steps=resolved["TRAIN_STAGE2_STEPS"],
                seed=resolved["TRAIN_SEED"],
                n_augmentations=resolved["TRAIN_AUGMENTATIONS"],
                grad_clip=resolved["TRAIN_GRAD_CLIP"],
                num_workers=resolved["TRAIN_NUM_WORKERS"],
                log_every=resolved["TRAIN_LOG_EVERY"],
                tc_squared=resolved["LOSS_TC_SQUARED"],
                normalize_losses=resolved["LOSS_NORMALIZE"],
                region_dilation_px=resolved["REGION_MASK_DILATION_PX"],
            ),
            augmentation=AugmentationSpec(
                jitter_prob=resolved["AUG_JITTER_PROB"],
                jitter_fraction=resolved["AUG_JITTER_FRACTION"],
                jitter_scale=resolved["AUG_JITTER_SCALE"],
                jaw_prob=resolved["AUG_JAW_PROB"],
                jaw_range=resolved["AUG_JAW_RANGE"],
                zero_prob=resolved["AUG_ZERO_PROB"],
                swap_prob=resolved["AUG_SWAP_PROB"],
                expr_bound=resolved["AUG_EXPR_BOUND"],
                jaw_bound=resolved["AUG_JAW_BOUND"],
            ),
            synthetic=SyntheticSceneSpec(
                count=resolved["SYNTH_DATA_COUNT"],
                n_identities=resolved["SYNTH_DATA_IDENTITIES"],
                resolution=resolution,
                seed=resolved["SYNTH_DATA_SEED"],
                shape_std=resolved["SYNTH_DATA_SHAPE_STD"],
                expr_std=resolved["SYNTH_DATA_EXPR_STD"],
                jaw_max=resolved["SYNTH_DATA_JAW_MAX"],
                yaw_max=resolved["SYNTH_DATA_YAW_MAX"],
                pitch_max=resolved["SYNTH_DATA_PITCH_MAX"],
                scale_min=resolved["SYNTH_DATA_SCALE_MIN"],
                scale_max=resolved["SYNTH_DATA_SCALE_MAX"],
                shift_max=resolved["SYNTH_DATA_SHIFT_MAX"],
                light_std=resolved["SYNTH_DATA_LIGHT_STD"],
            ),
            pose_mask_epsilon=resolved["POSE_MASK_EPSILON"],
            pose_mask_dir=resolved["POSE_MASK_DIR"],
            metric_distance=resolved["METRIC_DISTANCE"],
        )
    except ConfigurationError as exc:
        raise ValidationError(str(exc)) from exc
