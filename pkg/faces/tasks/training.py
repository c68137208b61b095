"""Two-stage training.

Stage 1 fits the geometry encoders to detected landmarks only. Stage 2
alternates, within every iteration, an encoder sub-step (expression encoder
and tokenizer; synthesizer frozen) and a synthesizer sub-step (all encoders
frozen). Shape and pose encoders stay frozen throughout stage 2.
"""

import logging
from dataclasses import dataclass, field

import torch
from django.conf import settings

from faces.domain.exceptions import TrainingStateError, ValidationError
from faces.domain.losses import (
    REQUIRED_TERMS,
    expression_consistency_loss,
    image_loss,
    landmark_loss,
    pdl_loss,
    region_loss,
    token_consistency_loss,
    total_loss,
)
from faces.domain.region_masks import build_region_masks
from faces.integrations.checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from faces.integrations.datasets import cycle_batches, make_loader
from faces.integrations.reports import write_csv
from faces.networks.common import set_requires_grad
from faces.tasks.augmentation import augment_expression

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "phase", *REQUIRED_TERMS, "total")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 16
    stage1_steps: int = 2000
    stage2_steps: int = 5000
    seed: int = 0
    n_augmentations: int = 2
    grad_clip: float = 1.0
    num_workers: int = 0
    log_every: int = 10
    tc_squared: bool = False
    normalize_losses: bool = False
    region_dilation_px: int = 2

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        if self.stage1_steps < 0 or self.stage2_steps < 0:
            raise ValidationError("stage lengths must be >= 0")
        if self.n_augmentations < 1:
            raise ValidationError("at least one expression augmentation is required")
        if not self.grad_clip > 0:
            raise ValidationError("grad_clip must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("Adam betas must be in [0, 1)")

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "lr": settings.TRAIN_LR,
            "beta1": settings.TRAIN_BETA1,
            "beta2": settings.TRAIN_BETA2,
            "batch_size": settings.TRAIN_BATCH_SIZE,
            "stage1_steps": settings.TRAIN_STAGE1_STEPS,
            "stage2_steps": settings.TRAIN_STAGE2_STEPS,
            "seed": settings.TRAIN_SEED,
            "n_augmentations": settings.TRAIN_AUGMENTATIONS,
            "grad_clip": settings.TRAIN_GRAD_CLIP,
            "num_workers": settings.TRAIN_NUM_WORKERS,
            "log_every": settings.TRAIN_LOG_EVERY,
            "tc_squared": settings.LOSS_TC_SQUARED,
            "normalize_losses": settings.LOSS_NORMALIZE,
            "region_dilation_px": settings.REGION_MASK_DILATION_PX,
        }
        values.update(overrides)
        return cls(**values)

    def adam(self, parameters):
        return torch.optim.Adam(parameters, lr=self.lr, betas=(self.beta1, self.beta2))


@dataclass(frozen=True)
class StageResult:
    checkpoint: object
    history: tuple


@dataclass
class Stage2State:
    pipeline: object
    config: TrainConfig
    weights: object
    augmentation: object
    pose_masks: object
    encoder_optimizer: torch.optim.Optimizer
    synthesizer_optimizer: torch.optim.Optimizer
    generator: torch.Generator
    initialized_from: object = None
    step: int = 0
    history: list = field(default_factory=list)


def _log_row(step, phase, report):
    return {"step": step, "phase": phase, **report.as_row()}


def _zero_terms(reference):
    return {name: torch.zeros((), dtype=reference.dtype) for name in REQUIRED_TERMS}


def train_stage1(dataset, pipeline, config, weights, *, checkpoint_path=None, log_path=None):
    if len(dataset) == 0:
        raise ValidationError("stage 1 needs a non-empty dataset")

    encoders = pipeline.encoders
    set_requires_grad([pipeline.tokenizer, pipeline.synthesizer], False)
    set_requires_grad([encoders], True)
    pipeline.train()
    optimizer = config.adam(encoders.parameters())
    batches = cycle_batches(
        make_loader(
            dataset,
            batch_size=config.batch_size,
            seed=config.seed,
            num_workers=config.num_workers,
        )
    )

    history = []
    for step in range(1, config.stage1_steps + 1):
        batch = next(batches)
        params = encoders(batch["image"])
        lmk = landmark_loss(batch["landmarks"], pipeline.project_landmarks(params))
        report = total_loss({**_zero_terms(lmk), "lmk": lmk}, weights)

        optimizer.zero_grad()
        report.total.backward()
        torch.nn.utils.clip_grad_norm_(encoders.parameters(), config.grad_clip)
        optimizer.step()

        history.append(_log_row(step, "stage1", report))
        if step % config.log_every == 0 or step == config.stage1_steps:
            logger.info(
                "event=stage1_step step=%s lmk=%.6f total=%.6f",
                step,
                float(lmk.detach()),
                float(report.total.detach()),
            )

    pipeline.eval()
    if log_path is not None:
        write_csv(log_path, history, LOG_COLUMNS)
    checkpoint = None
    if checkpoint_path is not None:
        checkpoint = save_checkpoint(
            checkpoint_path, pipeline, stage=1, step=config.stage1_steps, history=history
        )
    return StageResult(checkpoint=checkpoint, history=tuple(history))


def prepare_stage2(checkpoint, config, weights, augmentation, pose_masks):
    """Build the stage-2 state from a stage-1 (or later) checkpoint."""
    if checkpoint is None:
        raise TrainingStateError("stage 2 needs a stage-1 checkpoint")
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    if checkpoint.stage < 1:
        raise TrainingStateError("checkpoint has not completed stage 1")

    pipeline = checkpoint.pipeline
    encoders = pipeline.encoders
    set_requires_grad([encoders.shape, encoders.pose], False)
    encoder_parameters = [
        *encoders.expression.parameters(),
        *pipeline.tokenizer.parameters(),
    ]
    return Stage2State(
        pipeline=pipeline,
        config=config,
        weights=weights,
        augmentation=augmentation,
        pose_masks=pose_masks,
        encoder_optimizer=config.adam(encoder_parameters),
        synthesizer_optimizer=config.adam(pipeline.synthesizer.parameters()),
        generator=torch.Generator().manual_seed(config.seed),
        initialized_from=checkpoint,
        step=checkpoint.step if checkpoint.stage >= 2 else 0,
    )


def _stage2_terms(batch, state, params, token):
    pipeline = state.pipeline
    config = state.config
    images = batch["image"]
    landmarks = batch["landmarks"]

    projected = pipeline.project_landmarks(params)
    bundle = pipeline.render(params, images)
    output = pipeline.synthesize(bundle, token)
    masks = build_region_masks(
        landmarks, pipeline.resolution, radius_px=config.region_dilation_px
    )

    augmented = [
        augment_expression(params, state.augmentation, state.generator)
        for _ in range(config.n_augmentations)
    ]
    views = pipeline.augmented_views(images, augmented, token)
    return {
        "ec": expression_consistency_loss(
            views, pipeline.encoders.encode_expression, squared=config.tc_squared
        ),
        "lmk": landmark_loss(landmarks, projected),
        "tc": token_consistency_loss(
            token, views, pipeline.tokenizer, squared=config.tc_squared
        ),
        "pdl": pdl_loss(
            landmarks,
            projected,
            pipeline.yaw(params),
            state.pose_masks,
            normalize=config.normalize_losses,
        ),
        "rg": region_loss(images, output, masks, normalize=config.normalize_losses),
        "ic": image_loss(images, output, state.weights),
    }


def _apply(report, optimizer, modules, grad_clip):
    optimizer.zero_grad()
    report.total.backward()
    torch.nn.utils.clip_grad_norm_(
        [p for module in modules for p in module.parameters() if p.requires_grad],
        grad_clip,
    )
    optimizer.step()


def _require_stage1(state):
    if state.initialized_from is None:
        raise TrainingStateError("stage 2 step without a loaded stage-1 checkpoint")


def encoder_substep(batch, state):
    """Update the expression encoder and tokenizer with the synthesizer frozen."""
    _require_stage1(state)
    pipeline = state.pipeline
    set_requires_grad([pipeline.synthesizer], False)
    set_requires_grad([pipeline.encoders.expression, pipeline.tokenizer], True)

    params = pipeline.encoders(batch["image"])
    token = pipeline.tokenizer(batch["image"])
    report = total_loss(_stage2_terms(batch, state, params, token), state.weights)
    _apply(
        report,
        state.encoder_optimizer,
        [pipeline.encoders.expression, pipeline.tokenizer],
        state.config.grad_clip,
    )
    return report


def synthesizer_substep(batch, state):
    """Update the synthesizer with every encoder frozen."""
    _require_stage1(state)
    pipeline = state.pipeline
    set_requires_grad([pipeline.encoders, pipeline.tokenizer], False)
    set_requires_grad([pipeline.synthesizer], True)

    with torch.no_grad():
        params = pipeline.encoders(batch["image"])
        token = pipeline.tokenizer(batch["image"])
    report = total_loss(_stage2_terms(batch, state, params, token), state.weights)
    _apply(
        report,
        state.synthesizer_optimizer,
        [pipeline.synthesizer],
        state.config.grad_clip,
    )
    return report


def train_stage2_step(batch, state):
    state.pipeline.train()
    encoder_report = encoder_substep(batch, state)
    synthesizer_report = synthesizer_substep(batch, state)
    state.step += 1
    state.history.append(_log_row(state.step, "encoders", encoder_report))
    state.history.append(_log_row(state.step, "synthesizer", synthesizer_report))
    if state.step % state.config.log_every == 0:
        logger.info(
            "event=stage2_step step=%s encoder_total=%.6f synthesizer_total=%.6f",
            state.step,
            float(encoder_report.total.detach()),
            float(synthesizer_report.total.detach()),
        )
    return state


def train_stage2(dataset, state, *, checkpoint_path=None, log_path=None):
    if len(dataset) == 0:
        raise ValidationError("stage 2 needs a non-empty dataset")
    _require_stage1(state)
    config = state.config
    batches = cycle_batches(
        make_loader(
            dataset,
            batch_size=config.batch_size,
            seed=config.seed + 1,
            num_workers=config.num_workers,
        )
    )
    for _ in range(config.stage2_steps):
        train_stage2_step(next(batches), state)

    state.pipeline.eval()
    set_requires_grad([state.pipeline], False)
    if log_path is not None:
        write_csv(log_path, state.history, LOG_COLUMNS)
    checkpoint = None
    if checkpoint_path is not None:
        history = [*state.initialized_from.history, *state.history]
        checkpoint = save_checkpoint(
            checkpoint_path, state.pipeline, stage=2, step=state.step, history=history
        )
    return StageResult(checkpoint=checkpoint, history=tuple(state.history))
