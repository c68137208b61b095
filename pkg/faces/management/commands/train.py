import logging
from dataclasses import replace
from pathlib import Path

from faces.domain.exceptions import ValidationError
from faces.domain.head_model import build_procedural_rig
from faces.domain.losses import PoseMasks
from faces.integrations.datasets import FaceDataset
from faces.integrations.manifest import load_manifest
from faces.integrations.rigs import load_rig
from faces.management.base import PipelineCommand
from faces.networks.pipeline import FacePipeline
from faces.tasks.generate_synthetic import RIG_NAME
from faces.tasks.training import prepare_stage2, train_stage1, train_stage2

logger = logging.getLogger(__name__)

STAGES = ("1", "2", "both")


class Command(PipelineCommand):
    help = "Train the pipeline: stage 1 (landmarks only), stage 2 (alternating), or both."

    def add_command_arguments(self, parser):
        parser.add_argument("--manifest", required=True, help="Training manifest CSV")
        parser.add_argument(
            "--stage",
            choices=STAGES,
            default="both",
            help="Stage to run; stage 2 alone resumes from --checkpoint",
        )

    def _head_config(self, manifest_path, run_config):
        rig_path = manifest_path.parent / RIG_NAME
        if rig_path.exists():
            return load_rig(rig_path)
        logger.info("event=rig_built_from_config path=%s", manifest_path)
        return build_procedural_rig(run_config.rig)

    def run(self, run_config, out_dir, seed, options):
        manifest_path = Path(options["manifest"])
        stage = options["stage"]
        config = replace(run_config.training, seed=seed)
        records = list(load_manifest(manifest_path))
        dataset = FaceDataset(records, run_config.resolution)
        outputs = {}

        checkpoint = options["checkpoint"]
        if stage in {"1", "both"}:
            if checkpoint is not None:
                raise ValidationError("stage 1 starts from scratch; drop --checkpoint")
            pipeline = FacePipeline.build(self._head_config(manifest_path, run_config), run_config)
            result = train_stage1(
                dataset,
                pipeline,
                config,
                run_config.losses,
                checkpoint_path=out_dir / "stage1.npz",
                log_path=out_dir / "stage1_log.csv",
            )
            checkpoint = result.checkpoint
            outputs.update(stage1=result.checkpoint, stage1_log=out_dir / "stage1_log.csv")
            self.stdout.write(f"stage 1 finished: steps={config.stage1_steps}")

        if stage in {"2", "both"}:
            pose_masks = PoseMasks.load(
                run_config.pose_mask_dir, epsilon=run_config.pose_mask_epsilon
            )
            state = prepare_stage2(
                None if checkpoint is None else Path(checkpoint),
                config,
                run_config.losses,
                run_config.augmentation,
                pose_masks,
            )
            dataset = FaceDataset(records, state.pipeline.resolution)
            result = train_stage2(
                dataset,
                state,
                checkpoint_path=out_dir / "stage2.npz",
                log_path=out_dir / "stage2_log.csv",
            )
            outputs.update(stage2=result.checkpoint, stage2_log=out_dir / "stage2_log.csv")
            self.stdout.write(f"stage 2 finished: steps={state.step}")
        return outputs
