"""Shared plumbing for the pipeline management commands.

Every command accepts ``--config``, ``--seed``, ``--checkpoint`` and ``--out``,
maps domain errors to exit codes and records a run manifest under ``--out``.
"""

import logging
from pathlib import Path

import torch
from django.core.management.base import BaseCommand, CommandError

from faces.conf import build_run_config
from faces.domain.exceptions import (
    CheckpointError,
    ConfigurationError,
    DataIOError,
    TrainingStateError,
    ValidationError,
)
from faces.integrations.checkpoints import load_checkpoint
from faces.integrations.reports import write_json

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_CHECKPOINT = 4
RUN_MANIFEST = "run.json"

ERROR_CODES = (
    (ValidationError, EXIT_VALIDATION),
    (ConfigurationError, EXIT_VALIDATION),
    (DataIOError, EXIT_IO),
    (CheckpointError, EXIT_CHECKPOINT),
    (TrainingStateError, EXIT_CHECKPOINT),
)


class PipelineCommand(BaseCommand):
    requires_system_checks = []
    requires_checkpoint = False

    def add_arguments(self, parser):
        parser.add_argument("--config", default=None, help="KEY=value configuration file")
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Random seed (defaults to TRAIN_SEED from the configuration)",
        )
        parser.add_argument(
            "--checkpoint",
            default=None,
            help="Checkpoint archive"
            + (" (required)" if self.requires_checkpoint else " (optional)"),
        )
        parser.add_argument("--out", required=True, help="Output directory")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, run_config, out_dir, seed, options):
        """Do the command's work and return ``{name: path}`` of the written outputs."""
        raise NotImplementedError

    def load_pipeline(self, options):
        if options["checkpoint"] is None:
            raise ValidationError(f"{self.command_name} needs --checkpoint")
        return load_checkpoint(Path(options["checkpoint"]))

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def handle(self, *args, **options):
        try:
            run_config = build_run_config(options["config"])
            seed = run_config.training.seed if options["seed"] is None else options["seed"]
            torch.manual_seed(seed)
            out_dir = Path(options["out"])
            out_dir.mkdir(parents=True, exist_ok=True)
            outputs = self.run(run_config, out_dir, seed, options)
        except OSError as exc:
            raise CommandError(str(exc), returncode=EXIT_IO) from exc
        except tuple(error for error, _ in ERROR_CODES) as exc:
            code = next(code for error, code in ERROR_CODES if isinstance(exc, error))
            logger.error("event=command_failed command=%s exit=%s", self.command_name, code)
            raise CommandError(str(exc), returncode=code) from exc

        manifest_path = write_json(
            out_dir / RUN_MANIFEST,
            {
                "command": self.command_name,
                "seed": seed,
                "config_hash": run_config.digest(),
                "config_file": options["config"],
                "checkpoint": options["checkpoint"],
                "outputs": {
                    name: str(Path(path).relative_to(out_dir))
                    for name, path in sorted(outputs.items())
                },
            },
        )
        logger.info(
            "event=command_finished command=%s outputs=%s", self.command_name, len(outputs)
        )
        self.stdout.write(
            self.style.SUCCESS(
                f"{self.command_name} completed: outputs={len(outputs)} manifest={manifest_path}"
            )
        )
