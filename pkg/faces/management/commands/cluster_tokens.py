from pathlib import Path

import torch

from faces.domain.exceptions import ValidationError
from faces.domain.services import ReconstructionService
from faces.integrations.images import read_image
from faces.integrations.manifest import load_manifest
from faces.integrations.reports import write_csv, write_json
from faces.management.base import PipelineCommand

CLUSTER_COLUMNS = ("frame", "scale", "x", "y", "label")


class Command(PipelineCommand):
    help = "Tokenize a manifest and export per-scale 2D PCA embeddings labelled by identity."
    requires_checkpoint = True

    def add_command_arguments(self, parser):
        parser.add_argument("--manifest", required=True, help="Manifest with video_id labels")
        parser.add_argument("--batch-size", type=int, default=16)

    def run(self, run_config, out_dir, seed, options):
        pipeline = self.load_pipeline(options).pipeline
        records = list(load_manifest(Path(options["manifest"])))
        if any(record.video_id is None for record in records):
            raise ValidationError("token clustering needs a video_id on every manifest row")

        images = torch.stack(
            [read_image(record.image, resolution=pipeline.resolution) for record in records]
        )
        tokens = ReconstructionService.tokenize_images(
            pipeline, images, batch_size=options["batch_size"]
        )
        result = ReconstructionService.cluster_tokens(
            tokens,
            [record.video_id for record in records],
            names=[record.image.name for record in records],
        )

        outputs = {}
        for scale in sorted(result.silhouettes):
            rows = [row for row in result.rows if row["scale"] == scale]
            outputs[f"scale{scale}"] = write_csv(
                out_dir / f"tokens_scale{scale}.csv", rows, CLUSTER_COLUMNS
            )
        outputs["silhouette"] = write_json(
            out_dir / "silhouette.json",
            {str(scale): value for scale, value in result.silhouettes.items()},
        )
        self.stdout.write(f"clustered frames={len(records)} scales={len(result.silhouettes)}")
        return outputs
