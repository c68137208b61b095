from pathlib import Path

from faces.domain.exceptions import ValidationError
from faces.domain.renderer import overlay
from faces.domain.services import ReconstructionService
from faces.integrations.dumps import write_params, write_token
from faces.integrations.images import read_image, write_image
from faces.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Reconstruct images: synthesized face, mesh overlay, parameter and token dumps."
    requires_checkpoint = True

    def add_command_arguments(self, parser):
        parser.add_argument("--image", nargs="+", required=True, help="Input PNG image(s)")
        parser.add_argument(
            "--no-token-decoder",
            action="store_true",
            help="Skip the zero-convolution token path (AdaIN-only conditioning)",
        )

    def run(self, run_config, out_dir, seed, options):
        pipeline = self.load_pipeline(options).pipeline
        paths = [Path(path) for path in options["image"]]
        stems = [path.stem for path in paths]
        if len(set(stems)) != len(stems):
            raise ValidationError("input images must have distinct file names")

        outputs = {}
        for path in paths:
            image = read_image(path, resolution=pipeline.resolution)[None]
            result = ReconstructionService.reconstruct(
                pipeline, image, use_token_decoder=not options["no_token_decoder"]
            )
            stem = path.stem
            outputs[f"{stem}.reconstruction"] = write_image(
                out_dir / f"{stem}_reconstruction.png", result.image
            )
            outputs[f"{stem}.overlay"] = write_image(
                out_dir / f"{stem}_overlay.png", overlay(image, result.bundle)
            )
            outputs[f"{stem}.params"] = write_params(
                out_dir / f"{stem}_params.npz", result.params, path.name
            )
            outputs[f"{stem}.token"] = write_token(out_dir / f"{stem}_token.npz", result.token)
        return outputs
