from pathlib import Path

from faces.domain.services import EDIT_MODES, EditRequest, ReconstructionService
from faces.integrations.dumps import write_params, write_token
from faces.integrations.images import read_image, write_image
from faces.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Edit a source face with a target's token, shape or expression, or animate it."
    requires_checkpoint = True

    def add_command_arguments(self, parser):
        parser.add_argument("--mode", choices=EDIT_MODES, required=True)
        parser.add_argument("--source", required=True, help="Source PNG image")
        parser.add_argument(
            "--target",
            nargs="+",
            required=True,
            help="Target PNG image (animate: one driver frame per image)",
        )
        parser.add_argument("--no-token-decoder", action="store_true")

    def run(self, run_config, out_dir, seed, options):
        pipeline = self.load_pipeline(options).pipeline
        resolution = pipeline.resolution
        request = EditRequest(
            mode=options["mode"],
            source=read_image(Path(options["source"]), resolution=resolution),
            targets=tuple(
                read_image(Path(path), resolution=resolution) for path in options["target"]
            ),
            output=out_dir,
        )
        result = ReconstructionService.apply(
            pipeline, request, use_token_decoder=not options["no_token_decoder"]
        )

        outputs = {
            "params": write_params(out_dir / "edit_params.npz", result.params, options["source"]),
            "token": write_token(out_dir / "edit_token.npz", result.token),
        }
        if request.mode == "animate":
            for index, frame in enumerate(result.images):
                outputs[f"frame{index:04d}"] = write_image(
                    out_dir / "frames" / f"{index:04d}.png", frame
                )
        else:
            outputs["image"] = write_image(out_dir / "edit.png", result.images[0])
        self.stdout.write(f"edit mode={request.mode} images={len(result.images)}")
        return outputs
