from dataclasses import replace

from faces.domain.head_model import build_procedural_rig
from faces.integrations.manifest import PARAMS_ARCHIVE
from faces.management.base import PipelineCommand
from faces.tasks.generate_synthetic import RIG_NAME, generate_synthetic


class Command(PipelineCommand):
    help = "Render a synthetic face dataset with known head parameters."

    def add_command_arguments(self, parser):
        parser.add_argument("--count", type=int, default=None, help="Number of images")
        parser.add_argument(
            "--identities", type=int, default=None, help="Number of distinct subjects"
        )
        parser.add_argument(
            "--resolution", type=int, default=None, help="Image side in pixels"
        )

    def run(self, run_config, out_dir, seed, options):
        overrides = {"seed": run_config.synthetic.seed if options["seed"] is None else seed}
        for option, name in (
            ("count", "count"),
            ("identities", "n_identities"),
            ("resolution", "resolution"),
        ):
            if options[option] is not None:
                overrides[name] = options[option]
        spec = replace(run_config.synthetic, **overrides)
        dataset = generate_synthetic(spec, build_procedural_rig(run_config.rig), out_dir)

        self.stdout.write(
            f"generated count={dataset.count} identities={spec.n_identities} "
            f"rejected_draws={dataset.rejected}"
        )
        return {
            "manifest": dataset.manifest,
            "params": dataset.manifest.parent / PARAMS_ARCHIVE,
            "rig": dataset.manifest.parent / RIG_NAME,
        }
