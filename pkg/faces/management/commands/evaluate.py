from pathlib import Path

from faces.domain.losses import PoseMasks
from faces.integrations.manifest import PARAMS_ARCHIVE, load_manifest
from faces.integrations.providers import ConstantFlowProvider, RandomProjectionEmbedding
from faces.management.base import PipelineCommand
from faces.tasks.evaluate import evaluate_records, write_evaluation

FLOW_PROVIDERS = {"none": None, "zero": ConstantFlowProvider}
EMBEDDING_PROVIDERS = {"none": None, "random": RandomProjectionEmbedding}


class Command(PipelineCommand):
    help = "Evaluate a checkpoint on a manifest: PSNR, landmarks, AED/APD and video metrics."
    requires_checkpoint = True

    def add_command_arguments(self, parser):
        parser.add_argument("--manifest", required=True, help="Evaluation manifest CSV")
        parser.add_argument("--batch-size", type=int, default=16)
        parser.add_argument(
            "--flow",
            choices=sorted(FLOW_PROVIDERS),
            default="none",
            help="Optical-flow back-end for warp error (zero: static-camera clips)",
        )
        parser.add_argument(
            "--embedding",
            choices=sorted(EMBEDDING_PROVIDERS),
            default="none",
            help="Embedding back-end for identity similarity and Frechet distance",
        )

    def run(self, run_config, out_dir, seed, options):
        pipeline = self.load_pipeline(options).pipeline
        manifest_path = Path(options["manifest"])
        with_params = (manifest_path.parent / PARAMS_ARCHIVE).exists()
        records = list(load_manifest(manifest_path, with_params=with_params))
        flow = FLOW_PROVIDERS[options["flow"]]
        embedding = EMBEDDING_PROVIDERS[options["embedding"]]

        report = evaluate_records(
            pipeline,
            records,
            PoseMasks.load(run_config.pose_mask_dir, epsilon=run_config.pose_mask_epsilon),
            distance=run_config.metric_distance,
            batch_size=options["batch_size"],
            flow_provider=None if flow is None else flow(),
            embedding_provider=None if embedding is None else embedding(seed=seed),
        )
        csv_path, json_path = write_evaluation(
            out_dir, report, config_hash=run_config.digest()
        )
        for name, value in sorted(report.summary.items()):
            self.stdout.write(f"{name}={value['value']:.6f} count={value['count']}")
        return {"metrics": csv_path, "summary": json_path}
