from dapstore.env import gen_dataset
from dapstore.pipeline.management.base import DapCommand


class Command(DapCommand):
    help = 'Generate a JSON-lines dataset of demonstrations in procedural shelf or cabinet scenes'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--scenes',
            dest='dataset.scenes',
            metavar='N',
            help='Number of scenes (same as --dataset.scenes)',
        )
        parser.add_argument(
            '--demos',
            dest='dataset.demos',
            metavar='N',
            help='Demonstrations per scene (same as --dataset.demos)',
        )

    def run(self, cfg, **options):
        return gen_dataset(
            cfg.task,
            cfg.dataset.scenes,
            cfg.dataset.demos,
            cfg.seed,
            cfg.paths.dataset,
            slot_count=cfg.dataset.slot_count,
            label_cfg=cfg.label,
            container_voxel=cfg.dataset.container_voxel,
            object_voxel=cfg.dataset.object_voxel,
            max_workers=self.max_workers,
        )
