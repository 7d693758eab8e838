import json
import logging
from collections import Counter
from pathlib import Path

from dapstore.afford import export_trajectory
from dapstore.env import cloud_from_dict
from dapstore.exceptions import FormatError
from dapstore.pipeline.management.base import DapCommand
from dapstore.pipeline.serializers import SceneFileSerializer
from dapstore.pipeline.training import load_trained
from dapstore.pose import infer_storage_pose

logger = logging.getLogger(__name__)


class Command(DapCommand):
    help = 'Predict a storage pose for one scene file and print the best candidate as JSON'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--scene',
            required=True,
            help='JSON file holding a dataset record or {"container": ..., "object": ...}',
        )
        parser.add_argument(
            '--export-trajectory',
            nargs='?',
            const='',
            default=None,
            metavar='DIR',
            help='Write the best candidate\'s T+1 affordance snapshots as PLY files '
                 '(default directory: <reports>/trajectory)',
        )

    def run(self, cfg, **options):
        container, obj = self._read_scene(options['scene'])
        afford_model = load_trained('afford', cfg)
        corr_model = load_trained('corr', cfg)

        export = options['export_trajectory']
        result = infer_storage_pose(afford_model, corr_model, container, obj, cfg.schedule.build(), cfg.seed,
                                    cfg.infer, self.max_workers, record_trajectory=export is not None)
        best = result.best
        summary = {
            'rotation': best.transform.to_dict()['rotation'],
            'translation': best.transform.to_dict()['translation'],
            'collisions': best.collision_count,
            'rank_size': len(result.ranked),
            'candidate': best.index,
            'failures': dict(sorted(Counter(tag for _, tag in result.failures).items())),
        }
        if export is not None:
            directory = Path(export) if export else cfg.paths.reports / 'trajectory'
            paths = export_trajectory(container, result.trajectory, directory)
            summary['trajectory_dir'] = str(directory)
            summary['trajectory_files'] = len(paths)
        return summary

    def _read_scene(self, path):
        """Container and object clouds from a scene file (whole-file JSON or its first line)"""
        path = Path(path)
        text = path.read_text(encoding='utf-8')
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            lines = [line for line in text.splitlines() if line.strip()]
            try:
                data = json.loads(lines[0]) if lines else None
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}: invalid JSON ({e.msg})")

        if not isinstance(data, dict):
            raise FormatError(f"{path}: expected a JSON object")
        serializer = SceneFileSerializer(data=data)
        if not serializer.is_valid():
            raise FormatError(f"{path}: invalid scene file: {serializer.errors}")
        logger.info(f"Loaded scene {path}")
        return cloud_from_dict(data['container']), cloud_from_dict(data['object'])
