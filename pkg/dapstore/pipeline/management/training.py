from dapstore.pipeline.management.base import DapCommand
from dapstore.pipeline.serializers import TrainingRunSerializer
from dapstore.pipeline.training import run_training


class TrainCommand(DapCommand):
    """Train one component; exit 3 when the loss does not converge"""
    which = None

    def run(self, cfg, **options):
        run = run_training(self.which, cfg)
        return TrainingRunSerializer(run).data
