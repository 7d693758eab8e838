from dapstore.pipeline.evaluation import MODES, run_evaluation
from dapstore.pipeline.management.base import DapCommand
from dapstore.pipeline.serializers import EvaluationRunSerializer


class Command(DapCommand):
    help = 'Evaluate trained checkpoints on held-out scenes and write a JSON report'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--mode',
            choices=MODES,
            default='dap',
            help='dap: rank K diffusion candidates; cap: single classification candidate (default: dap)',
        )

    def run(self, cfg, **options):
        run = run_evaluation(options['mode'], cfg, self.max_workers)
        return EvaluationRunSerializer(run).data
