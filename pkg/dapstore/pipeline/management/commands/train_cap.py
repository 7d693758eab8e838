from dapstore.pipeline.management.training import TrainCommand


class Command(TrainCommand):
    help = 'Train the one-shot classification affordance model (ablation baseline)'
    which = 'cap'
