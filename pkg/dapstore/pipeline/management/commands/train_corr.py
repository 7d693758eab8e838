from dapstore.pipeline.management.training import TrainCommand


class Command(TrainCommand):
    help = 'Train the correspondence network with focal loss on demonstration crops'
    which = 'corr'
