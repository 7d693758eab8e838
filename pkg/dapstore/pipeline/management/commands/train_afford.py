from dapstore.pipeline.management.training import TrainCommand


class Command(TrainCommand):
    help = 'Train the diffusion affordance denoiser on the configured dataset'
    which = 'afford'
