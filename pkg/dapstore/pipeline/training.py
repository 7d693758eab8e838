"""
Training loops for the three learned components.

    afford  denoising objective: MSE between the injected noise and the
            denoiser's prediction at a random step
    cap     binary cross-entropy of one-shot affordance logits (ablation)
    corr    focal loss between predicted and labelled correspondences on a
            random demonstration crop

Each step draws its example, step and noise from a generator derived from the
run seed, so the checkpoint depends only on the configuration.
"""
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List

import numpy as np

from dapstore.afford import DenoiserConfig, build_denoiser, cap_loss, ddpm_loss
from dapstore.corr import CorrConfig, build_corr_model, focal_loss
from dapstore.env import read_records, record_to_demo
from dapstore.exceptions import ConvergenceError, FormatError, NumericError
from dapstore.labeling import Demonstration, label_affordance, label_correspondence, sample_demo_crop
from dapstore.tensor import AdamState, ParamStore, adam_step, backward, load_checkpoint, save_checkpoint
from dapstore.utils import derive_seed
from .config import RunConfig
from .ledger import complete_run, mark_run_failed, start_run
from .models import CONVERGENCE_RATIO, CONVERGENCE_WINDOW, TrainingRun
from .serializers import DatasetRecordSerializer

logger = logging.getLogger(__name__)

WHICH = ("afford", "cap", "corr")

# Independent random streams derived from the run seed
MODEL_STREAM = 1
STEP_STREAM = 2
CROP_STREAM = 3


@dataclass
class TrainingOutcome:
    """Result of one training run"""
    which: str
    steps: int
    initial_loss: float
    final_loss: float
    checkpoint_path: Path
    log_path: Path

    @property
    def converged(self) -> bool:
        return self.final_loss <= CONVERGENCE_RATIO * self.initial_loss


def load_demonstrations(path) -> List[Demonstration]:
    """
    Read and validate a dataset file.

    Raises:
        FormatError: a record does not match the dataset schema, or the file is empty
        OSError: the file cannot be read
    """
    path = Path(path)
    demos = []
    for number, record in enumerate(read_records(path), start=1):
        serializer = DatasetRecordSerializer(data=record)
        if not serializer.is_valid():
            raise FormatError(f"{path}: record {number} is invalid: {serializer.errors}")
        demos.append(record_to_demo(record))
    if not demos:
        raise FormatError(f"{path}: dataset has no records")
    logger.info(f"Loaded {len(demos)} demonstrations from {path}")
    return demos


def loss_windows(losses: List[float]):
    """(mean of the first, mean of the last) min(CONVERGENCE_WINDOW, steps) losses"""
    window = min(CONVERGENCE_WINDOW, len(losses))
    return float(np.mean(losses[:window])), float(np.mean(losses[-window:]))


def _afford_step(model, demos, cfg: RunConfig):
    sched = cfg.schedule.build()
    labels = [label_affordance(demo, cfg.label) for demo in demos]

    def step(rng: np.random.Generator, _):
        i = int(rng.integers(len(demos)))
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(len(demos[i].container))
        return ddpm_loss(model, labels[i], demos[i].container, t, eps, sched)
    return step


def _cap_step(model, demos, cfg: RunConfig):
    labels = [label_affordance(demo, cfg.label) for demo in demos]

    def step(rng: np.random.Generator, _):
        i = int(rng.integers(len(demos)))
        return cap_loss(model, labels[i], demos[i].container)
    return step


def _corr_step(model, demos, cfg: RunConfig):
    def step(rng: np.random.Generator, index: int):
        i = int(rng.integers(len(demos)))
        demo = demos[i]
        crop = sample_demo_crop(demo.container, demo.object, demo.goal, cfg.label,
                                derive_seed(cfg.seed, CROP_STREAM, index))
        labels = label_correspondence(crop, demo.object, demo.goal, cfg.label)
        return focal_loss(model(crop, demo.object), labels, cfg.corr.gamma)
    return step


def build_model(which: str, cfg: RunConfig):
    seed = derive_seed(cfg.seed, MODEL_STREAM)
    if which == "corr":
        return build_corr_model(cfg.corr, seed)
    return build_denoiser(cfg.denoiser, seed)


STEP_BUILDERS = {"afford": _afford_step, "cap": _cap_step, "corr": _corr_step}


def fit(which: str, model, step_fn: Callable, cfg: RunConfig, log_path) -> List[float]:
    """
    Run cfg.train.steps Adam updates, appending {step, loss, wall_ms} to log_path.

    Raises:
        NumericError: a loss is not finite
    """
    params = ParamStore.from_module(model)
    state = AdamState(params, lr=cfg.train.lr)
    rng = np.random.default_rng(derive_seed(cfg.seed, STEP_STREAM))
    steps = cfg.train.steps
    losses = []

    log_path = Path(log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "w", encoding="utf-8") as log:
        for index in range(1, steps + 1):
            started = time.perf_counter()
            loss = step_fn(rng, index)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise NumericError(f"{which} training: non-finite loss at step {index}")
            backward(loss, params.values())
            adam_step(params, state)
            wall_ms = (time.perf_counter() - started) * 1000.0

            losses.append(value)
            log.write(json.dumps({"step": index, "loss": value, "wall_ms": round(wall_ms, 3)}) + "\n")
            if index % cfg.train.eval_every == 0 or index == steps:
                recent = float(np.mean(losses[-cfg.train.eval_every:]))
                logger.info(f"{which} step {index}/{steps}: loss {value:.5f} (recent mean {recent:.5f})")
    return losses


def train(which: str, cfg: RunConfig) -> TrainingOutcome:
    """
    Train one component on the configured dataset and write its checkpoint
    and training log. The checkpoint is written before the convergence check.

    Raises:
        ConvergenceError: final loss above CONVERGENCE_RATIO x initial loss
        NumericError: non-finite loss
        FormatError, OSError: unreadable dataset
    """
    demos = load_demonstrations(cfg.paths.dataset)
    model = build_model(which, cfg)
    checkpoint_path = cfg.paths.checkpoint(which)
    log_path = cfg.paths.training_log(which)

    losses = fit(which, model, STEP_BUILDERS[which](model, demos, cfg), cfg, log_path)

    initial, final = loss_windows(losses)
    meta = {
        "which": which,
        "task": cfg.task,
        "seed": str(cfg.seed),
        "steps": str(len(losses)),
        "initial_loss": repr(initial),
        "final_loss": repr(final),
        "config": cfg.dumps(),
    }
    save_checkpoint(ParamStore.from_module(model), meta, checkpoint_path)
    outcome = TrainingOutcome(which, len(losses), initial, final, checkpoint_path, log_path)
    logger.info(f"{which} training finished: loss {initial:.5f} -> {final:.5f}, checkpoint {checkpoint_path}")
    return outcome


def run_training(which: str, cfg: RunConfig) -> TrainingRun:
    """
    Train under a ledger record. Errors are re-raised after the record is
    marked failed; a run that does not converge keeps its losses and paths.

    Raises:
        ConvergenceError: final loss above CONVERGENCE_RATIO x initial loss
    """
    run = start_run(TrainingRun, which=which, task=cfg.task, seed=str(cfg.seed), config=cfg.to_dict())
    try:
        outcome = train(which, cfg)
    except Exception as e:
        mark_run_failed(run, f"{type(e).__name__}: {e}")
        raise

    results = {
        "steps": outcome.steps,
        "initial_loss": outcome.initial_loss,
        "final_loss": outcome.final_loss,
        "checkpoint_path": str(outcome.checkpoint_path),
        "log_path": str(outcome.log_path),
    }
    if not outcome.converged:
        message = (f"{which} training did not converge: final loss {outcome.final_loss:.5f} > "
                   f"{CONVERGENCE_RATIO} x initial loss {outcome.initial_loss:.5f}")
        mark_run_failed(run, message, **results)
        raise ConvergenceError(message)
    return complete_run(run, **results)


def load_trained(which: str, cfg: RunConfig):
    """
    Rebuild a trained network from its checkpoint under cfg.paths. The
    architecture comes from the configuration stored in the checkpoint.

    Raises:
        FormatError: the checkpoint is corrupt or belongs to another component
        OSError: the checkpoint cannot be read
    """
    path = cfg.paths.checkpoint(which)
    params, meta = load_checkpoint(path)
    if meta.get("which", which) != which:
        raise FormatError(f"{path}: checkpoint holds a '{meta['which']}' model, expected '{which}'")
    try:
        trained = json.loads(meta["config"]) if "config" in meta else cfg.to_dict()
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: stored configuration is not valid JSON ({e.msg})")

    if which == "corr":
        model = build_corr_model(CorrConfig(**trained["corr"]), 0)
    else:
        model = build_denoiser(DenoiserConfig(**trained["denoiser"]), 0)
    params.load_into(model)
    return model
