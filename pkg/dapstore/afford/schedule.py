"""
DDPM noise schedule, forward noising, the reverse step and the sampler for
per-point affordance scores.

Steps are 1-based: t = 1..T. Array entry t - 1 holds the values of step t.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch

from dapstore.exceptions import ConfigError, NumericError, ShapeError
from dapstore.geom import PointCloud, write_ply
from dapstore.labeling import AffordanceField
from dapstore.utils import offset_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        if beta.size < 1:
            raise ConfigError("a schedule needs at least one step")
        if np.any(beta < 0) or np.any(beta >= 1) or np.any(np.diff(beta) < 0):
            raise ConfigError("betas must be nondecreasing and lie in [0, 1)")
        alpha = 1.0 - beta
        for name, value in (("beta", beta), ("alpha", alpha),
                            ("alpha_bar", np.cumprod(alpha)), ("sigma", np.sqrt(beta))):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def T(self) -> int:
        return self.beta.shape[0]

    def check_step(self, t: int):
        if not 1 <= t <= self.T:
            raise ConfigError(f"step {t} outside 1..{self.T}")

    def at(self, t: int):
        """(alpha_t, alpha_bar_t, sigma_t) of step t"""
        self.check_step(t)
        return float(self.alpha[t - 1]), float(self.alpha_bar[t - 1]), float(self.sigma[t - 1])


def make_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end over T steps"""
    if T < 1:
        raise ConfigError(f"T must be at least 1, got {T}")
    if not (0 < beta_start <= beta_end < 1):
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def _data(values):
    return values.scores if isinstance(values, AffordanceField) else values


def q_sample(s0, t: int, eps, sched: NoiseSchedule):
    """
    S(t) = sqrt(alpha_bar_t) S(0) + sqrt(1 - alpha_bar_t) eps.

    Works on AffordanceFields, numpy arrays and torch tensors; the result has
    the type of s0.
    """
    values, noise = _data(s0), _data(eps)
    if tuple(values.shape) != tuple(noise.shape):
        raise ShapeError(f"q_sample: scores {tuple(values.shape)} and noise {tuple(noise.shape)} differ")
    _, alpha_bar, _ = sched.at(t)
    out = math.sqrt(alpha_bar) * values + math.sqrt(1.0 - alpha_bar) * noise
    return AffordanceField(out) if isinstance(s0, AffordanceField) else out


def posterior_step(s_t: torch.Tensor, eps_hat: torch.Tensor, t: int, z: torch.Tensor,
                   sched: NoiseSchedule) -> torch.Tensor:
    """Reverse update given a predicted noise; the noise term is dropped at t = 1"""
    alpha, alpha_bar, sigma = sched.at(t)
    mean = (s_t - ((1.0 - alpha) / math.sqrt(1.0 - alpha_bar)) * eps_hat) / math.sqrt(alpha)
    if t > 1:
        return mean + sigma * z
    return mean


def reverse_step(model, s_t: AffordanceField, t: int, container, z, sched: NoiseSchedule) -> AffordanceField:
    """
    One denoising step S(t) -> S(t-1) with the model's noise prediction.

    ``container`` may be a PointCloud or a context the model has already
    encoded.
    """
    scores = torch.as_tensor(_data(s_t), dtype=torch.float64)
    noise = torch.as_tensor(_data(z), dtype=torch.float64)
    if scores.shape != noise.shape:
        raise ShapeError(f"reverse_step: scores {tuple(scores.shape)} and noise {tuple(noise.shape)} differ")
    with torch.no_grad():
        eps_hat = model(scores, t, container)
        out = posterior_step(scores, eps_hat, t, noise, sched)
    return AffordanceField(out.numpy())


def ddpm_loss(model, s0, container, t: int, eps, sched: NoiseSchedule) -> torch.Tensor:
    """Mean squared error between eps and the model's prediction on q_sample(s0, t, eps)"""
    target = torch.as_tensor(_data(eps), dtype=torch.float64)
    clean = torch.as_tensor(_data(s0), dtype=torch.float64)
    noisy = q_sample(clean, t, target, sched)
    prediction = model(noisy, t, container)
    if prediction.shape != target.shape:
        raise ShapeError(f"ddpm_loss: prediction {tuple(prediction.shape)} vs noise {tuple(target.shape)}")
    return torch.mean((target - prediction) ** 2)


@dataclass
class AffordanceSample:
    """Sampled scores: clamped for cropping, raw S(0), and optional S(T)..S(0) snapshots"""
    scores: AffordanceField
    raw: AffordanceField
    trajectory: Optional[List[AffordanceField]] = None
    seed: int = 0


def _encode(model, container):
    encode = getattr(model, "encode", None)
    if encode is not None and isinstance(container, PointCloud):
        return encode(container)
    return container


def sample_affordance_batch(model, container, sched: NoiseSchedule, rng_seed: int, count: int,
                            record_trajectory: bool = False) -> List[AffordanceSample]:
    """
    Draw ``count`` affordance fields, denoised together as one batch.

    Sample k draws its initial state and every step's noise from its own
    generator seeded with rng_seed + k, so results do not depend on count.

    Raises:
        NumericError: if the state stops being finite
    """
    if count < 1:
        raise ConfigError(f"sample count must be positive, got {count}")
    context = _encode(model, container)
    n_points = len(container) if isinstance(container, PointCloud) else container.n_points
    seeds = [offset_seed(rng_seed, k) for k in range(count)]
    generators = [torch.Generator().manual_seed(seed) for seed in seeds]

    def draw():
        return torch.stack([torch.randn(n_points, generator=g, dtype=torch.float64) for g in generators])

    state = draw()
    snapshots = [state.clone()] if record_trajectory else None
    with torch.no_grad():
        for t in range(sched.T, 0, -1):
            eps_hat = model(state, t, context)
            z = draw() if t > 1 else torch.zeros_like(state)
            state = posterior_step(state, eps_hat, t, z, sched)
            if not torch.all(torch.isfinite(state)):
                raise NumericError(f"affordance sampling diverged at step {t}")
            if record_trajectory:
                snapshots.append(state.clone())

    samples = []
    for k, seed in enumerate(seeds):
        raw = state[k].numpy()
        trajectory = [AffordanceField(s[k].numpy()) for s in snapshots] if record_trajectory else None
        samples.append(AffordanceSample(AffordanceField(np.clip(raw, -1.0, 1.0)), AffordanceField(raw),
                                        trajectory, seed))
    logger.debug(f"Sampled {count} affordance fields over {n_points} points")
    return samples


def sample_affordance(model, container, sched: NoiseSchedule, rng_seed: int,
                      record_trajectory: bool = False) -> AffordanceSample:
    """Single affordance sample starting from pure Gaussian noise"""
    return sample_affordance_batch(model, container, sched, rng_seed, 1, record_trajectory)[0]


def export_trajectory(container: PointCloud, trajectory: List[AffordanceField], directory,
                      binary: bool = False) -> List[Path]:
    """
    Write one PLY per snapshot as afford_t{t:03}.ply, from t = T down to 0.
    """
    directory = Path(directory)
    last = len(trajectory) - 1
    paths = []
    for i, field_t in enumerate(trajectory):
        name = f"afford_t{last - i:03}.ply"
        paths.append(write_ply(container.with_scores(field_t.scores), directory / name, binary=binary))
    logger.info(f"Exported {len(paths)} trajectory snapshots to {directory}")
    return paths
