import numpy as np

from dapstore.geom import RigidTransform, apply_transform, compose, invert
from dapstore.labeling import Demonstration
from .scenes import SceneSpec

# Initial object poses: upright on the table plane in front of the container
INIT_X_RANGE = (-0.15, 0.15)
INIT_Y_RANGE = (0.35, 0.6)


def initial_pose(scene: SceneSpec, rng: np.random.Generator) -> RigidTransform:
    """Random yaw, resting on z = 0 in front of the container"""
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    x = rng.uniform(*INIT_X_RANGE)
    y = rng.uniform(*INIT_Y_RANGE)
    z = -float(scene.object_template.positions[:, 2].min())
    return RigidTransform.from_yaw(yaw, [x, y, z])


def sample_demonstration(scene: SceneSpec, rng_seed: int, jitter: bool = True,
                         random_init: bool = True) -> Demonstration:
    """
    One demonstration: pick a slot uniformly, perturb it by at most pos_tol/2
    along the slot's x axis and rot_tol/2 in yaw, and record the goal that
    carries the object from its initial pose into the slot.

    With random_init off the object cloud is the template itself, so the goal
    is the (perturbed) slot pose.
    """
    rng = np.random.default_rng(rng_seed)
    mode = int(rng.integers(scene.slot_count))
    dx, dyaw = 0.0, 0.0
    if jitter:
        dx = rng.uniform(-scene.pos_tol / 2.0, scene.pos_tol / 2.0)
        dyaw = rng.uniform(-scene.rot_tol / 2.0, scene.rot_tol / 2.0)
    target = compose(scene.slot_poses[mode], RigidTransform.from_yaw(dyaw, [dx, 0.0, 0.0]))

    if not random_init:
        return Demonstration(scene.container, scene.object_template, target, mode)
    init = initial_pose(scene, rng)
    obj = apply_transform(scene.object_template, init)
    return Demonstration(scene.container, obj, compose(target, invert(init)), mode)
