"""
Procedural storage scenes.

A shelf is a back panel and a base split into slots by vertical dividers; a
book-sized box goes upright into any slot. A cabinet is an open-front box
with horizontal boards; a can stands at a grid of positions on every level.
Every slot pose, applied to the object template, gives a valid stored
placement, so each scene carries a multi-modal set of goals.

Frame: the back panel's front face is the plane y = 0 (normal +y), the
lowest supporting surface is z = 0 (normal +z), the container opens towards
+y and is centered on x = 0.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from dapstore.exceptions import ConfigError, SizeError
from dapstore.geom import PointCloud, RigidTransform, superpoint_cluster

logger = logging.getLogger(__name__)

SHELF = "shelf"
CABINET = "cabinet"
KINDS = (SHELF, CABINET)

# Objects rest this far above their support and in front of the back panel
LIFT = 0.006

BOOK_SIZE = (0.05, 0.11, 0.12)
CAN_RADIUS = 0.03
CAN_HEIGHT = 0.1

SHELF_DEPTH = 0.16
SHELF_HEIGHT = 0.16
DIVIDER_THICKNESS = 0.02

CABINET_WIDTH = 0.44
CABINET_DEPTH = 0.16
COMPARTMENT_HEIGHT = 0.14
BOARD_THICKNESS = 0.04

MIN_CONTAINER_POINTS = 400


class Rect:
    """Planar rectangle center + a u + b v, a, b in [-1, 1], with a fixed normal"""

    def __init__(self, center, u, v, normal):
        self.center = np.asarray(center, dtype=np.float64)
        self.u = np.asarray(u, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        self.normal = np.asarray(normal, dtype=np.float64)

    @property
    def area(self) -> float:
        return 4.0 * np.linalg.norm(self.u) * np.linalg.norm(self.v)

    def sample(self, count: int, rng: np.random.Generator):
        ab = rng.uniform(-1.0, 1.0, size=(count, 2))
        positions = self.center + ab[:, :1] * self.u + ab[:, 1:] * self.v
        return positions, np.tile(self.normal, (count, 1))


class CylinderSide:
    def __init__(self, radius: float, height: float):
        self.radius = radius
        self.height = height

    @property
    def area(self) -> float:
        return 2.0 * np.pi * self.radius * self.height

    def sample(self, count: int, rng: np.random.Generator):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        z = rng.uniform(-self.height / 2, self.height / 2, size=count)
        normals = np.column_stack([np.cos(theta), np.sin(theta), np.zeros(count)])
        positions = normals * self.radius + np.column_stack([np.zeros((count, 2)), z])
        return positions, normals


class Disk:
    def __init__(self, radius: float, z: float, up: bool):
        self.radius = radius
        self.z = z
        self.up = up

    @property
    def area(self) -> float:
        return np.pi * self.radius ** 2

    def sample(self, count: int, rng: np.random.Generator):
        r = self.radius * np.sqrt(rng.uniform(0.0, 1.0, size=count))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        positions = np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full(count, self.z)])
        normal = [0.0, 0.0, 1.0 if self.up else -1.0]
        return positions, np.tile(normal, (count, 1))


def box_faces(center, size) -> List[Rect]:
    """Six outward-facing faces of an axis-aligned box"""
    center = np.asarray(center, dtype=np.float64)
    half = np.asarray(size, dtype=np.float64) / 2.0
    faces = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        u = np.zeros(3)
        v = np.zeros(3)
        u[others[0]] = half[others[0]]
        v[others[1]] = half[others[1]]
        for sign in (1.0, -1.0):
            normal = np.zeros(3)
            normal[axis] = sign
            faces.append(Rect(center + half[axis] * normal, u, v, normal))
    return faces


def sample_surfaces(parts, count: int, rng: np.random.Generator):
    """
    Area-weighted uniform samples over the parts.

    Returns:
        (PointCloud, np.ndarray): the cloud and each point's part index
    """
    areas = np.array([part.area for part in parts])
    counts = rng.multinomial(count, areas / areas.sum())
    positions, normals, part_ids = [], [], []
    for index, (part, n) in enumerate(zip(parts, counts)):
        if n == 0:
            continue
        p, nrm = part.sample(int(n), rng)
        positions.append(p)
        normals.append(nrm)
        part_ids.append(np.full(int(n), index, dtype=np.int64))
    return PointCloud(np.vstack(positions), np.vstack(normals)), np.concatenate(part_ids)


@dataclass(frozen=True)
class ShelfParams:
    slot_count: int = 4
    slot_gap: Optional[float] = None
    jitter: float = 0.01
    container_points: int = 3000
    object_points: int = 1500
    eps_corr: float = 0.02

    @property
    def min_gap(self) -> float:
        return BOOK_SIZE[0] + 2.0 * self.eps_corr

    @property
    def nominal_gap(self) -> float:
        return self.slot_gap if self.slot_gap is not None else self.min_gap + 0.02


@dataclass(frozen=True)
class CabinetParams:
    levels: int = 2
    positions: int = 2
    jitter: float = 0.01
    container_points: int = 3000
    object_points: int = 1500

    @property
    def slot_count(self) -> int:
        return self.levels * self.positions


@dataclass(eq=False)
class SceneSpec:
    kind: str
    slot_poses: List[RigidTransform]
    container: PointCloud
    object_template: PointCloud
    pos_tol: float = 0.02
    rot_tol: float = 0.2
    symmetry: str = "yaw180"
    container_parts: Optional[np.ndarray] = field(default=None, repr=False)
    object_parts: Optional[np.ndarray] = field(default=None, repr=False)
    seed: int = 0

    @property
    def slot_count(self) -> int:
        return len(self.slot_poses)

    def meta(self) -> dict:
        return {"kind": self.kind, "slot_count": self.slot_count, "seed": self.seed}

    def check(self):
        if self.slot_count < 2:
            raise ConfigError(f"a scene needs at least 2 slots, got {self.slot_count}")
        translations = np.array([pose.translation for pose in self.slot_poses])
        gaps = np.linalg.norm(translations[:, None] - translations[None], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() <= 2.0 * self.pos_tol:
            raise ConfigError(f"slot poses are {gaps.min():.4f} m apart, need more than {2 * self.pos_tol} m")
        return self


def _shelf_parts(gaps):
    width = float(np.sum(gaps)) + (len(gaps) + 1) * DIVIDER_THICKNESS
    left = -width / 2.0
    half_depth = SHELF_DEPTH / 2.0
    half_height = SHELF_HEIGHT / 2.0
    parts = [
        Rect([0.0, 0.0, half_height], [width / 2.0, 0, 0], [0, 0, half_height], [0, 1, 0]),
        Rect([0.0, half_depth, 0.0], [width / 2.0, 0, 0], [0, half_depth, 0], [0, 0, 1]),
    ]
    centers = []
    x = left
    for index in range(len(gaps) + 1):
        for face_x, normal in ((x, -1.0), (x + DIVIDER_THICKNESS, 1.0)):
            parts.append(Rect([face_x, half_depth, half_height], [0, half_depth, 0], [0, 0, half_height],
                              [normal, 0, 0]))
        x += DIVIDER_THICKNESS
        if index < len(gaps):
            centers.append(x + gaps[index] / 2.0)
            x += gaps[index]
    return parts, centers


def gen_shelf_scene(rng_seed: int, params: ShelfParams = ShelfParams()) -> SceneSpec:
    """
    Shelf with slot_count slots between slot_count + 1 dividers.

    Raises:
        ConfigError: fewer than two slots, or a gap narrower than the book
            plus twice the correspondence radius
    """
    if params.slot_count < 2:
        raise ConfigError(f"slot_count must be at least 2, got {params.slot_count}")
    if params.nominal_gap - params.jitter < params.min_gap:
        raise ConfigError(
            f"slot gap {params.nominal_gap} (jitter {params.jitter}) leaves less than {params.min_gap} m for the book")
    rng = np.random.default_rng(rng_seed)
    gaps = params.nominal_gap + rng.uniform(-params.jitter, params.jitter, size=params.slot_count)
    parts, centers = _shelf_parts(gaps)
    container, container_parts = sample_surfaces(parts, params.container_points, rng)

    width, depth, height = BOOK_SIZE
    template, object_parts = sample_surfaces(box_faces(np.zeros(3), BOOK_SIZE), params.object_points, rng)
    slot_poses = [RigidTransform(np.eye(3), [cx, LIFT + depth / 2.0, LIFT + height / 2.0]) for cx in centers]
    scene = SceneSpec(SHELF, slot_poses, container, template, symmetry="yaw180",
                      container_parts=container_parts, object_parts=object_parts, seed=rng_seed)
    return _checked(scene)


def _cabinet_parts(levels: int, width: float, compartment: float):
    pitch = compartment + BOARD_THICKNESS
    interior = levels * pitch - BOARD_THICKNESS
    half_depth = CABINET_DEPTH / 2.0
    parts = [
        Rect([0.0, 0.0, interior / 2.0], [width / 2.0, 0, 0], [0, 0, interior / 2.0], [0, 1, 0]),
        Rect([-width / 2.0, half_depth, interior / 2.0], [0, half_depth, 0], [0, 0, interior / 2.0], [1, 0, 0]),
        Rect([width / 2.0, half_depth, interior / 2.0], [0, half_depth, 0], [0, 0, interior / 2.0], [-1, 0, 0]),
    ]
    floors = []
    for level in range(levels + 1):
        top = level * pitch
        if level > 0:
            # underside of this board is the ceiling of the level below
            parts.append(Rect([0.0, half_depth, top - BOARD_THICKNESS], [width / 2.0, 0, 0], [0, half_depth, 0],
                              [0, 0, -1]))
        parts.append(Rect([0.0, half_depth, top], [width / 2.0, 0, 0], [0, half_depth, 0], [0, 0, 1]))
        if level < levels:
            floors.append(top)
    return parts, floors


def gen_cabinet_scene(rng_seed: int, params: CabinetParams = CabinetParams()) -> SceneSpec:
    """
    Open-front cabinet with ``levels`` compartments and ``positions`` can
    stands per compartment.

    Raises:
        ConfigError: unsupported level count or fewer than two slots
    """
    if not 1 <= params.levels <= 3 or params.positions < 1 or params.slot_count < 2:
        raise ConfigError(f"cabinet needs 1-3 levels and at least 2 slots, got {params.levels}x{params.positions}")
    rng = np.random.default_rng(rng_seed)
    width = CABINET_WIDTH + rng.uniform(-params.jitter, params.jitter)
    compartment = COMPARTMENT_HEIGHT + rng.uniform(-params.jitter, params.jitter) / 2.0
    if compartment < CAN_HEIGHT + 2 * LIFT or width / params.positions < 2 * CAN_RADIUS + 2 * LIFT:
        raise ConfigError("cabinet compartments are too small for the can")
    parts, floors = _cabinet_parts(params.levels, width, compartment)
    container, container_parts = sample_surfaces(parts, params.container_points, rng)

    can_parts = [CylinderSide(CAN_RADIUS, CAN_HEIGHT), Disk(CAN_RADIUS, CAN_HEIGHT / 2.0, True),
                 Disk(CAN_RADIUS, -CAN_HEIGHT / 2.0, False)]
    template, object_parts = sample_surfaces(can_parts, params.object_points, rng)
    slot_poses = []
    for floor in floors:
        for i in range(params.positions):
            x = -width / 2.0 + (i + 0.5) * width / params.positions
            slot_poses.append(RigidTransform(np.eye(3), [x, LIFT + CAN_RADIUS, floor + LIFT + CAN_HEIGHT / 2.0]))
    scene = SceneSpec(CABINET, slot_poses, container, template, symmetry="yaw",
                      container_parts=container_parts, object_parts=object_parts, seed=rng_seed)
    return _checked(scene)


def _checked(scene: SceneSpec) -> SceneSpec:
    if len(scene.container) < MIN_CONTAINER_POINTS:
        raise SizeError(f"container sampled with {len(scene.container)} points, need {MIN_CONTAINER_POINTS}")
    return scene.check()


def gen_scene(kind: str, rng_seed: int, slot_count: int = 4, eps_corr: float = 0.02) -> SceneSpec:
    """Scene of the given kind; a cabinet with 4 slots has 2 levels of 2 positions"""
    if kind == SHELF:
        return gen_shelf_scene(rng_seed, ShelfParams(slot_count=slot_count, eps_corr=eps_corr))
    if kind == CABINET:
        levels = 3 if slot_count % 3 == 0 and slot_count > 4 else 2
        if slot_count % levels:
            raise ConfigError(f"cabinet slot_count must be a multiple of the level count, got {slot_count}")
        return gen_cabinet_scene(rng_seed, CabinetParams(levels=levels, positions=slot_count // levels))
    raise ConfigError(f"unknown task kind '{kind}', expected one of {KINDS}")


def _cluster_parts(pc: PointCloud, parts: Optional[np.ndarray], voxel_size: float) -> PointCloud:
    if parts is None:
        return superpoint_cluster(pc, voxel_size)
    pieces = [superpoint_cluster(pc.subset(np.flatnonzero(parts == part)), voxel_size) for part in np.unique(parts)]
    return PointCloud(np.vstack([p.positions for p in pieces]), np.vstack([p.normals for p in pieces]))


def cluster_scene(scene: SceneSpec, container_voxel: float = 0.03, object_voxel: float = 0.015) -> SceneSpec:
    """
    Superpoint-cluster both clouds. Each surface part is clustered on its own
    so superpoints never average across two surfaces.
    """
    container = _cluster_parts(scene.container, scene.container_parts, container_voxel)
    template = _cluster_parts(scene.object_template, scene.object_parts, object_voxel)
    logger.debug(f"Clustered {scene.kind} scene {scene.seed}: container {len(scene.container)} -> "
                 f"{len(container)}, object {len(scene.object_template)} -> {len(template)}")
    return replace(scene, container=container, object_template=template, container_parts=None, object_parts=None)
