from .demos import initial_pose, sample_demonstration
from .evaluation import (
    SUCCESS_CRITERION,
    EpisodeResult,
    coverage_summary,
    dominant_mode,
    evaluate_placement,
    positive_modes,
    slot_regions,
    symmetric_rotation_error,
)
from .records import (
    cloud_from_dict,
    cloud_to_dict,
    demo_to_record,
    dumps_record,
    gen_dataset,
    read_records,
    record_to_demo,
)
from .scenes import (
    CABINET,
    KINDS,
    SHELF,
    CabinetParams,
    SceneSpec,
    ShelfParams,
    cluster_scene,
    gen_cabinet_scene,
    gen_scene,
    gen_shelf_scene,
)

__all__ = [
    "initial_pose", "sample_demonstration",
    "SUCCESS_CRITERION", "EpisodeResult", "coverage_summary", "dominant_mode", "evaluate_placement", "positive_modes",
    "slot_regions", "symmetric_rotation_error",
    "cloud_from_dict", "cloud_to_dict", "demo_to_record", "dumps_record", "gen_dataset", "read_records",
    "record_to_demo",
    "CABINET", "KINDS", "SHELF", "CabinetParams", "SceneSpec", "ShelfParams", "cluster_scene",
    "gen_cabinet_scene", "gen_scene", "gen_shelf_scene",
]
