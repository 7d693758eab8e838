"""
Run configuration.

Values come from, lowest precedence first: the serializer field defaults, a
JSON config file (flat dotted keys such as ``"schedule.T"``, or nested
objects) and command-line overrides in the same dotted form. The resolved
configuration is validated by RunConfigSerializer and then turned into the
frozen dataclasses the library modules take.
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from django.conf import settings

from dapstore.afford import DenoiserConfig, NoiseSchedule, make_schedule
from dapstore.corr import CorrConfig
from dapstore.exceptions import ConfigError, UsageError
from dapstore.labeling import MIN_CROP_POINTS, LabelConfig
from dapstore.pose import InferConfig
from .serializers import RunConfigSerializer

logger = logging.getLogger(__name__)

SECTIONS = ("label", "dataset", "schedule", "denoiser", "corr", "train", "infer", "eval", "paths")


@dataclass(frozen=True)
class DatasetConfig:
    scenes: int = 50
    demos: int = 4
    container_voxel: float = 0.03
    object_voxel: float = 0.015
    slot_count: int = 4

    def __post_init__(self):
        if self.container_voxel <= 0 or self.object_voxel <= 0:
            raise ConfigError(
                f"voxel sizes must be positive, got {self.container_voxel} and {self.object_voxel}")


@dataclass(frozen=True)
class ScheduleConfig:
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        self.build()

    def build(self) -> NoiseSchedule:
        return make_schedule(self.T, self.beta_start, self.beta_end)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    lr: float = 1e-3
    eval_every: int = 100

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 50
    coverage_samples: int = 64


@dataclass(frozen=True)
class PathsConfig:
    dataset: Path
    checkpoints: Path
    reports: Path

    @classmethod
    def under(cls, root, dataset=None, checkpoints=None, reports=None) -> "PathsConfig":
        root = Path(root)
        return cls(
            Path(dataset) if dataset else root / "dataset.jsonl",
            Path(checkpoints) if checkpoints else root / "checkpoints",
            Path(reports) if reports else root / "reports",
        )

    def checkpoint(self, which: str) -> Path:
        return self.checkpoints / f"{which}.ckpt"

    def training_log(self, which: str) -> Path:
        return self.checkpoints / f"{which}.log.jsonl"

    def report(self, mode: str) -> Path:
        return self.reports / f"eval_{mode}.json"


@dataclass(frozen=True)
class RunConfig:
    task: str
    seed: int
    label: LabelConfig
    dataset: DatasetConfig
    schedule: ScheduleConfig
    denoiser: DenoiserConfig
    corr: CorrConfig
    train: TrainConfig
    infer: InferConfig
    eval: EvalConfig
    paths: PathsConfig

    @classmethod
    def from_validated(cls, data: dict, out=None) -> "RunConfig":
        corr = CorrConfig(**data["corr"])
        if corr.min_points > MIN_CROP_POINTS:
            raise ConfigError(
                f"corr.gva_k and corr.encoder_k must not exceed {MIN_CROP_POINTS}, "
                f"the smallest demo crop, got {corr.gva_k} and {corr.encoder_k}")
        return cls(
            task=data["task"],
            seed=int(data["seed"]),
            label=LabelConfig(**data["label"]),
            dataset=DatasetConfig(**data["dataset"]),
            schedule=ScheduleConfig(**data["schedule"]),
            denoiser=DenoiserConfig(**data["denoiser"]),
            corr=corr,
            train=TrainConfig(**data["train"]),
            infer=InferConfig(**data["infer"], match_threshold=corr.match_threshold),
            eval=EvalConfig(**data["eval"]),
            paths=PathsConfig.under(out or settings.DAP_OUTPUT_ROOT, **data["paths"]),
        )

    def to_dict(self) -> dict:
        """Nested, fully resolved configuration (the form echoed into outputs)"""
        data = {"task": self.task, "seed": self.seed}
        for section in SECTIONS:
            if section == "paths":
                data[section] = {name: str(value) for name, value in asdict(self.paths).items()}
            else:
                data[section] = asdict(getattr(self, section))
        # match_threshold is configured under corr
        data["infer"].pop("match_threshold")
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def flatten(data: dict) -> dict:
    """Nested sections to dotted keys; dotted keys pass through"""
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            for name, inner in value.items():
                flat[f"{key}.{name}"] = inner
        else:
            flat[key] = value
    return flat


def unflatten(flat: dict) -> dict:
    """Dotted keys to nested sections; every section is present"""
    nested = {section: {} for section in SECTIONS}
    for key, value in flat.items():
        section, dot, name = key.partition(".")
        if dot:
            nested.setdefault(section, {})[name] = value
        else:
            nested[key] = value
    return nested


def config_keys() -> list:
    """Every dotted key a config file or command line may set"""
    keys = []
    for name, field in RunConfigSerializer().fields.items():
        if name in SECTIONS:
            keys.extend(f"{name}.{inner}" for inner in field.fields)
        else:
            keys.append(name)
    return keys


def read_config_file(path) -> dict:
    """
    Raises:
        ConfigError: the file is not a JSON object
        OSError: the file cannot be read
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return flatten(data)


def _format_errors(errors, prefix="") -> str:
    parts = []
    for key, value in errors.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            parts.append(_format_errors(value, f"{name}."))
        else:
            parts.append(f"{name}: {' '.join(str(v) for v in value)}")
    return "; ".join(parts)


def load_config(config_file=None, overrides: Optional[dict] = None, out=None) -> RunConfig:
    """
    Resolve the run configuration.

    Args:
        config_file: optional JSON config path
        overrides: dotted key -> value; None values are ignored
        out: output root for paths not set explicitly

    Raises:
        UsageError: no task given anywhere
        ConfigError: unknown keys or invalid values
    """
    flat = read_config_file(config_file) if config_file else {}
    flat.update({key: value for key, value in (overrides or {}).items() if value is not None})

    unknown = sorted(set(flat) - set(config_keys()))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if flat.get("task") in (None, ""):
        raise UsageError("a task is required: pass --task shelf|cabinet or set \"task\" in the config file")

    serializer = RunConfigSerializer(data=unflatten(flat))
    if not serializer.is_valid():
        raise ConfigError(f"invalid configuration: {_format_errors(serializer.errors)}")
    cfg = RunConfig.from_validated(serializer.validated_data, out)
    logger.debug(f"Resolved configuration: {cfg.dumps()}")
    return cfg
