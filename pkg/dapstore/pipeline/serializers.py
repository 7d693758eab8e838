import numpy as np
from rest_framework import serializers

from dapstore.env import KINDS
from .models import EvaluationRun, TrainingRun

SEED_MAX = 2 ** 64 - 1


# --- Run configuration ---------------------------------------------------
# Field defaults are the configuration defaults.

class LabelConfigSerializer(serializers.Serializer):
    eps_place = serializers.FloatField(default=0.04)
    eps_corr = serializers.FloatField(default=0.02)
    crop_scale_min = serializers.FloatField(default=1.2)
    crop_scale_max = serializers.FloatField(default=2.0)


class DatasetConfigSerializer(serializers.Serializer):
    scenes = serializers.IntegerField(default=50, min_value=1)
    demos = serializers.IntegerField(default=4, min_value=1)
    container_voxel = serializers.FloatField(default=0.03)
    object_voxel = serializers.FloatField(default=0.015)
    slot_count = serializers.IntegerField(default=4, min_value=2)


class ScheduleConfigSerializer(serializers.Serializer):
    T = serializers.IntegerField(default=100, min_value=1)
    beta_start = serializers.FloatField(default=1e-4)
    beta_end = serializers.FloatField(default=0.02)


class DenoiserConfigSerializer(serializers.Serializer):
    token_dim = serializers.IntegerField(default=64)
    num_layers = serializers.IntegerField(default=3)
    num_heads = serializers.IntegerField(default=4)
    fourier_freqs = serializers.IntegerField(default=6)
    encoder_k = serializers.IntegerField(default=8)
    time_embed_dim = serializers.IntegerField(default=64)


class CorrConfigSerializer(serializers.Serializer):
    token_dim = serializers.IntegerField(default=64)
    num_blocks = serializers.IntegerField(default=2)
    gva_k = serializers.IntegerField(default=8)
    gva_groups = serializers.IntegerField(default=8)
    gamma = serializers.FloatField(default=2.0)
    match_threshold = serializers.FloatField(default=0.5)
    encoder_k = serializers.IntegerField(default=8)


class TrainConfigSerializer(serializers.Serializer):
    steps = serializers.IntegerField(default=3000, min_value=1)
    lr = serializers.FloatField(default=1e-3)
    eval_every = serializers.IntegerField(default=100, min_value=1)


class InferConfigSerializer(serializers.Serializer):
    K = serializers.IntegerField(default=8, min_value=1)
    collision_margin = serializers.FloatField(default=0.005)
    contact_offset = serializers.FloatField(default=0.0, min_value=0.0)


class EvalConfigSerializer(serializers.Serializer):
    episodes = serializers.IntegerField(default=50, min_value=1)
    coverage_samples = serializers.IntegerField(default=64, min_value=1)


class PathsConfigSerializer(serializers.Serializer):
    # Unset paths are placed under the output root
    dataset = serializers.CharField(required=False)
    checkpoints = serializers.CharField(required=False)
    reports = serializers.CharField(required=False)


class RunConfigSerializer(serializers.Serializer):
    """
    Full run configuration. Every section must be present (possibly empty)
    so its field defaults apply; config.load_config takes care of that.
    """
    task = serializers.ChoiceField(choices=KINDS)
    seed = serializers.IntegerField(default=0, min_value=0, max_value=SEED_MAX)
    label = LabelConfigSerializer()
    dataset = DatasetConfigSerializer()
    schedule = ScheduleConfigSerializer()
    denoiser = DenoiserConfigSerializer()
    corr = CorrConfigSerializer()
    train = TrainConfigSerializer()
    infer = InferConfigSerializer()
    eval = EvalConfigSerializer()
    paths = PathsConfigSerializer()


# --- Dataset records and scene files --------------------------------------

def _points(value, name):
    try:
        array = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise serializers.ValidationError(f"{name} must be a list of [x, y, z] triples")
    if array.ndim != 2 or array.shape[1] != 3:
        raise serializers.ValidationError(f"{name} must have shape (N, 3), got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise serializers.ValidationError(f"{name} contains non-finite values")
    return value


class CloudSerializer(serializers.Serializer):
    positions = serializers.JSONField()
    normals = serializers.JSONField()

    def validate_positions(self, value):
        return _points(value, "positions")

    def validate_normals(self, value):
        return _points(value, "normals")

    def validate(self, data):
        if len(data["positions"]) != len(data["normals"]):
            raise serializers.ValidationError(
                f"{len(data['positions'])} positions but {len(data['normals'])} normals")
        if not data["positions"]:
            raise serializers.ValidationError("cloud has no points")
        return data


class TransformSerializer(serializers.Serializer):
    rotation = serializers.ListField(child=serializers.FloatField(), min_length=9, max_length=9)
    translation = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3)


class SceneMetaSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=KINDS)
    slot_count = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(required=False, min_value=0, max_value=SEED_MAX)
    scene_index = serializers.IntegerField(required=False, min_value=0)


class DatasetRecordSerializer(serializers.Serializer):
    """One demonstration line of a dataset file"""
    container = CloudSerializer()
    object = CloudSerializer()
    goal = TransformSerializer()
    mode_id = serializers.IntegerField(min_value=0, allow_null=True)
    scene_meta = SceneMetaSerializer()


class SceneFileSerializer(serializers.Serializer):
    """Input of the infer command: a dataset record or just the two clouds"""
    container = CloudSerializer()
    object = CloudSerializer()


# --- Evaluation report ---------------------------------------------------

class EpisodeSerializer(serializers.Serializer):
    episode = serializers.IntegerField(min_value=0)
    success = serializers.BooleanField()
    matched_mode = serializers.IntegerField(allow_null=True)
    nearest_mode = serializers.IntegerField(allow_null=True)
    collision_points = serializers.IntegerField(min_value=0, allow_null=True)
    pos_error = serializers.FloatField(allow_null=True)
    rot_error = serializers.FloatField(allow_null=True)
    rank_size = serializers.IntegerField(min_value=0)
    positive_modes = serializers.ListField(child=serializers.IntegerField())
    failures = serializers.DictField(child=serializers.IntegerField(min_value=0))


class CoverageSerializer(serializers.Serializer):
    samples = serializers.IntegerField(min_value=1)
    dominant_counts = serializers.DictField(child=serializers.IntegerField(min_value=0))
    no_mode = serializers.IntegerField(min_value=0)
    single_slot_fraction = serializers.FloatField(min_value=0.0, max_value=1.0)


class EvaluationReportSerializer(serializers.Serializer):
    mode = serializers.ChoiceField(choices=["dap", "cap"])
    task = serializers.ChoiceField(choices=KINDS)
    episodes = serializers.IntegerField(min_value=1)
    success_rate = serializers.FloatField(min_value=0.0, max_value=1.0)
    mode_coverage = serializers.FloatField(min_value=0.0, max_value=1.0)
    mode_histogram = serializers.DictField(child=serializers.IntegerField(min_value=0))
    multi_mode_fraction = serializers.FloatField(min_value=0.0, max_value=1.0)
    multimodality = CoverageSerializer(allow_null=True)
    mean_pos_error = serializers.FloatField(allow_null=True)
    mean_rot_error = serializers.FloatField(allow_null=True)
    failures = serializers.DictField(child=serializers.IntegerField(min_value=0))
    results = EpisodeSerializer(many=True)
    success_criterion = serializers.CharField()
    config = serializers.DictField()

    def validate(self, data):
        if len(data["results"]) != data["episodes"]:
            raise serializers.ValidationError(
                f"report lists {len(data['results'])} results for {data['episodes']} episodes")
        return data


# --- Run ledger ----------------------------------------------------------

class TrainingRunSerializer(serializers.ModelSerializer):
    """
    Summary printed by the training commands
    """
    converged = serializers.SerializerMethodField()

    class Meta:
        model = TrainingRun
        fields = [
            'which', 'task', 'seed', 'status', 'steps',
            'initial_loss', 'final_loss', 'converged',
            'checkpoint_path', 'log_path',
        ]
        read_only_fields = fields

    def get_converged(self, obj):
        return obj.converged


class EvaluationRunSerializer(serializers.ModelSerializer):
    """
    Summary printed by the eval command
    """

    class Meta:
        model = EvaluationRun
        fields = [
            'mode', 'task', 'seed', 'status', 'episodes',
            'success_rate', 'report_path',
        ]
        read_only_fields = fields
