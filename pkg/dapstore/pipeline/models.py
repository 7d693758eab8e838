from django.db import models
import uuid


STATUS_CHOICES = [
    ('pending', 'Pending'),
    ('processing', 'Processing'),
    ('completed', 'Completed'),
    ('failed', 'Failed'),
]

# A training run converges when the mean loss of its last CONVERGENCE_WINDOW steps
# is at most CONVERGENCE_RATIO times the mean of its first CONVERGENCE_WINDOW steps.
CONVERGENCE_WINDOW = 100
CONVERGENCE_RATIO = 0.5


class TrainingRun(models.Model):
    """
    Audit record of one training command (afford, cap or corr)
    """
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)

    WHICH_CHOICES = [
        ('afford', 'Diffusion affordance'),
        ('cap', 'Classification affordance'),
        ('corr', 'Correspondence'),
    ]
    which = models.CharField(max_length=10, choices=WHICH_CHOICES)
    task = models.CharField(max_length=20)
    seed = models.CharField(
        max_length=20, help_text="Run seed (u64, stored as text)")

    # Training results
    steps = models.PositiveIntegerField(default=0)
    initial_loss = models.FloatField(
        null=True, blank=True, help_text="Mean loss over the first steps")
    final_loss = models.FloatField(
        null=True, blank=True, help_text="Mean loss over the last steps")
    checkpoint_path = models.CharField(max_length=1024, blank=True, default='')
    log_path = models.CharField(max_length=1024, blank=True, default='')
    config = models.JSONField(
        default=dict, blank=True, help_text="Effective run configuration")

    # Status tracking
    STATUS_CHOICES = STATUS_CHOICES
    status = models.CharField(
        max_length=20, choices=STATUS_CHOICES, default='pending')
    failure_reason = models.TextField(
        blank=True, null=True, help_text="Reason for failure if status is 'failed'")

    # Timestamps
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    completed_at = models.DateTimeField(
        null=True, blank=True, help_text="When training finished")

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['status'], name='pipeline_tr_status_idx'),
            models.Index(fields=['which', 'task'], name='pipeline_tr_which_task_idx'),
        ]

    @property
    def converged(self):
        if self.initial_loss is None or self.final_loss is None:
            return None
        return self.final_loss <= CONVERGENCE_RATIO * self.initial_loss

    def __str__(self):
        status_str = dict(self.STATUS_CHOICES).get(self.status, self.status)
        if self.status == 'completed' and self.final_loss is not None:
            return f"Train {self.which}/{self.task} seed {self.seed} - {status_str} (loss {self.final_loss:.4f})"
        return f"Train {self.which}/{self.task} seed {self.seed} - {status_str}"


class EvaluationRun(models.Model):
    """
    Audit record of one evaluation command (dap or cap)
    """
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)

    MODE_CHOICES = [
        ('dap', 'Diffusion affordance, K candidates'),
        ('cap', 'Classification affordance, single candidate'),
    ]
    mode = models.CharField(max_length=10, choices=MODE_CHOICES)
    task = models.CharField(max_length=20)
    seed = models.CharField(
        max_length=20, help_text="Run seed (u64, stored as text)")

    # Evaluation results
    episodes = models.PositiveIntegerField(default=0)
    success_rate = models.FloatField(null=True, blank=True)
    report_path = models.CharField(max_length=1024, blank=True, default='')
    config = models.JSONField(
        default=dict, blank=True, help_text="Effective run configuration")

    # Status tracking
    STATUS_CHOICES = STATUS_CHOICES
    status = models.CharField(
        max_length=20, choices=STATUS_CHOICES, default='pending')
    failure_reason = models.TextField(
        blank=True, null=True, help_text="Reason for failure if status is 'failed'")

    # Timestamps
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    completed_at = models.DateTimeField(
        null=True, blank=True, help_text="When evaluation finished")

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['status'], name='pipeline_ev_status_idx'),
            models.Index(fields=['mode', 'task'], name='pipeline_ev_mode_task_idx'),
        ]

    def __str__(self):
        status_str = dict(self.STATUS_CHOICES).get(self.status, self.status)
        if self.status == 'completed' and self.success_rate is not None:
            return f"Eval {self.mode}/{self.task} seed {self.seed} - {status_str} ({self.success_rate:.2f})"
        return f"Eval {self.mode}/{self.task} seed {self.seed} - {status_str}"
