# Generated by Django 5.1.6 on 2026-10-17 09:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EvaluationRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('mode', models.CharField(choices=[('dap', 'Diffusion affordance, K candidates'), ('cap', 'Classification affordance, single candidate')], max_length=10)),
                ('task', models.CharField(max_length=20)),
                ('seed', models.CharField(help_text='Run seed (u64, stored as text)', max_length=20)),
                ('episodes', models.PositiveIntegerField(default=0)),
                ('success_rate', models.FloatField(blank=True, null=True)),
                ('report_path', models.CharField(blank=True, default='', max_length=1024)),
                ('config', models.JSONField(blank=True, default=dict, help_text='Effective run configuration')),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('processing', 'Processing'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('failure_reason', models.TextField(blank=True, help_text="Reason for failure if status is 'failed'", null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('completed_at', models.DateTimeField(blank=True, help_text='When evaluation finished', null=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['status'], name='pipeline_ev_status_idx'), models.Index(fields=['mode', 'task'], name='pipeline_ev_mode_task_idx')],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('which', models.CharField(choices=[('afford', 'Diffusion affordance'), ('cap', 'Classification affordance'), ('corr', 'Correspondence')], max_length=10)),
                ('task', models.CharField(max_length=20)),
                ('seed', models.CharField(help_text='Run seed (u64, stored as text)', max_length=20)),
                ('steps', models.PositiveIntegerField(default=0)),
                ('initial_loss', models.FloatField(blank=True, help_text='Mean loss over the first steps', null=True)),
                ('final_loss', models.FloatField(blank=True, help_text='Mean loss over the last steps', null=True)),
                ('checkpoint_path', models.CharField(blank=True, default='', max_length=1024)),
                ('log_path', models.CharField(blank=True, default='', max_length=1024)),
                ('config', models.JSONField(blank=True, default=dict, help_text='Effective run configuration')),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('processing', 'Processing'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('failure_reason', models.TextField(blank=True, help_text="Reason for failure if status is 'failed'", null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('completed_at', models.DateTimeField(blank=True, help_text='When training finished', null=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['status'], name='pipeline_tr_status_idx'), models.Index(fields=['which', 'task'], name='pipeline_tr_which_task_idx')],
            },
        ),
    ]
