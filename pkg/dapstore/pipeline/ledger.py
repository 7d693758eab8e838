"""
Status transitions of run ledger records: pending -> processing -> completed | failed.
"""
import logging

from django.db import transaction
from django.utils import timezone

logger = logging.getLogger(__name__)


def start_run(model, **fields):
    """Create a pending record and move it to processing"""
    run = model.objects.create(**fields)
    with transaction.atomic():
        run = model.objects.select_for_update().get(id=run.id)
        if run.status != 'pending':
            logger.warning(f"{run} is not pending (status: {run.status})")
        run.status = 'processing'
        run.save(update_fields=['status', 'updated_at'])
    logger.info(f"Started {run}")
    return run


def complete_run(run, **fields):
    """Store results on a processing record and mark it completed"""
    with transaction.atomic():
        for name, value in fields.items():
            setattr(run, name, value)
        run.status = 'completed'
        run.completed_at = timezone.now()
        run.save()
    logger.info(f"Completed {run}")
    return run


def mark_run_failed(run, reason: str, **fields):
    """Mark a record as failed, keeping whatever results it already has"""
    try:
        for name, value in fields.items():
            setattr(run, name, value)
        run.status = 'failed'
        run.failure_reason = reason
        run.completed_at = timezone.now()
        run.save()
        logger.warning(f"{run} failed: {reason}")
    except Exception as e:
        logger.error(f"Failed to mark run as failed: {str(e)}")
    return run
