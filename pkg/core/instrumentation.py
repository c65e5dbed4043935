"""
Stage timing for long-running laboratory work.
"""
import logging
import time
from contextlib import contextmanager

logger = logging.getLogger('apps')


@contextmanager
def log_stage(stage, level=logging.INFO, **context):
    """
    Log a stage start and its completion with timing information.

    Extra keyword arguments (seed, round, cluster...) are attached to both
    records and rendered into the message.
    """
    label = ' '.join(f"{key}={value}" for key, value in context.items())
    start_time = time.perf_counter()
    logger.log(level, f"Stage started: {stage} {label}".rstrip(), extra={'stage': stage, **context})
    try:
        yield
    except Exception:
        duration = time.perf_counter() - start_time
        logger.warning(
            f"Stage failed: {stage} {label} - Duration: {duration:.2f}s",
            extra={'stage': stage, 'duration': duration, **context},
        )
        raise
    duration = time.perf_counter() - start_time
    logger.log(
        level,
        f"Stage completed: {stage} {label} - Duration: {duration:.2f}s",
        extra={'stage': stage, 'duration': duration, **context},
    )
