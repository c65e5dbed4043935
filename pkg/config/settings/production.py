"""
Production settings for the OCFL laboratory (unattended batch hosts).
"""
from .base import *  # noqa

DEBUG = False

# Production logging
LOGGING['handlers']['console']['level'] = 'WARNING'  # noqa
LOGGING['handlers']['file']['filename'] = env(  # noqa
    'OCFL_LOG_FILE', default=str(LOG_DIR / 'ocfl.log')  # noqa
)
