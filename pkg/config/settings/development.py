"""
Development settings for the OCFL laboratory.
"""
from .base import *  # noqa

DEBUG = True

# Development logging - more verbose unless OCFL_LOG is set
if 'OCFL_LOG' not in env.ENVIRON:  # noqa
    LOGGING['loggers']['apps']['level'] = 'DEBUG'  # noqa
    LOGGING['loggers']['core']['level'] = 'DEBUG'  # noqa
