"""
Error taxonomy for the laboratory.

Contract violations derive from ValidationError, state violations from
BusinessLogicError. Soft failures (AP non-convergence, degenerate splits,
HDBSCAN noise attachment) are result flags and never raised.
"""
import logging

logger = logging.getLogger(__name__)


class OcflError(Exception):
    """Base error carrying a machine-readable code and a details mapping."""

    code = 'ocfl_error'

    def __init__(self, message='', **details):
        super().__init__(message)
        self.details = details


class ValidationError(OcflError):
    """Input contract violation."""

    code = 'validation_error'


class BusinessLogicError(OcflError):
    """Operation invoked in a state that does not allow it."""

    code = 'business_logic_error'


class DimensionMismatch(ValidationError):
    code = 'dimension_mismatch'


class ZeroVector(ValidationError):
    code = 'zero_vector'

    def __init__(self, message='', index=None, **details):
        super().__init__(message, index=index, **details)
        self.index = index


class NonFiniteValues(ValidationError):
    code = 'non_finite_values'


class InvalidNorm(ValidationError):
    code = 'invalid_norm'


class InvalidLabel(ValidationError):
    code = 'invalid_label'


class InvalidK(ValidationError):
    code = 'invalid_k'


class InvalidMinClusterSize(ValidationError):
    code = 'invalid_min_cluster_size'


class MismatchedClients(ValidationError):
    code = 'mismatched_clients'


class EmptyCurve(ValidationError):
    code = 'empty_curve'


class EmptyDataset(ValidationError):
    code = 'empty_dataset'


class InsufficientClasses(ValidationError):
    code = 'insufficient_classes'


class ConfigParse(ValidationError):
    code = 'config_parse'

    def __init__(self, message='', key=None, **details):
        super().__init__(message, key=key, **details)
        self.key = key


class AlreadyFired(BusinessLogicError):
    code = 'already_fired'


class DegenerateAllocation(BusinessLogicError):
    code = 'degenerate_allocation'


class EmptyEvaluationSet(BusinessLogicError):
    code = 'empty_evaluation_set'


class MissingCheckpoint(BusinessLogicError):
    code = 'missing_checkpoint'


class MissingRun(BusinessLogicError):
    code = 'missing_run'


class IntegrityError(BusinessLogicError):
    code = 'integrity_error'


class IoError(BusinessLogicError):
    code = 'io_error'


def error_payload(exc, context=None):
    """
    Log an exception and return it in the consistent error shape.

    The payload is what gets persisted into manifests and InDe reports when a
    seed or a cluster evaluation aborts.
    """
    context = context or {}
    logger.error(
        f"{exc.__class__.__name__}: {exc}",
        exc_info=not isinstance(exc, OcflError),
        extra={'context': context},
    )

    details = dict(getattr(exc, 'details', {}) or {})
    details.update(context)
    return {
        'error': {
            'message': str(exc),
            'code': getattr(exc, 'code', 'unexpected_error'),
            'details': {key: _jsonable(value) for key, value in sorted(details.items())},
        }
    }


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)
