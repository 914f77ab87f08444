"""Exception hierarchy shared across the toolkit."""


class SprayEvalError(Exception):
    """Base class for all toolkit errors."""


class TensorFormatError(SprayEvalError):
    """File is not a valid TNSR/LMSK container (bad magic, version, or rank)."""


class TensorCorruptionError(SprayEvalError):
    """Container header and payload disagree, or payload holds non-finite data."""


class ContractError(SprayEvalError):
    """Caller violated an interface contract (shape or channel-count mismatch)."""


class ClassAbsentError(SprayEvalError):
    """Requested class is not predicted anywhere on the unperturbed image."""


class TransportError(SprayEvalError):
    """External engine protocol violation (malformed or truncated frame)."""


class EngineLostError(SprayEvalError):
    """External engine process died before completing a request."""


class DataError(SprayEvalError):
    """Dataset content is invalid (missing masks, unknown class ids, bad CSV)."""


class ConfigError(SprayEvalError):
    """Run configuration is invalid or inconsistent."""
