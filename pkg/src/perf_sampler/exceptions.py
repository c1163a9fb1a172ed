"""Exception hierarchy shared across the package."""


class PerfSamplerError(Exception):
    """Base class for all package errors."""


class SpaceError(PerfSamplerError, ValueError):
    """Malformed option, space or configuration."""


class DuplicateOrMissingName(SpaceError):
    pass


class UnknownOption(SpaceError):
    pass


class InadmissibleValue(SpaceError):
    pass


class CardinalityLimitExceeded(SpaceError):
    pass


class InvalidConfiguration(SpaceError):
    pass


class BudgetError(PerfSamplerError, ValueError):
    """Requested sample count cannot be satisfied by the space or sampler."""


class GatewayError(PerfSamplerError):
    """Any failure talking to a chat backend."""


class NoScriptEntry(GatewayError, LookupError):
    pass


class TransportError(GatewayError):
    pass


class NonRetryableStatus(GatewayError):
    def __init__(self, status_code, body=""):
        super().__init__(f"HTTP {status_code}: {body[:200]}")
        self.status_code = status_code
        self.body = body


class EmptyCompletion(GatewayError):
    pass


class ExtractionError(PerfSamplerError, ValueError):
    pass


class NoJsonFound(ExtractionError):
    pass


class SchemaMismatch(ExtractionError):
    def __init__(self, problems):
        super().__init__("; ".join(problems) if problems else "schema mismatch")
        self.problems = list(problems)


class GenerationExhausted(PerfSamplerError):
    """Every configuration generator returned nothing usable."""


class DatasetError(PerfSamplerError, ValueError):
    pass


class IncompleteDataset(DatasetError):
    pass


class DuplicateRow(DatasetError):
    pass


class HeaderMismatch(DatasetError):
    pass


class NonFiniteMetric(DatasetError):
    pass


class SpecError(PerfSamplerError, ValueError):
    """Malformed experiment spec or command-line usage."""
