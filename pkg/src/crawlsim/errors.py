"""Exception types shared across the package."""


class CrawlsimError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(CrawlsimError, ValueError):
    """Invalid configuration or parameter values."""


class QueryError(CrawlsimError, ValueError):
    """Terrain query outside the valid domain."""


class BoundaryError(CrawlsimError, ValueError):
    """Vehicle footprint left the map; the harness records the trial as failed."""


class ShapeError(CrawlsimError, ValueError):
    """Array shape inconsistent with the operation's contract."""


class DataError(CrawlsimError, ValueError):
    """Dataset / demonstration contents unusable for the requested operation."""


class StorageError(CrawlsimError, OSError):
    """Failure writing or reading on-disk artifacts."""
