__all__ = [
    'NicheNASError',
    'ArchDecodeError',
    'ConfigError',
    'StoreError',
    'StoreLoadError',
    'ArchNotFoundError',
    'PredictorError',
    'ProposalParseError',
    'ServiceError',
    'ServiceUnavailableError',
    'TranscriptMissError',
]


class NicheNASError(Exception):
    """
    Base class for all errors raised by ``niche_nas``.
    """


class ArchDecodeError(NicheNASError, ValueError):
    """
    A string is not a canonical cell encoding.
    """


class ConfigError(NicheNASError, ValueError):
    """
    Invalid engine, niche or command-line configuration.
    """


class StoreError(NicheNASError, RuntimeError):
    """
    A benchmark store could not be built, read or queried.
    """


class StoreLoadError(StoreError):
    """
    A benchmark file failed schema or value validation.

    Parameters
    ----------
    msg : str
        Human readable description of the problem.
    path : str | None
        The file being loaded.
    row : int | None
        1-based line number of the offending row (the header is line 1 for CSV).
    column : str | None
        The offending column, if the problem is tied to one.
    """

    def __init__(
        self,
        msg : str,
        path : str | None = None,
        row : int | None = None,
        column : str | None = None,
    ):
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path is not None:
            where.append(f"file={path!r}")
        if row is not None:
            where.append(f"line={row}")
        if column is not None:
            where.append(f"column={column!r}")
        if where:
            msg = f"{msg} ({', '.join(where)})"
        super().__init__(msg)


class ArchNotFoundError(StoreError, KeyError):
    """
    The requested architecture (or dataset) is not present in the store.
    """

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class PredictorError(NicheNASError, RuntimeError):
    """
    A predictor could not be fitted, evaluated, saved or loaded.
    """


class ProposalParseError(NicheNASError, ValueError):
    """
    A text-service response did not contain a parseable JSON array.
    """


class ServiceError(NicheNASError, RuntimeError):
    """
    Base class for text-service failures.
    """


class ServiceUnavailableError(ServiceError):
    """
    The text service could not be reached after all retries.
    """


class TranscriptMissError(ServiceError):
    """
    Replay mode found no recorded response for a request.
    """
