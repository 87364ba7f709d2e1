import logging

__all__ = ["configure_logging"]

_PACKAGE = __name__.split('.')[0]
_FORMAT = '[%(name)s][%(levelname)s] %(message)s'


def configure_logging(level : int | str = logging.INFO) -> logging.Logger:
    """
    Attach a console handler to the package logger.

    The library itself never configures logging; applications (and the
    ``niche-nas`` command line) call this once. Calling it again only
    updates the level.

    Parameters
    ----------
    level : int | str
        Logging level for the package logger and its handler.

    Returns
    -------
    logging.Logger
        The package logger.
    """
    logger = logging.getLogger(_PACKAGE)
    logger.setLevel(level)

    # Add console handler if not already present
    if not logger.handlers:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(logging.Formatter(_FORMAT))
        logger.addHandler(console_handler)
    for handler in logger.handlers:
        handler.setLevel(level)
    return logger
