from abc import abstractmethod
from typing import Protocol, runtime_checkable

__all__ = ['SupportsPrediction']


@runtime_checkable
class SupportsPrediction(Protocol):
    """
    Structural interface of a performance surrogate.

    Anything with a ``kind`` label and a pure ``predict`` can drive the
    engine's selection and be scored by ``evaluate_predictor``.
    """

    kind : str

    @abstractmethod
    def predict(self, arch : str) -> float:
        """
        Predicted performance of ``arch`` (higher is better).

        Raises
        ------
        ArchNotFoundError
            If the architecture cannot be resolved.
        """
        ...
