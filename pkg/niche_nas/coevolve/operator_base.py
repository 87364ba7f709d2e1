from dataclasses import dataclass, field
import random

from ..arch_space import NichePredicate, decode
from .knowledge_base import KnowledgeBase
from .proposals import CandidateProposal

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'ParentRecord',
    'GenerationContext',
    'OperatorResult',
    'KnowledgeUpdate',
    'ArchitectureOperator',
]


@dataclass(frozen=True)
class ParentRecord:
    """
    An archive member as shown to an operator.

    ``score`` is the predictor output used for selection: accuracy in
    percent, or a rank score in ``[0, 1]`` for the proxy-rank predictors.
    """
    arch : str
    score : float
    latency : float
    rationale : str = ""


@dataclass
class GenerationContext:
    """
    Everything an operator needs to propose children for one niche in one
    generation.

    Parameters
    ----------
    device : str
        Target device id.
    dataset : str
        Target dataset.
    niche : NichePredicate
        The niche the children must stay in.
    parents : tuple[ParentRecord, ...]
        Current archive of the niche; every parent satisfies ``niche``.
    knowledge_base : KnowledgeBase
        Rules injected into generation prompts.
    n_children : int
        Number of children requested.
    rng : random.Random
        The niche's random stream.
    generation : int
        Index of the generation being produced.
    crossover_prob : float
        Crossover probability (enforced by the baseline, guidance for the LLM).
    latency_limit : float | None
        Optional latency bound (ms) stated in prompts.
    parent_selection : str
        ``'uniform'`` or ``'rank'``.
    score_is_accuracy : bool
        Whether parent scores are accuracies (percent) rather than rank scores.
    """
    device : str
    dataset : str
    niche : NichePredicate
    parents : tuple[ParentRecord, ...]
    knowledge_base : KnowledgeBase
    n_children : int
    rng : random.Random = field(default_factory=random.Random, repr=False)
    generation : int = 1
    crossover_prob : float = 0.5
    latency_limit : float | None = None
    parent_selection : str = "uniform"
    score_is_accuracy : bool = True

    def __post_init__(self):
        self.parents = tuple(self.parents)
        for p in self.parents:
            if not self.niche.contains(decode(p.arch)):
                raise ValueError(f"Parent {p.arch!r} is outside niche {self.niche.niche_id}")
        if self.n_children < 1:
            raise ValueError(f"n_children must be >= 1, got {self.n_children}")


@dataclass
class OperatorResult:
    """
    Proposals of one operator invocation plus its call accounting.
    """
    proposals : list[CandidateProposal] = field(default_factory=list)
    calls : int = 0
    failures : int = 0
    fallbacks : int = 0
    invalid : int = 0
    errors : list[str] = field(default_factory=list)


@dataclass
class KnowledgeUpdate:
    knowledge_base : KnowledgeBase
    calls : int = 0
    failures : int = 0
    errors : list[str] = field(default_factory=list)


class ArchitectureOperator:
    """
    Base class for architecture operators.

    ``generate`` is the entry point used by the engine: it calls
    ``_generate`` and, if that produced no proposal at all, substitutes one
    fallback child so every niche consumes its budget.

    Required methods to implement:
        - ``_generate``: propose children for a `GenerationContext`.

    Optional methods to override:
        - ``update_knowledge``: revise the knowledge base between generations.
          The default leaves it unchanged.
        - ``fallback``: the substitute child. Default: one baseline mutation.
    """
    kind = ""

    def __init__(self, **kwargs):
        for kwarg in kwargs:
            setattr(self, kwarg, kwargs[kwarg])

    def generate(self, ctx : GenerationContext) -> OperatorResult:
        result = self._generate(ctx)
        if not result.proposals:
            logger.warning(
                f"{self.__class__.__name__} produced no proposals for niche {ctx.niche.niche_id} "
                f"at generation {ctx.generation}; substituting a fallback child"
            )
            result.proposals.extend(self.fallback(ctx))
            result.fallbacks += 1
        return result

    def _generate(self, ctx : GenerationContext) -> OperatorResult:
        raise NotImplementedError(f"Class {self.__class__.__name__} must implement method _generate.")

    def update_knowledge(
        self,
        ctx : GenerationContext,
        results : list[ParentRecord],
    ) -> KnowledgeUpdate:
        return KnowledgeUpdate(ctx.knowledge_base)

    def fallback(self, ctx : GenerationContext) -> list[CandidateProposal]:
        from .baseline import mutation_proposal
        if not ctx.parents:
            return []
        return [mutation_proposal(ctx, child_id="fallback")]

    def __repr__(self):
        attrs = ', '.join([f'{k}={v}' for k, v in self.__dict__.items()])
        return f"{self.__class__.__name__}({attrs})"
