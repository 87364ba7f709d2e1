import math
from dataclasses import replace

from ..errors import ProposalParseError, ServiceError
from .baseline import mutation_proposal
from .knowledge_base import update_knowledge_base
from .operator_base import ArchitectureOperator, GenerationContext, KnowledgeUpdate, OperatorResult, ParentRecord
from .prompts import build_stage1_prompt, build_stage2_prompt
from .proposals import CandidateProposal, collect_proposals
from .text_service import TextServiceClient

import logging
logger = logging.getLogger(__name__)

__all__ = ['LLMOperator', 'llm_generate']


class LLMOperator(ArchitectureOperator):
    """
    Two-stage co-evolution operator backed by a text service.

    Stage 1 (`update_knowledge`) revises the niche's knowledge base from the
    children evaluated in the previous generation. Stage 2 (`_generate`)
    asks for children in ``ceil(n_children / children_per_call)`` calls. A
    call that fails (service error or unparseable response) is retried up to
    ``max_retries`` times; a call that still yields nothing is replaced by
    one baseline mutation.

    Parameters
    ----------
    client : TextServiceClient
        The service client (live, record or replay).
    children_per_call : int
        Children requested per stage-2 call.
    max_retries : int
        Extra attempts per failed stage-2 call.
    fallback_per_call : bool
        Replace each empty stage-2 call by one baseline mutation.
    """
    kind = "llm"

    def __init__(
        self,
        client : TextServiceClient,
        children_per_call : int = 1,
        max_retries : int = 2,
        fallback_per_call : bool = True,
    ):
        if children_per_call < 1:
            raise ValueError(f"children_per_call must be >= 1, got {children_per_call}")
        super().__init__(
            client=client,
            children_per_call=children_per_call,
            max_retries=max_retries,
            fallback_per_call=fallback_per_call,
        )

    def update_knowledge(self, ctx : GenerationContext, results : list[ParentRecord]) -> KnowledgeUpdate:
        prompt = build_stage1_prompt(results, ctx.knowledge_base, ctx)
        try:
            text = self.client.complete(prompt)
        except ServiceError as e:
            logger.warning(f"Stage 1 failed for niche {ctx.niche.niche_id} at generation {ctx.generation}: {e}")
            return KnowledgeUpdate(ctx.knowledge_base, calls=1, failures=1, errors=[str(e)])
        kb = update_knowledge_base(ctx.knowledge_base, text, ctx.generation)
        return KnowledgeUpdate(kb, calls=1)

    def _call(self, ctx : GenerationContext, result : OperatorResult) -> list[CandidateProposal]:
        prompt = build_stage2_prompt(ctx)
        for attempt in range(self.max_retries + 1):
            result.calls += 1
            try:
                parsed = collect_proposals(self.client.complete(prompt))
            except (ServiceError, ProposalParseError) as e:
                result.failures += 1
                result.errors.append(f"niche {ctx.niche.niche_id} gen {ctx.generation}: {e}")
                logger.warning(
                    f"Stage 2 call failed for niche {ctx.niche.niche_id} "
                    f"(attempt {attempt + 1}/{self.max_retries + 1}): {e}"
                )
                continue
            result.invalid += len(parsed.diagnostics)
            return parsed.proposals[:ctx.n_children]
        return []

    def _generate(self, ctx : GenerationContext) -> OperatorResult:
        result = OperatorResult()
        remaining = ctx.n_children
        for c in range(math.ceil(ctx.n_children / self.children_per_call)):
            n = min(self.children_per_call, remaining)
            remaining -= n
            proposals = self._call(replace(ctx, n_children=n), result)
            if not proposals and self.fallback_per_call and ctx.parents:
                proposals = [mutation_proposal(ctx, child_id=f"fallback-{c + 1}")]
                result.fallbacks += 1
            result.proposals.extend(proposals)
        return result


def llm_generate(
    ctx : GenerationContext,
    client : TextServiceClient,
    children_per_call : int = 1,
    max_retries : int = 2,
) -> OperatorResult:
    """
    One stage-2 round for ``ctx`` without fallback children: when every
    call fails the result has no proposals and the errors are recorded.
    """
    operator = LLMOperator(client, children_per_call, max_retries, fallback_per_call=False)
    return operator._generate(ctx)
