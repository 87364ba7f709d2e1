"""
Prompt builders of the two-stage co-evolution protocol.

Stage 1 asks the model to revise the niche's knowledge base from the
children evaluated in the previous generation; stage 2 asks it to propose
children. Both builders are pure functions of their inputs.
"""
from typing import Sequence

from .knowledge_base import KnowledgeBase
from .operator_base import GenerationContext, ParentRecord

__all__ = [
    'STAGE1_TEMPLATE',
    'STAGE2_TEMPLATE',
    'render_constraints',
    'render_parents',
    'render_knowledge_base',
    'build_stage1_prompt',
    'build_stage2_prompt',
]

STAGE1_TEMPLATE = """\
[System role]
You are a NAS analyst. Summarize design heuristics
for the given hardware-aware search space.

[Context]
- Target device and dataset: {device}, {dataset}
- Niche definition:
{constraints}
- Current knowledge base:
{knowledge_base}
- Top Pareto parents from generation {generation}:
{parents}

[Instruction]
1. Identify operator or connection patterns that
   consistently improve accuracy at acceptable latency.
2. Identify patterns that consistently hurt either metric.
3. Write explicit, concise rules of the form
   "Use/avoid ... because ...".
4. Remove or revise outdated rules that conflict with new evidence.

[Output format]
Return a JSON-like list called Updated_Knowledge_Base:
[
  {{rule_1}},
  {{rule_2}},
  ...
]"""

STAGE2_TEMPLATE = """\
[System role]
You are an expert NAS designer that performs evolutionary
search inside a given niche under hardware constraints.

[Context]
- Target device and dataset: {device}, {dataset}
- Niche constraints:
{constraints}
- Current Pareto parents with metrics:
{parents}

[Knowledge Base]
{knowledge_base}

[Evolution Operation]
Perform {n_children} new candidate generations.
For each child:
  * Decide Crossover or Mutation (suggested crossover probability: {crossover_prob:.2f}).
  * Describe exactly which blocks/edges you combine or modify.
  * Justify each change with expected effect on
    accuracy and latency{latency_bound}.
  * Ensure all constraints are satisfied.

[Output format]
Return a list of JSON objects:
[
  {{
    "child_id": "...",
    "operation": "crossover/mutation",
    "architecture_code": "...",
    "rationale": "..."
  }},
  ...
]"""

_INDENT = "  "


def render_constraints(ctx : GenerationContext) -> str:
    return "\n".join(_INDENT + line for line in ctx.niche.constraint_lines(ctx.latency_limit))


def render_parents(parents : Sequence[ParentRecord], score_is_accuracy : bool = True) -> str:
    if not parents:
        return f"{_INDENT}(none)"
    lines = []
    for i, p in enumerate(parents, start=1):
        score = f"accuracy={p.score:.2f}%" if score_is_accuracy else f"score={p.score:.4f}"
        lines.append(f"{_INDENT}{i}. {p.arch} | {score} | latency={p.latency:.3f} ms")
        if p.rationale:
            lines.append(f"{_INDENT}   rationale: {p.rationale}")
    return "\n".join(lines)


def render_knowledge_base(kb : KnowledgeBase, indent : str = "") -> str:
    if not len(kb):
        return f"{indent}(empty)"
    return "\n".join(f"{indent}{i}. {rule.text}" for i, rule in enumerate(kb, start=1))


def build_stage1_prompt(results : Sequence[ParentRecord], kb : KnowledgeBase, ctx : GenerationContext) -> str:
    """
    Knowledge-base update prompt.

    Parameters
    ----------
    results : Sequence[ParentRecord]
        Children evaluated in the previous generation, with their rationales.
    kb : KnowledgeBase
        The knowledge base to revise.
    ctx : GenerationContext
        Device, dataset, niche and generation being prepared.
    """
    return STAGE1_TEMPLATE.format(
        device=ctx.device,
        dataset=ctx.dataset,
        constraints=render_constraints(ctx),
        knowledge_base=render_knowledge_base(kb, indent=_INDENT),
        generation=ctx.generation - 1,
        parents=render_parents(results, ctx.score_is_accuracy),
    )


def build_stage2_prompt(ctx : GenerationContext) -> str:
    """
    Children generation prompt for ``ctx.n_children`` candidates.
    """
    latency_bound = ""
    if ctx.latency_limit is not None:
        latency_bound = f" (<= {ctx.latency_limit:.3f} ms)"
    return STAGE2_TEMPLATE.format(
        device=ctx.device,
        dataset=ctx.dataset,
        constraints=render_constraints(ctx),
        parents=render_parents(ctx.parents, ctx.score_is_accuracy),
        knowledge_base=render_knowledge_base(ctx.knowledge_base),
        n_children=ctx.n_children,
        crossover_prob=ctx.crossover_prob,
        latency_bound=latency_bound,
    )
