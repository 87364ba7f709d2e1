from dataclasses import replace
from pathlib import Path
import random

import pytest

from niche_nas.arch_space import DEFAULT_NICHES
from niche_nas.coevolve.knowledge_base import KnowledgeBase
from niche_nas.coevolve.operator_base import GenerationContext, ParentRecord
from niche_nas.coevolve.prompts import build_stage1_prompt, build_stage2_prompt

DATA = Path(__file__).parent / "data"

PARENTS = (
    ParentRecord("|nor_conv_3x3~0|+|nor_conv_3x3~0|none~1|+|none~0|none~1|none~2|", 88.5, 2.25, "seed"),
    ParentRecord("|nor_conv_3x3~0|+|nor_conv_1x1~0|skip_connect~1|+|nor_conv_3x3~0|avg_pool_3x3~1|none~2|", 91.25, 3.5),
)
RULES = [
    "Use nor_conv_3x3 on edge 1<-0 because it lifts accuracy.",
    "Avoid avg_pool_3x3 on the output node because it adds latency.",
]


@pytest.fixture
def ctx():
    return GenerationContext(
        device="edgegpu",
        dataset="cifar10",
        niche=DEFAULT_NICHES.get(3),
        parents=PARENTS,
        knowledge_base=KnowledgeBase().replace(RULES, generation=1),
        n_children=2,
        rng=random.Random(0),
        generation=2,
        crossover_prob=0.5,
    )


def golden(name):
    return (DATA / name).read_text(encoding="utf-8").rstrip("\n")


def test_stage1_prompt_matches_golden(ctx):
    assert build_stage1_prompt(ctx.parents, ctx.knowledge_base, ctx) == golden("stage1_prompt.txt")


def test_stage2_prompt_matches_golden(ctx):
    assert build_stage2_prompt(replace(ctx, latency_limit=4.0)) == golden("stage2_prompt.txt")


def test_prompts_are_pure(ctx):
    assert build_stage2_prompt(ctx) == build_stage2_prompt(ctx)
    assert "Hardware latency" not in build_stage2_prompt(ctx)


def test_empty_inputs_render_placeholders(ctx):
    bare = replace(ctx, parents=(), knowledge_base=KnowledgeBase())
    text = build_stage1_prompt((), bare.knowledge_base, bare)
    assert "- Current knowledge base:\n  (empty)" in text
    assert "generation 1:\n  (none)" in text
    assert "[Knowledge Base]\n(empty)" in build_stage2_prompt(bare)


def test_stage2_prompt_lists_niche_constraints():
    niche = DEFAULT_NICHES.get(5)
    ctx = GenerationContext("edgegpu", "cifar100", niche, (), KnowledgeBase(), n_children=3)
    text = build_stage2_prompt(ctx)
    assert "  - MUST use at least 4 × nor_conv_3x3" in text
    assert "  - CAN use 0–2 × nor_conv_1x1" in text
    assert "Perform 3 new candidate generations." in text


def test_rank_scores_are_not_shown_as_accuracy(ctx):
    ranked = replace(ctx, parents=(replace(PARENTS[0], score=0.8125),), score_is_accuracy=False)
    for text in (build_stage2_prompt(ranked), build_stage1_prompt(ranked.parents, ranked.knowledge_base, ranked)):
        assert "| score=0.8125 | latency=2.250 ms" in text
        assert "accuracy=" not in text
