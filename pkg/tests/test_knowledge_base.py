import pytest

from niche_nas.coevolve.knowledge_base import (
    KnowledgeBase, KnowledgeRule, parse_knowledge_rules, update_knowledge_base,
)


def test_parse_rules_in_various_shapes():
    text = (
        "Updated_Knowledge_Base:\n"
        '["Use skip_connect on edge 3<-0 because it is free.",'
        ' {"rule": "Avoid none on every edge because accuracy collapses."},'
        ' {"rule_3": "Prefer nor_conv_1x1 for low latency."},'
        ' {"a": 1, "b": 2}, ""]'
    )
    assert parse_knowledge_rules(text) == [
        "Use skip_connect on edge 3<-0 because it is free.",
        "Avoid none on every edge because accuracy collapses.",
        "Prefer nor_conv_1x1 for low latency.",
    ]


def test_update_replaces_rules():
    kb = KnowledgeBase().replace(["old rule"], generation=1)
    new = update_knowledge_base(kb, '["first", "second"]', generation=3)
    assert new.texts == ["first", "second"]
    assert all(r.generation_added == 3 for r in new)
    assert kb.texts == ["old rule"]


@pytest.mark.parametrize("response", ["no json here", "[]", '[{"x": 1, "y": 2}]'])
def test_unusable_response_keeps_base(response):
    kb = KnowledgeBase().replace(["keep me"], generation=1)
    assert update_knowledge_base(kb, response, generation=2) is kb


def test_capacity_evicts_oldest():
    kb = KnowledgeBase([KnowledgeRule(f"rule {i}", i) for i in range(5)], capacity=3)
    assert kb.texts == ["rule 2", "rule 3", "rule 4"]
    assert len(kb.replace([f"r{i}" for i in range(10)], 1)) == 3
    with pytest.raises(ValueError):
        KnowledgeBase(capacity=0)
    with pytest.raises(ValueError):
        KnowledgeRule("   ")


def test_to_dict_and_equality():
    kb = KnowledgeBase().replace(["a"], generation=2)
    assert kb.to_dict() == {'capacity': 20, 'rules': [{'text': 'a', 'generation_added': 2}]}
    assert kb == KnowledgeBase().replace(["a"], generation=2)
    assert kb != KnowledgeBase().replace(["a"], generation=3)
