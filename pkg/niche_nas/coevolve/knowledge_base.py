from dataclasses import dataclass
from typing import Iterable, Iterator

from ..errors import ProposalParseError
from .proposals import extract_json_array

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'DEFAULT_KB_CAPACITY',
    'KnowledgeRule',
    'KnowledgeBase',
    'parse_knowledge_rules',
    'update_knowledge_base',
]

DEFAULT_KB_CAPACITY = 20
_RULE_KEYS = ('rule', 'text', 'heuristic')


@dataclass(frozen=True)
class KnowledgeRule:
    text : str
    generation_added : int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("Knowledge rules must be non-empty.")


class KnowledgeBase:
    """
    Ordered design heuristics carried between generations.

    Instances are immutable; updates return a new knowledge base. When more
    rules than ``capacity`` are given, the oldest (first) ones are evicted.

    Parameters
    ----------
    rules : Iterable[KnowledgeRule]
        Rules, oldest first.
    capacity : int
        Maximum number of rules kept.
    """

    def __init__(self, rules : Iterable[KnowledgeRule] = (), capacity : int = DEFAULT_KB_CAPACITY):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        rules = tuple(rules)
        if len(rules) > capacity:
            logger.debug(f"Evicting {len(rules) - capacity} oldest rule(s) from the knowledge base")
            rules = rules[len(rules) - capacity:]
        self.rules = rules
        self.capacity = capacity

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.rules]

    def replace(self, texts : Iterable[str], generation : int) -> 'KnowledgeBase':
        """
        A knowledge base holding exactly ``texts``, stamped with ``generation``.
        """
        return KnowledgeBase(
            (KnowledgeRule(t.strip(), generation) for t in texts),
            capacity=self.capacity,
        )

    def to_dict(self) -> dict:
        return {
            'capacity': self.capacity,
            'rules': [{'text': r.text, 'generation_added': r.generation_added} for r in self.rules],
        }

    def __len__(self):
        return len(self.rules)

    def __iter__(self) -> Iterator[KnowledgeRule]:
        return iter(self.rules)

    def __eq__(self, other):
        return isinstance(other, KnowledgeBase) and (self.rules, self.capacity) == (other.rules, other.capacity)

    def __repr__(self):
        return f"KnowledgeBase(rules={len(self.rules)}, capacity={self.capacity})"


def _rule_text(element) -> str | None:
    if isinstance(element, str):
        return element.strip() or None
    if isinstance(element, dict):
        for key in _RULE_KEYS:
            value = element.get(key)
            if isinstance(value, str) and value.strip():
                return value.strip()
        if len(element) == 1:
            value = next(iter(element.values()))
            if isinstance(value, str) and value.strip():
                return value.strip()
    return None


def parse_knowledge_rules(text : str) -> list[str]:
    """
    Rule texts of a knowledge-base update response.

    Elements may be plain strings or objects with a ``rule`` (or ``text``)
    field. Elements without usable text are skipped.

    Raises
    ------
    ProposalParseError
        If the response has no JSON array.
    """
    rules = []
    for i, element in enumerate(extract_json_array(text)):
        rule = _rule_text(element)
        if rule is None:
            logger.warning(f"Skipping knowledge-base element {i}: no rule text")
            continue
        rules.append(rule)
    return rules


def update_knowledge_base(kb : KnowledgeBase, response_text : str, generation : int) -> KnowledgeBase:
    """
    Replace the rules of ``kb`` with the revised list in ``response_text``.

    The response is the full revised base, so rules it omits are deleted.
    An unparseable response, or one without a single usable rule, leaves
    ``kb`` unchanged.
    """
    try:
        rules = parse_knowledge_rules(response_text)
    except ProposalParseError as e:
        logger.warning(f"Knowledge base unchanged at generation {generation}: {e}")
        return kb
    if not rules:
        logger.warning(f"Knowledge base unchanged at generation {generation}: response had no rules")
        return kb
    return kb.replace(rules, generation)
