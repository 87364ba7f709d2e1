import logging

import pytest

from niche_nas.coevolve.proposals import CandidateProposal, collect_proposals, extract_json_array, parse_proposals
from niche_nas.errors import ArchDecodeError, ProposalParseError

ARCH = "|nor_conv_3x3~0|+|none~0|skip_connect~1|+|nor_conv_1x1~0|none~1|avg_pool_3x3~2|"


def test_plain_array():
    text = f'[{{"child_id": "c1", "operation": "mutation", "architecture_code": "{ARCH}", "rationale": "r"}}]'
    proposals = parse_proposals(text)
    assert proposals == [CandidateProposal("c1", "mutation", ARCH, "r")]
    assert proposals[0].cell.encode() == ARCH


def test_fenced_array_inside_prose():
    text = (
        "Sure! Here are the children [as requested]:\n"
        "```json\n"
        "[\n"
        f'  {{"child_id": 1, "operation": "Crossover", "architecture_code": "  {ARCH} ", "rationale": "mix"}},\n'
        f'  {{"child_id": 2, "operation": "mutation", "architecture_code": "{ARCH}"}}\n'
        "]\n"
        "```\n"
        "Let me know if you need more."
    )
    proposals = parse_proposals(text)
    assert [p.child_id for p in proposals] == ["1", "2"]
    assert proposals[0].operation == "crossover"
    assert proposals[0].architecture_code == ARCH
    assert proposals[1].rationale == ""


def test_invalid_elements_are_dropped_with_diagnostics(caplog):
    text = (
        "["
        f'{{"operation": "mutation", "architecture_code": "{ARCH}"}},'
        '{"operation": "mutation", "architecture_code": "|conv_5x5~0|+|none~0|none~1|+|none~0|none~1|none~2|"},'
        f'{{"operation": "inversion", "architecture_code": "{ARCH}"}},'
        '{"operation": "mutation"},'
        '"not an object"'
        "]"
    )
    with caplog.at_level(logging.WARNING, logger="niche_nas"):
        parsed = collect_proposals(text)
    assert len(parsed.proposals) == 1
    assert parsed.proposals[0].child_id == "1"
    assert len(parsed.diagnostics) == 4
    assert parsed.diagnostics[0].startswith("element 1: invalid architecture_code")
    assert "Dropped proposal" in caplog.text


def test_no_array_raises():
    with pytest.raises(ProposalParseError):
        parse_proposals("I cannot help with that.")
    with pytest.raises(ProposalParseError):
        extract_json_array('{"child_id": 1}')


def test_extract_skips_broken_brackets():
    assert extract_json_array("see [1] or [2, 3 and then [4, 5]") == [1]
    assert extract_json_array("broken [1, and fine [2]") == [2]


def test_proposal_validation():
    with pytest.raises(ArchDecodeError):
        CandidateProposal("1", "mutation", "|none~0|")
    with pytest.raises(ValueError):
        CandidateProposal("1", "insertion", ARCH)
