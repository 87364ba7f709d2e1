from dataclasses import dataclass
from typing import NamedTuple
import json

from ..arch_space import ArchCell, decode, encode
from ..errors import ArchDecodeError, ProposalParseError

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'OPERATIONS',
    'CandidateProposal',
    'ParsedProposals',
    'extract_json_array',
    'collect_proposals',
    'parse_proposals',
]

OPERATIONS = ('crossover', 'mutation')


@dataclass(frozen=True)
class CandidateProposal:
    """
    One child proposed by an operator.

    ``architecture_code`` is stored in canonical form; construction fails
    with `ArchDecodeError` if it does not decode.
    """
    child_id : str
    operation : str
    architecture_code : str
    rationale : str = ""

    def __post_init__(self):
        if self.operation not in OPERATIONS:
            raise ValueError(f"operation must be one of {OPERATIONS}, got {self.operation!r}")
        object.__setattr__(self, 'architecture_code', encode(decode(self.architecture_code)))

    @property
    def cell(self) -> ArchCell:
        return decode(self.architecture_code)


class ParsedProposals(NamedTuple):
    proposals : list[CandidateProposal]
    diagnostics : list[str]


def extract_json_array(text : str) -> list:
    """
    First well-formed JSON array in ``text``.

    Surrounding prose and markdown code fences are skipped: decoding is
    attempted at every ``[`` until one yields a list.

    Raises
    ------
    ProposalParseError
        If no position decodes to a JSON array.
    """
    decoder = json.JSONDecoder()
    start = text.find('[')
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            pass
        else:
            if isinstance(obj, list):
                return obj
        start = text.find('[', start + 1)
    raise ProposalParseError("No JSON array found in response text.")


def _proposal_from(element, index : int) -> CandidateProposal:
    if not isinstance(element, dict):
        raise ValueError(f"expected an object, got {type(element).__name__}")
    code = element.get('architecture_code')
    if not isinstance(code, str):
        raise ValueError("missing or non-string 'architecture_code'")
    operation = element.get('operation')
    if not isinstance(operation, str) or operation.strip().lower() not in OPERATIONS:
        raise ValueError(f"'operation' must be 'crossover' or 'mutation', got {operation!r}")
    child_id = element.get('child_id', index + 1)
    rationale = element.get('rationale', "")
    return CandidateProposal(
        child_id=str(child_id),
        operation=operation.strip().lower(),
        architecture_code=code.strip(),
        rationale=rationale if isinstance(rationale, str) else json.dumps(rationale),
    )


def collect_proposals(text : str) -> ParsedProposals:
    """
    Parse a generation response into proposals plus one diagnostic per
    dropped element.

    Raises
    ------
    ProposalParseError
        If the response contains no JSON array.
    """
    proposals, diagnostics = [], []
    for i, element in enumerate(extract_json_array(text)):
        try:
            proposals.append(_proposal_from(element, i))
        except ArchDecodeError as e:
            diagnostics.append(f"element {i}: invalid architecture_code ({e})")
        except ValueError as e:
            diagnostics.append(f"element {i}: {e}")
    for d in diagnostics:
        logger.warning(f"Dropped proposal {d}")
    return ParsedProposals(proposals, diagnostics)


def parse_proposals(text : str) -> list[CandidateProposal]:
    """
    Valid proposals of a generation response; invalid elements are dropped
    with a logged diagnostic.
    """
    return collect_proposals(text).proposals
