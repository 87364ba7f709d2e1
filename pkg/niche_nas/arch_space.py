"""
Cell-based search space: operator kinds, the 6-edge cell genome, its
canonical string form, exhaustive enumeration, complexity counting and the
complexity-driven niche partition. Also hosts the FLOPs estimate for the
vision-transformer search space.
"""
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Iterable, Iterator, Literal, NamedTuple
import itertools
import math
import random

from .errors import ArchDecodeError, ConfigError

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'OpKind',
    'FILL_OPS',
    'EDGES',
    'NUM_EDGES',
    'SPACE_SIZE',
    'ArchCell',
    'ComplexityProfile',
    'CountBound',
    'NichePredicate',
    'NicheSet',
    'DEFAULT_NICHES',
    'UNPARTITIONED',
    'encode',
    'decode',
    'enumerate_space',
    'complexity',
    'assign_niche',
    'niche_cardinalities',
    'random_cell',
    'ViTConfig',
    'FlopsConstants',
    'vit_flops_breakdown',
    'vit_flops_estimate',
    'assign_vit_niche',
]


class OpKind(IntEnum):
    """
    The five edge operators of the cell. Integer values are stable ids.
    """
    NONE = 0
    SKIP_CONNECT = 1
    NOR_CONV_1X1 = 2
    NOR_CONV_3X3 = 3
    AVG_POOL_3X3 = 4

    @property
    def op_name(self) -> str:
        """
        Benchmark name of the operator, e.g. ``'nor_conv_3x3'``.
        """
        return self.name.lower()

    @classmethod
    def from_name(cls, name : str) -> 'OpKind':
        if name != name.lower():
            raise ArchDecodeError(f"Operator names are lower case, got {name!r}")
        try:
            return cls[name.upper()]
        except KeyError:
            raise ArchDecodeError(f"Unknown operator name {name!r}") from None


# Operators that never count towards a niche's convolution budget
FILL_OPS = (OpKind.NONE, OpKind.SKIP_CONNECT, OpKind.AVG_POOL_3X3)

# (target, source) node pairs of the 4-node DAG, in genome order
EDGES = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
NUM_EDGES = len(EDGES)
SPACE_SIZE = len(OpKind) ** NUM_EDGES


class ComplexityProfile(NamedTuple):
    n_conv3x3 : int
    n_conv1x1 : int


@dataclass(frozen=True, order=True)
class ArchCell:
    """
    One architecture of the search space: an operator on each of the six edges.

    Parameters
    ----------
    edges : tuple[OpKind, ...]
        Operators ordered as edge(1<-0), edge(2<-0), edge(2<-1), edge(3<-0),
        edge(3<-1), edge(3<-2). Plain integers are converted to `OpKind`.
    """
    edges : tuple[OpKind, ...]

    def __post_init__(self):
        edges = tuple(OpKind(e) for e in self.edges)
        if len(edges) != NUM_EDGES:
            raise ArchDecodeError(f"A cell has exactly {NUM_EDGES} edges, got {len(edges)}")
        object.__setattr__(self, 'edges', edges)

    def encode(self) -> str:
        return encode(self)

    @classmethod
    def decode(cls, text : str) -> 'ArchCell':
        return decode(text)

    def with_edge(self, index : int, op : OpKind) -> 'ArchCell':
        edges = list(self.edges)
        edges[index] = OpKind(op)
        return ArchCell(tuple(edges))

    def complexity(self) -> ComplexityProfile:
        return complexity(self)

    def __str__(self):
        return encode(self)


def encode(cell : ArchCell) -> str:
    """
    Canonical benchmark string of a cell.

    Examples
    --------
    >>> encode(ArchCell((0,) * 6))
    '|none~0|+|none~0|none~1|+|none~0|none~1|none~2|'
    """
    nodes = []
    pos = 0
    for target in range(1, 4):
        parts = []
        for source in range(target):
            parts.append(f"{cell.edges[pos].op_name}~{source}")
            pos += 1
        nodes.append("|" + "|".join(parts) + "|")
    return "+".join(nodes)


def decode(text : str) -> ArchCell:
    """
    Parse a canonical cell string.

    Raises
    ------
    ArchDecodeError
        If ``text`` is not exactly in canonical form.
    """
    if not isinstance(text, str):
        raise ArchDecodeError(f"Architecture code must be a string, got {type(text).__name__}")
    nodes = text.split("+")
    if len(nodes) != 3:
        raise ArchDecodeError(f"Expected 3 node groups separated by '+': {text!r}")
    edges = []
    for target, node in enumerate(nodes, start=1):
        if len(node) < 2 or not (node.startswith("|") and node.endswith("|")):
            raise ArchDecodeError(f"Node group {target} is not delimited by '|': {text!r}")
        parts = node[1:-1].split("|")
        if len(parts) != target:
            raise ArchDecodeError(f"Node {target} must have {target} incoming edges: {text!r}")
        for source, part in enumerate(parts):
            name, sep, src = part.partition("~")
            if sep != "~" or src != str(source):
                raise ArchDecodeError(f"Edge {part!r} must read '<op>~{source}': {text!r}")
            edges.append(OpKind.from_name(name))
    return ArchCell(tuple(edges))


def enumerate_space() -> Iterator[ArchCell]:
    """
    Lazily yield every cell once, in lexicographic order of edge ids.
    """
    for edges in itertools.product(OpKind, repeat=NUM_EDGES):
        yield ArchCell(edges)


def complexity(cell : ArchCell) -> ComplexityProfile:
    return ComplexityProfile(
        n_conv3x3=sum(1 for e in cell.edges if e is OpKind.NOR_CONV_3X3),
        n_conv1x1=sum(1 for e in cell.edges if e is OpKind.NOR_CONV_1X1),
    )


def random_cell(rng : random.Random) -> ArchCell:
    """
    Draw a cell uniformly from the whole space.
    """
    return ArchCell(tuple(OpKind(rng.randrange(len(OpKind))) for _ in range(NUM_EDGES)))


#########################
#### Niche partition ####
#########################

@dataclass(frozen=True)
class CountBound:
    """
    Constraint on how many edges carry a given operator.

    ``mode`` is ``'exact'`` (count == value), ``'min'`` (count >= value) or
    ``'any'``. In config files a bound is written ``"2"``, ``">=4"`` or
    ``"any"`` (integers and ``{exact = 2}`` / ``{min = 4}`` tables work too).
    """
    mode : Literal['exact', 'min', 'any'] = 'any'
    value : int = 0

    def __post_init__(self):
        if self.mode not in ('exact', 'min', 'any'):
            raise ConfigError(f"Invalid count bound mode {self.mode!r}")
        if not 0 <= self.value <= NUM_EDGES:
            raise ConfigError(f"Count bound value must be in [0, {NUM_EDGES}], got {self.value}")

    @classmethod
    def parse(cls, spec) -> 'CountBound':
        if isinstance(spec, CountBound):
            return spec
        if isinstance(spec, bool):
            raise ConfigError(f"Invalid count bound {spec!r}")
        if isinstance(spec, int):
            return cls('exact', spec)
        if isinstance(spec, dict):
            if len(spec) != 1 or next(iter(spec)) not in ('exact', 'min'):
                raise ConfigError(f"Count bound table must be {{exact = N}} or {{min = N}}, got {spec!r}")
            (mode, value), = spec.items()
            return cls(mode, int(value))
        if isinstance(spec, str):
            s = spec.strip().lower()
            try:
                if s == 'any':
                    return cls('any', 0)
                if s.startswith('>='):
                    return cls('min', int(s[2:]))
                return cls('exact', int(s))
            except ValueError:
                pass
        raise ConfigError(f"Invalid count bound {spec!r}")

    def contains(self, count : int) -> bool:
        if self.mode == 'exact':
            return count == self.value
        if self.mode == 'min':
            return count >= self.value
        return True

    def bounds(self) -> tuple[int, int]:
        """
        Inclusive ``(low, high)`` range of admissible counts.
        """
        if self.mode == 'exact':
            return self.value, self.value
        if self.mode == 'min':
            return self.value, NUM_EDGES
        return 0, NUM_EDGES

    def describe(self, op_name : str, max_count : int = NUM_EDGES) -> str:
        if self.mode == 'exact':
            return f"MUST use exactly {self.value} × {op_name}"
        if self.mode == 'min':
            return f"MUST use at least {self.value} × {op_name}"
        return f"CAN use 0–{max_count} × {op_name}"

    def to_config(self) -> str:
        if self.mode == 'exact':
            return str(self.value)
        if self.mode == 'min':
            return f">={self.value}"
        return 'any'


@dataclass(frozen=True)
class NichePredicate:
    """
    A complexity class of the search space.

    Parameters
    ----------
    niche_id : int
        Identifier of the niche.
    n_conv3x3 : CountBound
        Admissible number of ``nor_conv_3x3`` edges.
    n_conv1x1 : CountBound
        Admissible number of ``nor_conv_1x1`` edges.
    rationale : str
        Free-text description, shown in reports.
    """
    niche_id : int
    n_conv3x3 : CountBound = field(default_factory=CountBound)
    n_conv1x1 : CountBound = field(default_factory=CountBound)
    rationale : str = ""

    def __post_init__(self):
        object.__setattr__(self, 'n_conv3x3', CountBound.parse(self.n_conv3x3))
        object.__setattr__(self, 'n_conv1x1', CountBound.parse(self.n_conv1x1))
        if self.n_conv3x3.bounds()[0] + self.n_conv1x1.bounds()[0] > NUM_EDGES:
            raise ConfigError(f"Niche {self.niche_id} is unsatisfiable: {self.describe()}")

    def contains_profile(self, profile : ComplexityProfile) -> bool:
        return (
            self.n_conv3x3.contains(profile.n_conv3x3)
            and self.n_conv1x1.contains(profile.n_conv1x1)
            and profile.n_conv3x3 + profile.n_conv1x1 <= NUM_EDGES
        )

    def contains(self, cell : ArchCell) -> bool:
        return self.contains_profile(complexity(cell))

    def describe(self) -> str:
        return f"n_conv3x3={self.n_conv3x3.to_config()}, n_conv1x1={self.n_conv1x1.to_config()}"

    def constraint_lines(self, latency_limit : float | None = None) -> list[str]:
        """
        The niche constraints as the bullet lines used in generation prompts.
        """
        lo3 = self.n_conv3x3.bounds()[0]
        lo1 = self.n_conv1x1.bounds()[0]
        lines = [
            f"- {self.n_conv3x3.describe(OpKind.NOR_CONV_3X3.op_name, NUM_EDGES - lo1)}",
            f"- {self.n_conv1x1.describe(OpKind.NOR_CONV_1X1.op_name, NUM_EDGES - lo3)}",
            f"- ALLOWED operators: {', '.join(op.op_name for op in FILL_OPS)}",
        ]
        if latency_limit is not None:
            lines.append(f"- Hardware latency must remain below {latency_limit:.3f} ms")
        return lines

    def to_config(self) -> dict:
        return {
            'id': self.niche_id,
            'n_conv3x3': self.n_conv3x3.to_config(),
            'n_conv1x1': self.n_conv1x1.to_config(),
            'rationale': self.rationale,
        }


def _all_profiles() -> list[ComplexityProfile]:
    return [
        ComplexityProfile(n3, n1)
        for n3 in range(NUM_EDGES + 1)
        for n1 in range(NUM_EDGES + 1 - n3)
    ]


class NicheSet:
    """
    An ordered set of niche predicates forming a partition of the search space.

    Construction checks the partition property on every complexity profile:
    each profile (and hence each cell) must match exactly one predicate.

    Parameters
    ----------
    niches : Iterable[NichePredicate]
        The niches, with unique ids.
    """

    def __init__(self, niches : Iterable[NichePredicate]):
        self.niches = tuple(niches)
        if not self.niches:
            raise ConfigError("A niche set needs at least one niche.")
        ids = [n.niche_id for n in self.niches]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"Niche ids must be unique, got {ids}")
        self._by_id = {n.niche_id: n for n in self.niches}
        self._by_profile = {}
        for profile in _all_profiles():
            matches = [n.niche_id for n in self.niches if n.contains_profile(profile)]
            if len(matches) != 1:
                msg = (
                    f"Niche predicates do not partition the space: profile "
                    f"(n_conv3x3={profile.n_conv3x3}, n_conv1x1={profile.n_conv1x1}) matches {matches}"
                )
                logger.error(msg)
                raise ConfigError(msg)
            self._by_profile[profile] = matches[0]

    @classmethod
    def from_config(cls, entries : list[dict]) -> 'NicheSet':
        """
        Build a niche set from a ``[[niches]]`` config block.
        """
        niches = []
        allowed = {'id', 'n_conv3x3', 'n_conv1x1', 'rationale'}
        for i, entry in enumerate(entries):
            unknown = set(entry) - allowed
            if unknown:
                raise ConfigError(f"Unknown keys in niche entry {i}: {sorted(unknown)}")
            niches.append(NichePredicate(
                niche_id=int(entry.get('id', i)),
                n_conv3x3=entry.get('n_conv3x3', 'any'),
                n_conv1x1=entry.get('n_conv1x1', 'any'),
                rationale=entry.get('rationale', ''),
            ))
        return cls(niches)

    def to_config(self) -> list[dict]:
        return [n.to_config() for n in self.niches]

    def assign(self, cell : ArchCell) -> int:
        return self._by_profile[complexity(cell)]

    def get(self, niche_id : int) -> NichePredicate:
        return self._by_id[niche_id]

    @property
    def ids(self) -> list[int]:
        return [n.niche_id for n in self.niches]

    def __iter__(self):
        return iter(self.niches)

    def __len__(self):
        return len(self.niches)

    def __eq__(self, other):
        return isinstance(other, NicheSet) and self.niches == other.niches

    def __repr__(self):
        inner = ', '.join(f"{n.niche_id}: {n.describe()}" for n in self.niches)
        return f"NicheSet({inner})"


DEFAULT_NICHES = NicheSet([
    NichePredicate(0, '0', '0', "Explores non-convolutional architectures"),
    NichePredicate(1, '0', '>=1', "Focuses on simple, low-latency models"),
    NichePredicate(2, '1', 'any', "Entry-level complex architectures"),
    NichePredicate(3, '2', 'any', "Mid-level complexity"),
    NichePredicate(4, '3', 'any', "High-level complexity"),
    NichePredicate(5, '>=4', 'any', "Explores the most complex designs"),
])

UNPARTITIONED = NicheSet([
    NichePredicate(0, 'any', 'any', "Whole search space"),
])


def assign_niche(cell : ArchCell, niches : NicheSet = DEFAULT_NICHES) -> int:
    """
    Niche id of a cell. Depends only on ``complexity(cell)``.
    """
    return niches.assign(cell)


def niche_cardinalities(niches : NicheSet = DEFAULT_NICHES) -> dict[int, int]:
    """
    Number of cells in each niche, by full enumeration.
    """
    counts = {niche_id: 0 for niche_id in niches.ids}
    for cell in enumerate_space():
        counts[niches.assign(cell)] += 1
    return counts


##############################
#### ViT complexity model ####
##############################

_INT64_MAX = 2 ** 63 - 1


@dataclass(frozen=True)
class ViTConfig:
    """
    A vision-transformer configuration.

    Parameters
    ----------
    embed_dim : int
        Embedding dimension D.
    depth : int
        Number of transformer blocks L.
    mlp_ratio : int | float | Fraction
        Hidden expansion of the MLP block.
    qkv_dim : int
        Q-K-V dimension D_h (decoupled from D).
    num_heads : int
        Attention heads h; must divide ``qkv_dim``.
    num_patches : int
        Sequence length N.
    """
    embed_dim : int
    depth : int
    mlp_ratio : int | float | Fraction
    qkv_dim : int
    num_heads : int
    num_patches : int = 197

    def __post_init__(self):
        for name in ('embed_dim', 'depth', 'qkv_dim', 'num_heads', 'num_patches'):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"ViTConfig.{name} must be a positive integer, got {value!r}")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"ViTConfig.mlp_ratio must be positive, got {self.mlp_ratio!r}")
        if self.qkv_dim % self.num_heads != 0:
            raise ConfigError(
                f"qkv_dim={self.qkv_dim} is not divisible by num_heads={self.num_heads}"
            )


class FlopsConstants(NamedTuple):
    """
    Constant factors of the ViT FLOPs model.
    """
    qkv_projections : int = 3
    attention_products : int = 2
    output_projections : int = 1
    mlp_layers : int = 2


def _as_fraction(value) -> Fraction:
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    return Fraction(str(value))


def vit_flops_breakdown(cfg : ViTConfig, constants : FlopsConstants = FlopsConstants()) -> dict[str, int]:
    """
    Per-block attention and MLP FLOPs and the total over all blocks.

    Returns
    -------
    dict[str, int]
        ``{'mhsa': ..., 'mlp': ..., 'total': ...}``; values are floored to integers.

    Raises
    ------
    OverflowError
        If any term does not fit a signed 64-bit integer.
    """
    n, d, dh = cfg.num_patches, cfg.embed_dim, cfg.qkv_dim
    mhsa = (
        constants.qkv_projections * n * d * dh
        + constants.attention_products * n * n * dh
        + constants.output_projections * n * dh * d
    )
    mlp = constants.mlp_layers * n * d * d * _as_fraction(cfg.mlp_ratio)
    total = cfg.depth * (mhsa + mlp)
    out = {
        'mhsa': math.floor(mhsa),
        'mlp': math.floor(mlp),
        'total': math.floor(total),
    }
    for name, value in out.items():
        if value > _INT64_MAX:
            msg = f"ViT FLOPs term {name!r} overflows 64-bit range for {cfg}"
            logger.error(msg)
            raise OverflowError(msg)
    return out


def vit_flops_estimate(cfg : ViTConfig, constants : FlopsConstants = FlopsConstants()) -> int:
    """
    Approximate FLOPs of a ViT: ``L * (3 N D D_h + 2 N^2 D_h + N D_h D + 2 N D^2 ratio)``.
    """
    return vit_flops_breakdown(cfg, constants)['total']


def assign_vit_niche(
    cfg : ViTConfig,
    embed_dim_edges : Iterable[int],
    depth_edges : Iterable[int],
) -> int:
    """
    Grid niche of a ViT configuration on embed dim and depth.

    ``embed_dim_edges`` and ``depth_edges`` are sorted bin boundaries; a value
    equal to a boundary falls in the upper bin. Niche ids run row-major over
    (embed-dim bin, depth bin).
    """
    embed_dim_edges = sorted(embed_dim_edges)
    depth_edges = sorted(depth_edges)
    i_dim = bisect_right(embed_dim_edges, cfg.embed_dim)
    i_depth = bisect_right(depth_edges, cfg.depth)
    return i_dim * (len(depth_edges) + 1) + i_depth
