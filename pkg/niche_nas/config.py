from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping
import tomllib

from .arch_space import DEFAULT_NICHES, UNPARTITIONED, NicheSet
from .coevolve.baseline import PARENT_SELECTION_MODES
from .coevolve.knowledge_base import DEFAULT_KB_CAPACITY
from .coevolve.text_service import TextServiceConfig
from .errors import ConfigError
from .objectives import NormalizationBounds

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'OPERATOR_KINDS',
    'CLI_KEYS',
    'EngineConfig',
    'load_config_file',
    'merge_settings',
]

OPERATOR_KINDS = ('baseline', 'llm')

# Keys a config file may carry for the command line rather than the engine
CLI_KEYS = frozenset({'store', 'store_format', 'mapping', 'predictor_file', 'out'})


@dataclass
class EngineConfig:
    """
    Settings of one search run.

    Parameters
    ----------
    device : str
        Device whose latency is minimized.
    dataset : str | None
        Dataset whose accuracy is maximized. Default: the store's first dataset.
    generations : int
        Number of evolution generations after initialization.
    crossover_prob : float
        Crossover probability of the baseline operator (prompt guidance for the LLM).
    init_per_niche : int
        Initial population sampled in each niche.
    n_children : int
        Children requested per niche per generation.
    children_per_call : int
        Children requested per stage-2 service call.
    operator : str
        ``'baseline'`` or ``'llm'``.
    predictor : str | None
        Predictor kind. Default: ``fitted`` if the store has proxies, else ``oracle``.
    proxy_index : int
        Proxy column of the ``single_proxy`` predictor.
    predictor_sample_size : int
        Training sample size of the ``fitted`` predictor.
    seed : int
        Base seed of every random stream.
    niches : NicheSet
        The partition of the search space.
    partitioned : bool
        If False, search the whole space as one niche with the same total budget.
    max_operator_retries : int
        Extra attempts for a failed stage-2 call.
    workers : int | None
        Worker threads for concurrent niches. Default: number of niches.
    archive_literal : bool
        Insert every new point into the archive, even dominated ones.
    share_knowledge_base : bool
        Use one knowledge base for all niches.
    parent_selection : str
        ``'uniform'`` or ``'rank'``.
    kb_capacity : int
        Maximum number of knowledge-base rules.
    latency_limit : float | None
        Latency bound (ms) stated in prompts.
    bounds : NormalizationBounds | None
        Normalization bounds of the report. Default: store bounds when the
        store is complete, else the range of the evaluated points.
    allow_partial : bool
        Accept a store that does not cover the whole space.
    progress : bool
        Show a progress bar over generations.
    service : TextServiceConfig
        Text-service settings of the ``llm`` operator.
    """
    device : str = "edgegpu"
    dataset : str | None = None
    generations : int = 10
    crossover_prob : float = 0.5
    init_per_niche : int = 5
    n_children : int = 2
    children_per_call : int = 1
    operator : str = "baseline"
    predictor : str | None = None
    proxy_index : int = 0
    predictor_sample_size : int = 1000
    seed : int = 0
    niches : NicheSet = field(default_factory=lambda: DEFAULT_NICHES)
    partitioned : bool = True
    max_operator_retries : int = 2
    workers : int | None = None
    archive_literal : bool = False
    share_knowledge_base : bool = False
    parent_selection : str = "uniform"
    kb_capacity : int = DEFAULT_KB_CAPACITY
    latency_limit : float | None = None
    bounds : NormalizationBounds | None = None
    allow_partial : bool = False
    progress : bool = False
    service : TextServiceConfig = field(default_factory=TextServiceConfig)

    def __post_init__(self):
        if isinstance(self.niches, list):
            self.niches = NicheSet.from_config(self.niches)
        if isinstance(self.bounds, str):
            self.bounds = _parse_bounds(self.bounds)
        elif isinstance(self.bounds, Mapping):
            try:
                self.bounds = NormalizationBounds(**self.bounds)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Invalid bounds {self.bounds!r}: {e}") from None
        if isinstance(self.service, Mapping):
            self.service = TextServiceConfig.from_dict(dict(self.service))

        problems = []
        if self.generations < 1:
            problems.append(f"generations must be >= 1, got {self.generations}")
        if not 0.0 <= self.crossover_prob <= 1.0:
            problems.append(f"crossover_prob must be in [0, 1], got {self.crossover_prob}")
        if self.init_per_niche < 1:
            problems.append(f"init_per_niche must be >= 1, got {self.init_per_niche}")
        if self.n_children < 1 or self.children_per_call < 1:
            problems.append("n_children and children_per_call must be >= 1")
        if self.operator not in OPERATOR_KINDS:
            problems.append(f"operator must be one of {OPERATOR_KINDS}, got {self.operator!r}")
        if self.parent_selection not in PARENT_SELECTION_MODES:
            problems.append(f"parent_selection must be one of {PARENT_SELECTION_MODES}, got {self.parent_selection!r}")
        if self.workers is not None and self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if self.max_operator_retries < 0:
            problems.append("max_operator_retries must be >= 0")
        if self.kb_capacity < 1:
            problems.append("kb_capacity must be >= 1")
        if self.latency_limit is not None and not self.latency_limit > 0:
            problems.append("latency_limit must be > 0")
        if self.predictor_sample_size < 1:
            problems.append("predictor_sample_size must be >= 1")
        if problems:
            msg = "Invalid engine configuration: " + "; ".join(problems)
            logger.error(msg)
            raise ConfigError(msg)

    @property
    def mode(self) -> str:
        return "partitioned" if self.partitioned else "unpartitioned"

    def effective_niches(self) -> NicheSet:
        return self.niches if self.partitioned else UNPARTITIONED

    @property
    def budget_scale(self) -> int:
        """
        Multiplier applied to per-niche budgets in unpartitioned mode.
        """
        return 1 if self.partitioned else len(self.niches)

    @classmethod
    def from_dict(cls, data : Mapping[str, Any]) -> 'EngineConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            msg = f"Unknown configuration keys: {sorted(unknown)}"
            logger.error(msg)
            raise ConfigError(msg)
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, NicheSet):
                value = value.to_config()
            elif isinstance(value, NormalizationBounds):
                value = value.to_dict()
            elif isinstance(value, TextServiceConfig):
                value = value.to_dict()
            out[f.name] = value
        return out


def _parse_bounds(text : str) -> NormalizationBounds:
    try:
        return NormalizationBounds.parse(text)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_config_file(path : str | Path) -> dict:
    """
    Read a TOML config file.

    Top-level keys mirror `EngineConfig` (plus the command-line keys in
    ``CLI_KEYS``), ``[service]`` holds the text-service settings and
    ``[[niches]]`` the partition.

    Raises
    ------
    ConfigError
        If the file is missing, not valid TOML, or has unknown keys.
    """
    path = Path(path)
    if not path.is_file():
        msg = f"Config file not found: {str(path)!r}"
        logger.error(msg)
        raise ConfigError(msg)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {str(path)!r}: {e}") from e
    known = {f.name for f in fields(EngineConfig)} | CLI_KEYS
    unknown = set(data) - known
    if unknown:
        msg = f"Unknown keys in {str(path)!r}: {sorted(unknown)}"
        logger.error(msg)
        raise ConfigError(msg)
    logger.info(f"Loaded config file {str(path)!r}")
    return data


def merge_settings(*layers : Mapping[str, Any]) -> dict:
    """
    Merge setting layers, later layers winning. ``None`` values never
    override, so unset command-line flags fall through to the file and the
    defaults. Nested tables (``service``) merge key by key.
    """
    out : dict = {}
    for layer in layers:
        for key, value in layer.items():
            if value is None:
                continue
            if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
                out[key] = merge_settings(out[key], value)
            else:
                out[key] = value
    return out
