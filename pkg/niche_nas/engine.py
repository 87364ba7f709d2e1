"""
Partitioned evolutionary search.

Each niche of the partition keeps its own Pareto archive over
(predicted accuracy, latency). After an initial uniform sample per niche,
every generation asks the operator for children of each niche's archive,
gates them (valid, novel, inside the niche), evaluates the survivors with
the predictor and the latency table, and updates the archive. Niches evolve
concurrently; results are merged in niche order so the outcome does not
depend on the number of workers. The final front is the non-dominated
subset of the union of all archives.
"""
from concurrent.futures import ThreadPoolExecutor
from collections import Counter
from dataclasses import dataclass, field, asdict
from typing import Iterable, Sequence
import random
import time

import numpy as np
from tqdm import tqdm

from .arch_space import NichePredicate, NicheSet, encode, niche_cardinalities, random_cell
from .benchmark.store import BenchmarkStore
from .coevolve.baseline import BaselineOperator
from .coevolve.knowledge_base import KnowledgeBase
from .coevolve.llm_operator import LLMOperator
from .coevolve.operator_base import ArchitectureOperator, GenerationContext, OperatorResult, ParentRecord
from .coevolve.text_service import TextServiceClient, TranscriptMode
from .config import EngineConfig
from .errors import ArchNotFoundError, ConfigError
from .objectives import (
    FrontSet,
    NormalizationBounds,
    dominates,
    hypervolume,
    igd,
    non_dominated_sort,
    normalize_pairs,
)
from .predictor import PredictorKind, default_predictor, make_predictor
from .protocols import SupportsPrediction
from .utils import derive_seed

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'GATE_STATUSES',
    'EvaluatedArch',
    'ParetoArchive',
    'NicheState',
    'OperatorStats',
    'RunReport',
    'SearchEngine',
    'archive_update',
    'initialize',
    'evolve_generation',
    'run_search',
]

GATE_STATUSES = ('invalid', 'non_novel', 'constraint_violation', 'not_found', 'accepted', 'rejected')


@dataclass(frozen=True)
class EvaluatedArch:
    """
    An evaluated architecture.

    Parameters
    ----------
    arch : str
        Canonical architecture string.
    niche : int
        Niche id the architecture belongs to.
    z_pred : float
        Predicted accuracy.
    latency : float
        Latency on the target device (ms).
    accuracy : float | None
        True accuracy from the store, for reporting only.
    rationale : str
        Why the operator proposed it.
    generation : int
        Generation it was born in (0 for the initial sample).
    operation : str
        ``init``, ``mutation`` or ``crossover``.
    """
    arch : str
    niche : int
    z_pred : float
    latency : float
    accuracy : float | None = None
    rationale : str = ""
    generation : int = 0
    operation : str = "init"

    def __post_init__(self):
        if not self.latency > 0:
            raise ValueError(f"latency must be > 0, got {self.latency}")

    @property
    def objectives(self) -> tuple[float, float]:
        """
        Minimized objectives of the archive: ``(-z_pred, latency)``.
        """
        return (-self.z_pred, self.latency)

    def to_parent(self) -> ParentRecord:
        return ParentRecord(self.arch, self.z_pred, self.latency, self.rationale)


class ParetoArchive:
    """
    Mutually non-dominated set of `EvaluatedArch`, in insertion order.

    Parameters
    ----------
    literal : bool
        If True, a new point is always inserted (members it dominates are
        still removed), so the archive may hold dominated points.
    """

    def __init__(self, literal : bool = False):
        self.literal = literal
        self.members : list[EvaluatedArch] = []

    def insert(self, new : EvaluatedArch) -> tuple[bool, list[EvaluatedArch]]:
        """
        Update with ``new``; returns whether it was accepted and which
        members it evicted.
        """
        if not self.literal and any(dominates(m.objectives, new.objectives) for m in self.members):
            return False, []
        removed = [m for m in self.members if dominates(new.objectives, m.objectives)]
        self.members = [m for m in self.members if not dominates(new.objectives, m.objectives)]
        self.members.append(new)
        return True, removed

    def update(self, new : EvaluatedArch) -> bool:
        return self.insert(new)[0]

    def is_mutually_non_dominated(self) -> bool:
        return not any(
            dominates(a.objectives, b.objectives)
            for a in self.members for b in self.members if a is not b
        )

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


@dataclass
class NicheState:
    """
    Search state of one niche. ``last_results`` holds the children evaluated
    in the previous generation, the input of the knowledge update.
    """
    niche : NichePredicate
    archive : ParetoArchive
    knowledge_base : KnowledgeBase
    rng : random.Random = field(repr=False)
    last_results : list[ParentRecord] = field(default_factory=list, repr=False)

    @property
    def niche_id(self) -> int:
        return self.niche.niche_id


def archive_update(state : NicheState, new : EvaluatedArch) -> bool:
    """
    Insert ``new`` into the niche archive unless a member dominates it.
    """
    return state.archive.update(new)


@dataclass
class OperatorStats:
    stage1_calls : int = 0
    stage1_failures : int = 0
    stage2_calls : int = 0
    stage2_failures : int = 0
    fallbacks : int = 0
    invalid_proposals : int = 0
    errors : list[str] = field(default_factory=list)

    @property
    def service_calls(self) -> int:
        return self.stage1_calls + self.stage2_calls

    @property
    def service_failures(self) -> int:
        return self.stage1_failures + self.stage2_failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop('errors')
        return d


@dataclass
class RunReport:
    """
    Everything a search run produced.

    ``front`` is the non-dominated subset of the union of the niche
    archives under the report's objective source (``'true'`` accuracy when
    the store covers the whole space, else ``'predicted'``).
    """
    config : EngineConfig
    dataset : str
    operator : str
    predictor : str
    objective_source : str
    bounds : NormalizationBounds
    front : list[EvaluatedArch]
    archives : dict[int, list[EvaluatedArch]]
    hv_trace : list[float]
    stats : OperatorStats
    gate_counts : dict[str, int]
    evaluations : list[dict]
    wall_time : float
    hv : float
    igd : float | None = None
    hv_truth : float | None = None
    service_mode : str | None = None

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def n_evaluated(self) -> int:
        return sum(1 for e in self.evaluations if e['status'] in ('accepted', 'rejected'))

    def reported_accuracy(self, member : EvaluatedArch) -> float:
        if self.objective_source == 'true' and member.accuracy is not None:
            return member.accuracy
        return member.z_pred

    @property
    def service_unreachable(self) -> bool:
        """
        True when the run used the live service and every call failed.
        """
        return (
            self.service_mode in (TranscriptMode.LIVE.value, TranscriptMode.RECORD.value)
            and self.stats.service_calls > 0
            and self.stats.service_failures == self.stats.service_calls
        )


class _NicheOutcome:
    __slots__ = ('entries', 'seen', 'result')

    def __init__(self, entries, seen, result):
        self.entries = entries
        self.seen = seen
        self.result = result


class SearchEngine:
    """
    Runs the partitioned search on a benchmark store.

    Parameters
    ----------
    config : EngineConfig
        Run settings.
    store : BenchmarkStore
        Latency tables (and accuracy for reporting).
    predictor : SupportsPrediction | None
        Performance surrogate. Built from ``config`` if None.
    operator : ArchitectureOperator | None
        Child generator. Built from ``config`` if None.
    """

    def __init__(
        self,
        config : EngineConfig,
        store : BenchmarkStore,
        predictor : SupportsPrediction | None = None,
        operator : ArchitectureOperator | None = None,
    ):
        self.config = config
        self.store = store
        self.dataset = config.dataset or store.default_dataset()
        if self.dataset not in store.datasets:
            msg = f"Dataset {self.dataset!r} not in store (datasets: {store.datasets})"
            logger.error(msg)
            raise ConfigError(msg)
        if config.device not in store.devices:
            msg = f"Device {config.device!r} not in store (devices: {list(store.devices)})"
            logger.error(msg)
            raise ConfigError(msg)

        if predictor is None:
            if config.predictor is None:
                predictor = default_predictor(store, self.dataset, config.predictor_sample_size, config.seed)
            else:
                predictor = make_predictor(
                    config.predictor, store, self.dataset,
                    sample_size=config.predictor_sample_size,
                    seed=config.seed,
                    feature_index=config.proxy_index,
                )
        self.predictor = predictor
        # Predictors of unknown kind are read as accuracy predictors
        kind = getattr(predictor, 'kind', PredictorKind.ORACLE.value)
        self.score_is_accuracy = kind not in {k.value for k in PredictorKind} or PredictorKind(kind).predicts_accuracy

        self.client = None
        if operator is None:
            if config.operator == 'llm':
                self.client = TextServiceClient(config.service)
                operator = LLMOperator(self.client, config.children_per_call, config.max_operator_retries)
            else:
                operator = BaselineOperator()
        elif isinstance(operator, LLMOperator):
            self.client = operator.client
        self.operator = operator

        self.niches : NicheSet = config.effective_niches()
        self.workers = config.workers or len(self.niches)
        self.n_children = config.n_children * config.budget_scale
        self.evaluations : list[dict] = []
        self.seen : set[str] = set()
        self.stats = OperatorStats()
        self._shared_kb = KnowledgeBase(capacity=config.kb_capacity)

    ########################
    #### Initialization ####
    ########################

    def initialize(self) -> list[NicheState]:
        """
        Sample ``init_per_niche`` distinct cells uniformly from each niche and
        seed the archives with them.
        """
        cards = niche_cardinalities(self.niches)
        target = self.config.init_per_niche * self.config.budget_scale
        states = []
        for niche in self.niches:
            if cards[niche.niche_id] == 0:
                msg = f"Niche {niche.niche_id} ({niche.describe()}) contains no architecture"
                logger.error(msg)
                raise ConfigError(msg)
            rng = random.Random(derive_seed(self.config.seed, "niche", niche.niche_id))
            state = NicheState(
                niche=niche,
                archive=ParetoArchive(self.config.archive_literal),
                knowledge_base=KnowledgeBase(capacity=self.config.kb_capacity),
                rng=rng,
            )
            n = min(target, cards[niche.niche_id])
            if n < target:
                logger.warning(f"Niche {niche.niche_id} only has {n} architectures; sampling all of them")
            picked = []
            while len(picked) < n:
                cell = random_cell(rng)
                arch = encode(cell)
                if niche.contains(cell) and arch not in picked and arch not in self.seen:
                    picked.append(arch)
            for arch in picked:
                self.seen.add(arch)
                self.evaluations.append(
                    self._evaluate_into(state, arch, 0, "init", "initial sample", child_id="init")
                )
            logger.info(f"Niche {niche.niche_id} initialized with {len(state.archive)} archive member(s)")
            states.append(state)
        return states

    ####################
    #### Evaluation ####
    ####################

    def _evaluate_into(
        self,
        state : NicheState,
        arch : str,
        generation : int,
        operation : str,
        rationale : str,
        child_id : str,
    ) -> dict:
        entry = {
            'generation': generation,
            'niche': state.niche_id,
            'arch': arch,
            'child_id': child_id,
            'operation': operation,
            'status': None,
            'z_pred': None,
            'latency': None,
            'accuracy': None,
            'removed': [],
            'rationale': rationale,
        }
        try:
            z_pred = float(self.predictor.predict(arch))
            record = self.store.record(arch, self.dataset)
        except ArchNotFoundError as e:
            logger.debug(f"Niche {state.niche_id}: {arch} not found ({e})")
            entry['status'] = 'not_found'
            return entry
        evaluated = EvaluatedArch(
            arch=arch,
            niche=state.niche_id,
            z_pred=z_pred,
            latency=record.latency[self.config.device],
            accuracy=record.accuracy,
            rationale=rationale,
            generation=generation,
            operation=operation,
        )
        accepted, removed = state.archive.insert(evaluated)
        entry.update(
            status='accepted' if accepted else 'rejected',
            z_pred=evaluated.z_pred,
            latency=evaluated.latency,
            accuracy=evaluated.accuracy,
            removed=[m.arch for m in removed],
        )
        logger.debug(f"Niche {state.niche_id}: {arch} {entry['status']} (z={z_pred:.3f}, lat={evaluated.latency:.3f})")
        return entry

    def _context(self, state : NicheState, generation : int, n_children : int | None = None) -> GenerationContext:
        return GenerationContext(
            device=self.config.device,
            dataset=self.dataset,
            niche=state.niche,
            parents=tuple(m.to_parent() for m in state.archive),
            knowledge_base=self._shared_kb if self.config.share_knowledge_base else state.knowledge_base,
            n_children=n_children or self.n_children,
            rng=state.rng,
            generation=generation,
            crossover_prob=self.config.crossover_prob,
            latency_limit=self.config.latency_limit,
            parent_selection=self.config.parent_selection,
            score_is_accuracy=self.score_is_accuracy,
        )

    ##################
    #### Stage 1 ####
    ##################

    def _update_knowledge(self, states : list[NicheState], generation : int):
        if self.config.share_knowledge_base:
            for state in states:
                ctx = self._context(state, generation)
                update = self.operator.update_knowledge(ctx, list(state.last_results))
                self._shared_kb = update.knowledge_base
                self._count_stage1(update)
            return

        def work(state):
            ctx = self._context(state, generation)
            return self.operator.update_knowledge(ctx, list(state.last_results))

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            updates = list(pool.map(work, states))
        for state, update in zip(states, updates):
            state.knowledge_base = update.knowledge_base
            self._count_stage1(update)

    def _count_stage1(self, update):
        self.stats.stage1_calls += update.calls
        self.stats.stage1_failures += update.failures
        self.stats.errors.extend(update.errors)

    #################
    #### Stage 2 ####
    #################

    def _gate(self, state, proposal, generation, snapshot, local) -> dict:
        arch = proposal.architecture_code
        base = {
            'generation': generation,
            'niche': state.niche_id,
            'arch': arch,
            'child_id': proposal.child_id,
            'operation': proposal.operation,
            'z_pred': None,
            'latency': None,
            'accuracy': None,
            'removed': [],
            'rationale': proposal.rationale,
        }
        if arch in snapshot or arch in local:
            return {**base, 'status': 'non_novel'}
        if not state.niche.contains(proposal.cell):
            return {**base, 'status': 'constraint_violation'}
        local.add(arch)
        return self._evaluate_into(
            state, arch, generation, proposal.operation, proposal.rationale, proposal.child_id,
        )

    def _evolve_niche(self, state : NicheState, generation : int, snapshot : frozenset) -> _NicheOutcome:
        result : OperatorResult = self.operator.generate(self._context(state, generation))
        entries = [
            {
                'generation': generation,
                'niche': state.niche_id,
                'arch': None,
                'child_id': None,
                'operation': None,
                'status': 'invalid',
                'z_pred': None,
                'latency': None,
                'accuracy': None,
                'removed': [],
                'rationale': "",
            }
            for _ in range(result.invalid)
        ]
        local = set()
        for proposal in result.proposals:
            entries.append(self._gate(state, proposal, generation, snapshot, local))
        return _NicheOutcome(entries, local, result)

    def evolve_generation(self, states : list[NicheState], generation : int) -> list[NicheState]:
        """
        One generation over all niches: knowledge update (from the second
        generation on), then children generation, gating and archive update.
        """
        if generation < 1:
            raise ValueError(f"generation must be >= 1, got {generation}")
        if generation >= 2:
            self._update_knowledge(states, generation)

        snapshot = frozenset(self.seen)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            outcomes = list(pool.map(lambda s: self._evolve_niche(s, generation, snapshot), states))

        for state, outcome in zip(states, outcomes):
            self.evaluations.extend(outcome.entries)
            state.last_results = [
                ParentRecord(e['arch'], e['z_pred'], e['latency'], e['rationale'])
                for e in outcome.entries if e['status'] in ('accepted', 'rejected')
            ]
            self.seen |= outcome.seen
            self.stats.stage2_calls += outcome.result.calls
            self.stats.stage2_failures += outcome.result.failures
            self.stats.fallbacks += outcome.result.fallbacks
            self.stats.invalid_proposals += outcome.result.invalid
            self.stats.errors.extend(outcome.result.errors)
        accepted = sum(1 for o in outcomes for e in o.entries if e['status'] == 'accepted')
        logger.info(f"Generation {generation} done: {accepted} accepted, {len(self.seen)} evaluated so far")
        return states

    #####################
    #### Aggregation ####
    #####################

    def _objective_source(self) -> str:
        return 'true' if self.store.is_complete(self.dataset) else 'predicted'

    def _bounds(self, source : str) -> NormalizationBounds:
        if self.config.bounds is not None:
            return self.config.bounds
        if source == 'true':
            return self.store.bounds(self.config.device, self.dataset)
        evaluated = [e for e in self.evaluations if e['status'] in ('accepted', 'rejected')]
        acc = np.array([e['z_pred'] for e in evaluated])
        lat = np.array([e['latency'] for e in evaluated])
        acc_lo, acc_hi = float(acc.min()), float(acc.max())
        lat_lo, lat_hi = float(lat.min()), float(lat.max())
        if acc_hi <= acc_lo:
            acc_hi = acc_lo + 1.0
        if lat_hi <= lat_lo:
            lat_hi = lat_lo + 1.0
        return NormalizationBounds(acc_lo, acc_hi, lat_lo, lat_hi)

    def _value(self, source : str, accuracy : float | None, z_pred : float) -> float:
        return accuracy if source == 'true' and accuracy is not None else z_pred

    def _front(self, members : Sequence[EvaluatedArch], source : str) -> list[EvaluatedArch]:
        points = [(-self._value(source, m.accuracy, m.z_pred), m.latency) for m in members]
        front = non_dominated_sort(points, [str(i) for i in range(len(members))])
        return [members[int(i)] for i in front.arch_ids]

    def _normalized(self, members : Iterable, source : str, bounds : NormalizationBounds) -> FrontSet:
        members = list(members)
        acc = [self._value(source, m.accuracy, m.z_pred) for m in members]
        lat = [m.latency for m in members]
        return non_dominated_sort(normalize_pairs(acc, lat, bounds), [m.arch for m in members])

    def _hv_trace(self, source : str, bounds : NormalizationBounds) -> list[float]:
        trace = []
        accepted = []
        by_generation : dict[int, list[dict]] = {}
        for e in self.evaluations:
            if e['status'] == 'accepted':
                by_generation.setdefault(e['generation'], []).append(e)
        for g in range(self.config.generations + 1):
            accepted.extend(by_generation.get(g, []))
            acc = [self._value(source, e['accuracy'], e['z_pred']) for e in accepted]
            lat = [e['latency'] for e in accepted]
            trace.append(hypervolume(normalize_pairs(acc, lat, bounds)).value)
        return trace

    def aggregate(self, states : list[NicheState], wall_time : float) -> RunReport:
        source = self._objective_source()
        bounds = self._bounds(source)
        union = [m for state in states for m in state.archive]
        front = self._front(union, source)
        found = self._normalized(front, source, bounds)
        report = RunReport(
            config=self.config,
            dataset=self.dataset,
            operator=self.operator.kind,
            predictor=str(self.predictor.kind),
            objective_source=source,
            bounds=bounds,
            front=front,
            archives={s.niche_id: list(s.archive) for s in states},
            hv_trace=self._hv_trace(source, bounds),
            stats=self.stats,
            gate_counts=dict(Counter(e['status'] for e in self.evaluations)),
            evaluations=self.evaluations,
            wall_time=wall_time,
            hv=hypervolume(found).value,
            service_mode=self.client.mode.value if self.client is not None else None,
        )
        if source == 'true':
            truth = self.store.true_front(self.config.device, self.dataset, bounds=bounds)
            report.igd = igd(found, truth)
            report.hv_truth = hypervolume(truth).value
        return report

    def run(self) -> RunReport:
        """
        Initialization, ``generations`` generations and aggregation.
        """
        t0 = time.perf_counter()
        logger.info(
            f"Starting {self.config.mode} search: operator={self.operator.kind}, "
            f"predictor={self.predictor.kind}, niches={len(self.niches)}, "
            f"generations={self.config.generations}, seed={self.config.seed}"
        )
        states = self.initialize()
        generations = range(1, self.config.generations + 1)
        if self.config.progress:
            generations = tqdm(generations, desc="generations", unit="gen")
        for g in generations:
            self.evolve_generation(states, g)
        report = self.aggregate(states, time.perf_counter() - t0)
        logger.info(
            f"Search finished in {report.wall_time:.2f} s: {len(report.front)} front members, HV={report.hv:.4f}"
        )
        return report


def initialize(config : EngineConfig, store : BenchmarkStore, predictor : SupportsPrediction) -> list[NicheState]:
    return SearchEngine(config, store, predictor).initialize()


def evolve_generation(engine : SearchEngine, states : list[NicheState], generation : int) -> list[NicheState]:
    return engine.evolve_generation(states, generation)


def run_search(
    config : EngineConfig,
    store : BenchmarkStore,
    predictor : SupportsPrediction | None = None,
    operator : ArchitectureOperator | None = None,
) -> RunReport:
    """
    Run a full search and return its report.
    """
    return SearchEngine(config, store, predictor, operator).run()
