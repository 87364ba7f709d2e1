"""
Training-free performance surrogates.

A predictor maps a canonical architecture string to a score whose ranking
should track true accuracy. Four kinds exist:

``oracle``
    Forwards the stored accuracy. Used to isolate search quality from
    predictor error.
``rank_ensemble``
    Mean of the per-feature ranks of the 13 proxy scores.
``fitted``
    Ridge regression on rank-normalized proxy features, trained on a sampled
    subset of the store.
``single_proxy``
    One proxy column, rank-normalized over the store, for ablations.
"""
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence
import json

import numpy as np
from scipy.linalg import solve
from scipy.stats import rankdata

from .benchmark.store import NUM_PROXIES, BenchmarkStore
from .errors import ArchNotFoundError, PredictorError
from .objectives import spearman
from .protocols import SupportsPrediction

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'PredictorKind',
    'FitReport',
    'RankNormalizer',
    'Predictor',
    'OraclePredictor',
    'RankEnsemblePredictor',
    'FittedPredictor',
    'SingleProxyPredictor',
    'MIN_HOLDOUT',
    'DEFAULT_SAMPLE_SIZE',
    'fit',
    'evaluate_predictor',
    'make_predictor',
    'default_predictor',
    'save_predictor',
    'load_predictor',
]

MIN_HOLDOUT = 30
DEFAULT_SAMPLE_SIZE = 1000
_FILE_FORMAT = "niche_nas.predictor"
_FILE_VERSION = 1
_REGRESSOR = "ridge on rank-normalized features"


class PredictorKind(str, Enum):
    ORACLE = "oracle"
    RANK_ENSEMBLE = "rank_ensemble"
    FITTED = "fitted"
    SINGLE_PROXY = "single_proxy"

    @property
    def predicts_accuracy(self) -> bool:
        """
        True when predictions are on the accuracy scale (percent), False for
        rank scores in ``[0, 1]``.
        """
        return self in (PredictorKind.ORACLE, PredictorKind.FITTED)


@dataclass
class FitReport:
    """
    Rank fidelity of a predictor on a holdout sample.

    Parameters
    ----------
    kind : str
        Predictor kind.
    train_size : int
        Number of training architectures (0 for untrained kinds).
    holdout_size : int
        Number of holdout architectures.
    spearman_holdout : float
        Spearman correlation of predictions and true accuracy on the holdout.
    weights : list[float] | None
        Regression weights, fitted kind only.
    intercept : float | None
        Regression intercept, fitted kind only.
    regressor : str | None
        Description of the regressor, fitted kind only.
    seed : int | None
        Seed of the train/holdout sampling.
    """
    kind : str
    train_size : int
    holdout_size : int
    spearman_holdout : float
    weights : list[float] | None = None
    intercept : float | None = None
    regressor : str | None = None
    seed : int | None = None

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'train_size': self.train_size,
            'holdout_size': self.holdout_size,
            'spearman_holdout': self.spearman_holdout,
            'weights': self.weights,
            'intercept': self.intercept,
            'regressor': self.regressor,
            'seed': self.seed,
        }


class RankNormalizer:
    """
    Strictly monotone map of each feature column onto its empirical CDF.

    Each column is interpolated linearly between its unique training values,
    placed at evenly spaced levels in ``[0, 1]``, and extrapolated linearly
    outside the training range with the slope of the outermost segment.
    """

    def __init__(self, knots : Sequence[Sequence[float]]):
        self.knots = [np.asarray(k, dtype=float) for k in knots]
        for k in self.knots:
            if k.size == 0 or np.any(np.diff(k) <= 0):
                raise PredictorError("Normalizer knots must be non-empty and strictly increasing.")

    @classmethod
    def fit(cls, features : np.ndarray) -> 'RankNormalizer':
        features = np.asarray(features, dtype=float)
        return cls([np.unique(features[:, j]) for j in range(features.shape[1])])

    @staticmethod
    def _column(x : np.ndarray, knots : np.ndarray) -> np.ndarray:
        m = len(knots)
        if m == 1:
            return np.full(x.shape, 0.5)
        levels = np.linspace(0.0, 1.0, m)
        out = np.interp(x, knots, levels)
        lo_slope = (levels[1] - levels[0]) / (knots[1] - knots[0])
        hi_slope = (levels[-1] - levels[-2]) / (knots[-1] - knots[-2])
        below = x < knots[0]
        above = x > knots[-1]
        out[below] = (x[below] - knots[0]) * lo_slope
        out[above] = 1.0 + (x[above] - knots[-1]) * hi_slope
        return out

    def transform(self, features : np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if features.shape[1] != len(self.knots):
            raise PredictorError(f"Expected {len(self.knots)} features, got {features.shape[1]}")
        return np.column_stack([self._column(features[:, j], k) for j, k in enumerate(self.knots)])

    def to_dict(self) -> dict:
        return {'knots': [k.tolist() for k in self.knots]}


class Predictor:
    """
    Base class of the store-backed predictors.

    A predictor is frozen after construction: ``predict`` is a pure function
    of the architecture string.

    Parameters
    ----------
    store : BenchmarkStore
        Store used to resolve architectures to accuracy or proxy features.
    dataset : str | None
        Dataset to predict for. Default: the store's first dataset.
    """
    kind : str = ""

    def __init__(self, store : BenchmarkStore, dataset : str | None = None):
        self.store = store
        self.dataset = dataset or store.default_dataset()
        self.train_archs : frozenset[str] = frozenset()

    def _features(self, arch : str) -> np.ndarray:
        record = self.store.record(arch, self.dataset)
        if record.proxy_features is None:
            raise PredictorError(f"No proxy features for {arch!r}")
        return np.asarray(record.proxy_features, dtype=float)

    def predict(self, arch : str) -> float:
        raise NotImplementedError(f"Must implement method predict for class {self.__class__.__name__}")

    def predict_many(self, archs : Sequence[str]) -> np.ndarray:
        return np.array([self.predict(a) for a in archs], dtype=float)

    def to_dict(self) -> dict:
        return {
            'format': _FILE_FORMAT,
            'version': _FILE_VERSION,
            'kind': self.kind,
            'dataset': self.dataset,
            'train_archs': sorted(self.train_archs),
        }

    def save(self, path : str | Path) -> Path:
        return save_predictor(self, path)

    def __repr__(self):
        return f"{self.__class__.__name__}(kind={self.kind!r}, dataset={self.dataset!r})"


class OraclePredictor(Predictor):
    kind = PredictorKind.ORACLE.value

    def predict(self, arch : str) -> float:
        return self.store.record(arch, self.dataset).accuracy


class RankEnsemblePredictor(Predictor):
    """
    Mean over the 13 proxies of the architecture's normalized rank among all
    architectures of the store.
    """
    kind = PredictorKind.RANK_ENSEMBLE.value

    def __init__(self, store : BenchmarkStore, dataset : str | None = None):
        super().__init__(store, dataset)
        table = store.table(self.dataset)
        if table.features is None:
            raise PredictorError("rank_ensemble needs proxy features in the store.")
        ranks = np.column_stack([rankdata(table.features[:, j]) for j in range(NUM_PROXIES)])
        self._scores = ranks.mean(axis=1) / len(table.archs)
        self._table = table

    def predict(self, arch : str) -> float:
        arch = self.store.canonical(arch)
        try:
            return float(self._scores[self._table.index_of(arch)])
        except KeyError:
            raise ArchNotFoundError(f"Architecture {arch!r} not found for dataset {self.dataset!r}") from None


class FittedPredictor(Predictor):
    kind = PredictorKind.FITTED.value

    def __init__(
        self,
        store : BenchmarkStore,
        normalizer : RankNormalizer,
        weights : Sequence[float],
        intercept : float,
        dataset : str | None = None,
        train_archs : Sequence[str] = (),
    ):
        super().__init__(store, dataset)
        self.normalizer = normalizer
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = float(intercept)
        self.train_archs = frozenset(train_archs)
        if self.weights.shape != (len(normalizer.knots),):
            raise PredictorError("Weights and normalizer disagree on the feature count.")

    def predict(self, arch : str) -> float:
        z = self.normalizer.transform(self._features(arch))[0]
        return float(z @ self.weights + self.intercept)

    def predict_many(self, archs : Sequence[str]) -> np.ndarray:
        if len(archs) == 0:
            return np.empty(0)
        x = np.vstack([self._features(a) for a in archs])
        return self.normalizer.transform(x) @ self.weights + self.intercept

    def to_dict(self) -> dict:
        return {
            **super().to_dict(),
            'normalizer': self.normalizer.to_dict(),
            'weights': self.weights.tolist(),
            'intercept': self.intercept,
        }


class SingleProxyPredictor(Predictor):
    """
    One proxy column mapped through a `RankNormalizer` fitted on every
    architecture of the store, so scores lie in ``[0, 1]``.
    """
    kind = PredictorKind.SINGLE_PROXY.value

    def __init__(self, store : BenchmarkStore, feature_index : int = 0, dataset : str | None = None):
        super().__init__(store, dataset)
        if not 0 <= feature_index < NUM_PROXIES:
            raise PredictorError(f"feature_index must be in [0, {NUM_PROXIES}), got {feature_index}")
        table = store.table(self.dataset)
        if table.features is None:
            raise PredictorError("single_proxy needs proxy features in the store.")
        self.feature_index = feature_index
        self.normalizer = RankNormalizer.fit(table.features[:, [feature_index]])

    def predict(self, arch : str) -> float:
        value = self._features(arch)[[self.feature_index]]
        return float(self.normalizer.transform(value)[0, 0])

    def to_dict(self) -> dict:
        return {**super().to_dict(), 'feature_index': self.feature_index}


def _ridge(z : np.ndarray, y : np.ndarray, alpha : float) -> tuple[np.ndarray, float]:
    z_mean = z.mean(axis=0)
    y_mean = y.mean()
    zc = z - z_mean
    gram = zc.T @ zc + alpha * np.eye(z.shape[1])
    w = solve(gram, zc.T @ (y - y_mean), assume_a='pos')
    return w, float(y_mean - z_mean @ w)


def fit(
    store : BenchmarkStore,
    sample_size : int = DEFAULT_SAMPLE_SIZE,
    seed : int = 0,
    dataset : str | None = None,
    alpha : float = 1.0,
) -> tuple[FittedPredictor, FitReport]:
    """
    Fit the ``fitted`` predictor on a random sample of the store.

    A disjoint holdout of the same size (or whatever remains) is drawn from
    the same permutation and used for the reported Spearman correlation.

    Parameters
    ----------
    store : BenchmarkStore
        A store with proxy features.
    sample_size : int
        Number of training architectures.
    seed : int
        Seed of the sampling permutation.
    dataset : str | None
        Dataset to fit on. Default: the store's first dataset.
    alpha : float
        Ridge penalty.

    Raises
    ------
    PredictorError
        If the store has no proxy features, the sample is larger than the
        store, or the remaining holdout is smaller than ``MIN_HOLDOUT``.
    """
    dataset = dataset or store.default_dataset()
    table = store.table(dataset)
    if table.features is None:
        msg = "Cannot fit a predictor: the store has no proxy features."
        logger.error(msg)
        raise PredictorError(msg)
    n = len(table.archs)
    if not 0 < sample_size <= n:
        raise PredictorError(f"sample_size must be in [1, {n}], got {sample_size}")
    holdout_size = min(sample_size, n - sample_size)
    if holdout_size < MIN_HOLDOUT:
        raise PredictorError(
            f"Only {holdout_size} architectures left for the holdout (need {MIN_HOLDOUT})."
        )

    perm = np.random.default_rng(seed).permutation(n)
    train = perm[:sample_size]
    hold = perm[sample_size:sample_size + holdout_size]

    normalizer = RankNormalizer.fit(table.features[train])
    weights, intercept = _ridge(normalizer.transform(table.features[train]), table.accuracy[train], alpha)
    predictor = FittedPredictor(
        store, normalizer, weights, intercept,
        dataset=dataset,
        train_archs=[table.archs[i] for i in train],
    )
    predicted = normalizer.transform(table.features[hold]) @ weights + intercept
    rho = _spearman_or_raise(predicted, table.accuracy[hold])
    report = FitReport(
        kind=predictor.kind,
        train_size=int(sample_size),
        holdout_size=int(holdout_size),
        spearman_holdout=rho,
        weights=weights.tolist(),
        intercept=intercept,
        regressor=_REGRESSOR,
        seed=seed,
    )
    logger.info(f"Fitted predictor on {sample_size} archs: holdout Spearman={rho:.4f} (n={holdout_size})")
    return predictor, report


def _spearman_or_raise(predicted, truth) -> float:
    try:
        return spearman(predicted, truth)
    except ValueError as e:
        msg = f"Predictor evaluation failed: {e}"
        logger.error(msg)
        raise PredictorError(msg) from e


def evaluate_predictor(
    predictor : SupportsPrediction,
    store : BenchmarkStore,
    holdout_seed : int = 0,
    holdout_size : int = DEFAULT_SAMPLE_SIZE,
    dataset : str | None = None,
) -> FitReport:
    """
    Spearman correlation of ``predictor`` against true accuracy on a random
    holdout that excludes the predictor's training architectures.

    Raises
    ------
    PredictorError
        If the holdout has fewer than ``MIN_HOLDOUT`` architectures, or the
        predictions (or accuracies) are constant.
    """
    dataset = dataset or getattr(predictor, 'dataset', None) or store.default_dataset()
    table = store.table(dataset)
    excluded = getattr(predictor, 'train_archs', frozenset())
    candidates = [i for i, a in enumerate(table.archs) if a not in excluded]
    size = min(holdout_size, len(candidates))
    if size < MIN_HOLDOUT:
        msg = f"Holdout of {size} architectures is too small (need {MIN_HOLDOUT})."
        logger.error(msg)
        raise PredictorError(msg)
    rng = np.random.default_rng(holdout_seed)
    picked = np.asarray(candidates)[rng.permutation(len(candidates))[:size]]
    archs = [table.archs[i] for i in picked]
    if hasattr(predictor, 'predict_many'):
        predicted = predictor.predict_many(archs)
    else:
        predicted = [predictor.predict(a) for a in archs]
    rho = _spearman_or_raise(predicted, table.accuracy[picked])
    return FitReport(
        kind=str(predictor.kind),
        train_size=len(excluded),
        holdout_size=size,
        spearman_holdout=rho,
        weights=getattr(predictor, 'weights', np.empty(0)).tolist() or None,
        intercept=getattr(predictor, 'intercept', None),
        regressor=_REGRESSOR if predictor.kind == PredictorKind.FITTED.value else None,
        seed=holdout_seed,
    )


def make_predictor(
    kind : str | PredictorKind,
    store : BenchmarkStore,
    dataset : str | None = None,
    sample_size : int = DEFAULT_SAMPLE_SIZE,
    seed : int = 0,
    feature_index : int = 0,
) -> Predictor:
    """
    Build a predictor of the given kind (fitting it if needed).
    """
    try:
        kind = PredictorKind(kind)
    except ValueError:
        raise PredictorError(
            f"Unknown predictor kind {kind!r} (choose from {[k.value for k in PredictorKind]})"
        ) from None
    if kind is PredictorKind.ORACLE:
        return OraclePredictor(store, dataset)
    if kind is PredictorKind.RANK_ENSEMBLE:
        return RankEnsemblePredictor(store, dataset)
    if kind is PredictorKind.SINGLE_PROXY:
        return SingleProxyPredictor(store, feature_index, dataset)
    predictor, _ = fit(store, sample_size=sample_size, seed=seed, dataset=dataset)
    return predictor


def default_predictor(
    store : BenchmarkStore,
    dataset : str | None = None,
    sample_size : int = DEFAULT_SAMPLE_SIZE,
    seed : int = 0,
) -> Predictor:
    """
    ``fitted`` when the store has proxy features, else ``oracle``.
    """
    if store.has_proxy_features:
        return make_predictor(PredictorKind.FITTED, store, dataset, sample_size=sample_size, seed=seed)
    logger.warning(
        "The store has no proxy features: falling back to the ORACLE predictor, "
        "which reads true accuracy. Search results will not reflect predictor error."
    )
    return OraclePredictor(store, dataset)


def save_predictor(predictor : Predictor, path : str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(predictor.to_dict(), indent=1) + "\n")
    logger.info(f"Saved {predictor.kind} predictor to {str(path)!r}")
    return path


def load_predictor(path : str | Path, store : BenchmarkStore) -> Predictor:
    """
    Load a predictor file and bind it to ``store``.

    Raises
    ------
    PredictorError
        If the file is not a predictor file of a supported version.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise PredictorError(f"Cannot read predictor file {str(path)!r}: {e}") from e
    if not isinstance(data, dict) or data.get('format') != _FILE_FORMAT:
        raise PredictorError(f"{str(path)!r} is not a predictor file.")
    if data.get('version') != _FILE_VERSION:
        raise PredictorError(
            f"Unsupported predictor file version {data.get('version')!r} (expected {_FILE_VERSION})"
        )
    try:
        kind = PredictorKind(data['kind'])
        dataset = data['dataset']
        if kind is PredictorKind.FITTED:
            return FittedPredictor(
                store,
                RankNormalizer(data['normalizer']['knots']),
                data['weights'],
                data['intercept'],
                dataset=dataset,
                train_archs=data.get('train_archs', ()),
            )
        if kind is PredictorKind.SINGLE_PROXY:
            return SingleProxyPredictor(store, data['feature_index'], dataset)
    except (KeyError, TypeError, ValueError) as e:
        raise PredictorError(f"Malformed predictor file {str(path)!r}: {e}") from e
    return make_predictor(kind, store, dataset)
