"""
Offline stand-in for a hardware-aware benchmark: a seeded generative model
that fills a complete store with plausible accuracy, per-device latency and
zero-cost proxy scores for every cell of the search space.

Latency is additive over edges (so swapping an empty edge for any operator
never makes a cell faster). Accuracy depends on operator counts, edge
positions and pairwise operator interactions, which keeps the true front out
of reach of greedy single-edge reasoning. Proxy scores are noisy monotone
transforms of the true accuracy.
"""
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
import itertools
import json

import numpy as np
from scipy.special import expit

from ..arch_space import NUM_EDGES, OpKind, encode, enumerate_space
from ..errors import ConfigError
from ..utils import default_synthetic_store_path
from .store import DEVICES, NUM_PROXIES, BenchmarkRecord, BenchmarkStore, load_store

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'SyntheticModel',
    'synthesize',
    'cached_synthetic_store',
]

ACCURACY_RANGE = (10.0, 95.0)

# ms per operator (none, skip, conv1x1, conv3x3, avg_pool) on each device
_OP_COSTS = {
    "edgegpu": (0.0, 0.08, 0.45, 1.20, 0.35),
    "raspi4": (0.0, 0.30, 2.50, 9.00, 1.80),
    "edgetpu": (0.0, 0.02, 0.10, 0.25, 0.30),
    "pixel3": (0.0, 0.20, 1.40, 4.50, 0.90),
    "eyeriss": (0.0, 0.10, 0.90, 3.10, 0.50),
    "fpga": (0.0, 0.05, 0.35, 0.90, 0.45),
}
_BASE_LATENCY = {
    "edgegpu": 1.6,
    "raspi4": 4.0,
    "edgetpu": 0.9,
    "pixel3": 2.2,
    "eyeriss": 1.0,
    "fpga": 1.2,
}
_OP_WEIGHTS = (-0.55, 0.25, 0.55, 0.95, 0.20)
_EDGE_WEIGHTS = (0.8, 0.9, 1.0, 1.0, 1.1, 1.2)
_PAIR_WEIGHTS = (
    # none  skip   1x1    3x3    pool
    (0.00, 0.00, 0.00, 0.00, 0.00),
    (0.00, 0.00, 0.15, 0.25, -0.05),
    (0.00, 0.15, -0.10, 0.05, 0.00),
    (0.00, 0.25, 0.05, -0.35, 0.00),
    (0.00, -0.05, 0.00, 0.00, -0.20),
)

_PROXY_TRANSFORMS = (
    lambda v: v / 100.0,
    lambda v: np.exp(v / 25.0),
    lambda v: np.arctan((v - 50.0) / 20.0),
    lambda v: (v / 10.0) ** 3,
    lambda v: np.logaddexp(0.0, v / 10.0),
)


def _default_proxy_noise() -> tuple[float, ...]:
    return tuple(round(float(x), 4) for x in np.linspace(0.3, 1.0, NUM_PROXIES))


@dataclass(frozen=True)
class SyntheticModel:
    """
    Parameters of the synthetic benchmark generator.

    Parameters
    ----------
    seed : int
        Seed of every random draw; the same model always yields the same store.
    dataset : str
        Dataset name written into the records.
    op_costs : dict[str, tuple[float, ...]]
        Per-device latency cost (ms) of each operator, indexed by `OpKind`.
        An empty edge costs nothing.
    base_latency : dict[str, float]
        Per-device latency of the cell skeleton (ms).
    latency_jitter : float
        Relative jitter applied per (device, edge, operator), in ``[0, 1)``.
    op_weights : tuple[float, ...]
        Accuracy contribution of each operator.
    edge_weights : tuple[float, ...]
        Multiplier of the operator contribution at each edge position.
    pair_weights : tuple[tuple[float, ...], ...]
        Symmetric 5x5 interaction between the operators of every edge pair.
    pair_scale : float
        Global scale of the pairwise interactions.
    acc_center, acc_scale : float
        Location and width of the sigmoid that maps the score to accuracy.
    noise : float
        Standard deviation of the score noise (the "training noise").
    proxy_noise : tuple[float, ...]
        Per-proxy noise, in units of the accuracy standard deviation.
    """
    seed : int = 0
    dataset : str = "cifar10"
    op_costs : dict[str, tuple[float, ...]] = field(default_factory=lambda: dict(_OP_COSTS))
    base_latency : dict[str, float] = field(default_factory=lambda: dict(_BASE_LATENCY))
    latency_jitter : float = 0.05
    op_weights : tuple[float, ...] = _OP_WEIGHTS
    edge_weights : tuple[float, ...] = _EDGE_WEIGHTS
    pair_weights : tuple[tuple[float, ...], ...] = _PAIR_WEIGHTS
    pair_scale : float = 0.4
    acc_center : float = 1.0
    acc_scale : float = 1.2
    noise : float = 0.1
    proxy_noise : tuple[float, ...] = field(default_factory=_default_proxy_noise)

    def __post_init__(self):
        n_ops = len(OpKind)
        object.__setattr__(self, 'op_costs', {d: tuple(float(c) for c in v) for d, v in self.op_costs.items()})
        object.__setattr__(self, 'base_latency', {d: float(v) for d, v in self.base_latency.items()})
        object.__setattr__(self, 'op_weights', tuple(float(w) for w in self.op_weights))
        object.__setattr__(self, 'edge_weights', tuple(float(w) for w in self.edge_weights))
        object.__setattr__(self, 'pair_weights', tuple(tuple(float(w) for w in row) for row in self.pair_weights))
        object.__setattr__(self, 'proxy_noise', tuple(float(s) for s in self.proxy_noise))

        if not self.op_costs:
            raise ConfigError("The synthetic model needs at least one device.")
        if set(self.op_costs) != set(self.base_latency):
            raise ConfigError("op_costs and base_latency must cover the same devices.")
        for device, costs in self.op_costs.items():
            if len(costs) != n_ops:
                raise ConfigError(f"Device {device!r} needs {n_ops} op costs, got {len(costs)}")
            if any(c < 0 for c in costs):
                raise ConfigError(f"Op costs must be >= 0 (device {device!r})")
            if costs[OpKind.NONE] != 0:
                raise ConfigError(f"An empty edge must cost 0 ms (device {device!r})")
            if not self.base_latency[device] > 0:
                raise ConfigError(f"Base latency must be > 0 (device {device!r})")
        if not 0.0 <= self.latency_jitter < 1.0:
            raise ConfigError(f"latency_jitter must be in [0, 1), got {self.latency_jitter}")
        if len(self.op_weights) != n_ops:
            raise ConfigError(f"op_weights needs {n_ops} entries")
        if len(self.edge_weights) != NUM_EDGES:
            raise ConfigError(f"edge_weights needs {NUM_EDGES} entries")
        pw = np.asarray(self.pair_weights)
        if pw.shape != (n_ops, n_ops) or not np.allclose(pw, pw.T):
            raise ConfigError(f"pair_weights must be a symmetric {n_ops}x{n_ops} table")
        if not self.acc_scale > 0:
            raise ConfigError("acc_scale must be > 0")
        if self.noise < 0 or any(s < 0 for s in self.proxy_noise):
            raise ConfigError("Noise amplitudes must be >= 0")
        if len(self.proxy_noise) != NUM_PROXIES:
            raise ConfigError(f"proxy_noise needs {NUM_PROXIES} entries, got {len(self.proxy_noise)}")

    @property
    def devices(self) -> tuple[str, ...]:
        known = [d for d in DEVICES if d in self.op_costs]
        return tuple(known + sorted(set(self.op_costs) - set(DEVICES)))

    def noiseless(self) -> 'SyntheticModel':
        """
        Same model with zero score and proxy noise.
        """
        return replace(self, noise=0.0, proxy_noise=(0.0,) * NUM_PROXIES)

    def to_dict(self) -> dict:
        d = asdict(self)
        d['op_costs'] = {k: list(v) for k, v in self.op_costs.items()}
        d['op_weights'] = list(self.op_weights)
        d['edge_weights'] = list(self.edge_weights)
        d['pair_weights'] = [list(r) for r in self.pair_weights]
        d['proxy_noise'] = list(self.proxy_noise)
        return d

    @classmethod
    def from_dict(cls, data : dict) -> 'SyntheticModel':
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown synthetic model keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path : str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path : str | Path) -> 'SyntheticModel':
        return cls.from_dict(json.loads(Path(path).read_text()))


def _round(values : np.ndarray) -> list[float]:
    # Ten significant digits keeps files compact; rounding is monotone.
    return [float(f"{v:.10g}") for v in values]


def synthesize(model : SyntheticModel | None = None) -> BenchmarkStore:
    """
    Generate a complete benchmark store from ``model``.

    Parameters
    ----------
    model : SyntheticModel | None
        The generator parameters. Default: ``SyntheticModel()``.

    Returns
    -------
    BenchmarkStore
        One record per cell of the search space, in enumeration order.
    """
    if model is None:
        model = SyntheticModel()
    rng = np.random.default_rng(model.seed)
    n_ops = len(OpKind)

    ops = np.array(list(itertools.product(range(n_ops), repeat=NUM_EDGES)), dtype=np.intp)
    n = len(ops)
    edge_idx = np.arange(NUM_EDGES)

    latency = {}
    for device in model.devices:
        jitter = 1.0 + model.latency_jitter * rng.uniform(-1.0, 1.0, size=(NUM_EDGES, n_ops))
        costs = np.asarray(model.op_costs[device])[None, :] * jitter
        latency[device] = _round(model.base_latency[device] + costs[edge_idx, ops].sum(axis=1))

    op_w = np.asarray(model.op_weights)
    edge_w = np.asarray(model.edge_weights)
    pair_w = np.asarray(model.pair_weights)
    score = (edge_w[None, :] * op_w[ops]).sum(axis=1)
    for i, j in itertools.combinations(range(NUM_EDGES), 2):
        score += model.pair_scale * pair_w[ops[:, i], ops[:, j]]
    score += model.noise * rng.standard_normal(n)
    lo, hi = ACCURACY_RANGE
    accuracy = np.clip(lo + (hi - lo) * expit((score - model.acc_center) / model.acc_scale), lo, hi)
    accuracy = np.asarray(_round(accuracy))

    acc_std = float(accuracy.std())
    features = np.empty((n, NUM_PROXIES))
    for j, sigma in enumerate(model.proxy_noise):
        noisy = accuracy + sigma * acc_std * rng.standard_normal(n)
        features[:, j] = _PROXY_TRANSFORMS[j % len(_PROXY_TRANSFORMS)](noisy)
    features = [_round(row) for row in features]

    archs = [encode(cell) for cell in enumerate_space()]
    records = (
        BenchmarkRecord(
            arch=archs[i],
            dataset=model.dataset,
            accuracy=float(accuracy[i]),
            latency={d: latency[d][i] for d in model.devices},
            proxy_features=tuple(features[i]),
        )
        for i in range(n)
    )
    logger.info(f"Synthesizing benchmark: seed={model.seed}, dataset={model.dataset!r}, {n} cells")
    return BenchmarkStore(records, devices=model.devices, source=f"synthetic(seed={model.seed})")


def cached_synthetic_store(seed : int = 0, path : str | Path | None = None) -> BenchmarkStore:
    """
    Load the synthetic store for ``seed`` from the user cache, generating
    and caching it on first use.
    """
    path = Path(path) if path is not None else default_synthetic_store_path(seed)
    if path.is_file():
        logger.info(f"Using cached synthetic store {str(path)!r}")
        return load_store(path)
    store = synthesize(SyntheticModel(seed=seed))
    store.save(path)
    return store
