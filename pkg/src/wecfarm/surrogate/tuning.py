"""Training data, validation statistics and GWO-driven hyper-parameter tuning."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument, UndefinedStatistic
from .gwo import gwo_optimize
from .lstm import HyperParams, LSTMModel, train, with_validation

log = logging.getLogger(__name__)

_FIELDS = ("minibatch", "learning_rate", "epochs", "layers", "hidden")


def search_box(box: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    """GWO search box; the learning rate is searched on a log10 scale.

    ``box`` may narrow any field to a sub-range of :attr:`HyperParams.BOUNDS`.
    """
    box = dict(box or {})
    unknown = set(box) - set(_FIELDS)
    if unknown:
        raise InvalidArgument(f"unknown hyper-parameter(s) {sorted(unknown)}")
    lower, upper = [], []
    for name in _FIELDS:
        lo, hi = HyperParams.BOUNDS[name]
        a, b = box.get(name, (lo, hi))
        if not lo <= a <= b <= hi:
            raise InvalidArgument(f"{name} range [{a}, {b}] is not inside [{lo}, {hi}]")
        if name == "learning_rate":
            a, b = math.log10(a), math.log10(b)
        lower.append(float(a))
        upper.append(float(b))
    return np.array(lower), np.array(upper)


_LOWER, _UPPER = search_box()
MID_BOX = (_LOWER + _UPPER) / 2


def hyper_from_vector(v) -> HyperParams:
    """Map a GWO position to hyper-parameters, rounding the integer dimensions."""
    v = np.clip(np.asarray(v, dtype=float), _LOWER, _UPPER)
    return HyperParams(
        minibatch=int(np.rint(v[0])),
        learning_rate=float(10.0 ** v[1]),
        epochs=int(np.rint(v[2])),
        layers=int(np.rint(v[3])),
        hidden=int(np.rint(v[4])),
    )


def pearson_r(predictions, targets) -> float:
    """Sample correlation coefficient between two equal-length sequences."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.size != t.size or p.size < 2:
        raise InvalidArgument(f"need two equal-length sequences of length >= 2, got {p.size} and {t.size}")
    dp, dt = p - p.mean(), t - t.mean()
    sp, st = float(np.sum(dp * dp)), float(np.sum(dt * dt))
    if sp == 0.0 or st == 0.0:
        raise UndefinedStatistic("correlation is undefined for a constant sequence")
    r = float(np.sum(dp * dt)) / math.sqrt(sp * st)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class SequenceSample:
    """Positions in meters, placement order, candidate last; target in watts."""

    inputs: np.ndarray
    target: float
    provenance: int


class DataSet:
    """Simulator-labelled layouts collected during placement."""

    def __init__(self, side: float, samples=()):
        self.side = float(side)
        self.samples: list[SequenceSample] = list(samples)

    def __len__(self):
        return len(self.samples)

    def add(self, positions, target: float, provenance: int):
        arr = np.array(positions, dtype=float).reshape(-1, 2)
        if not math.isfinite(target):
            raise InvalidArgument("dataset targets must be finite")
        self.samples.append(SequenceSample(arr, float(target), int(provenance)))

    def provenance(self) -> list[int]:
        return sorted({s.provenance for s in self.samples})

    def restricted_to(self, provenance: int) -> "DataSet":
        return DataSet(self.side, [s for s in self.samples if s.provenance == provenance])

    @property
    def max_length(self) -> int:
        return max((s.inputs.shape[0] for s in self.samples), default=0)

    def arrays(self, length: int | None = None):
        """``(X, y)`` with sequences left-padded by repeating their first position."""
        if not self.samples:
            raise InvalidArgument("dataset is empty")
        length = self.max_length if length is None else length
        xs = np.empty((len(self.samples), length, 2))
        for k, s in enumerate(self.samples):
            xs[k] = pad_sequence(s.inputs, length)
        ys = np.array([s.target for s in self.samples])
        return xs, ys


def pad_sequence(seq, length: int) -> np.ndarray:
    seq = np.asarray(seq, dtype=float).reshape(-1, 2)
    if seq.shape[0] > length:
        raise InvalidArgument(f"sequence of length {seq.shape[0]} exceeds pad length {length}")
    pad = np.repeat(seq[:1], length - seq.shape[0], axis=0)
    return np.vstack([pad, seq])


def kfold_indices(n: int, folds: int) -> list[np.ndarray]:
    return np.array_split(np.arange(n), folds)


def cv_fitness(x, y, hyper: HyperParams, folds: list[np.ndarray], side: float, seed: int) -> float:
    """Mean validation MSE across folds, scaled by the target variance."""
    scale = float(np.var(y)) or 1.0
    errs = []
    for k, val in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != k])
        model, _ = train(x[train_idx], y[train_idx], hyper, seed + k, side)
        err = model.predict(x[val]) - y[val]
        errs.append(float(np.mean(err * err)) / scale)
    return float(np.mean(errs))


def tune_and_train(dataset: DataSet, pack_size: int = 8, iterations: int = 10, folds: int = 3,
                   seed: int = 0, holdout_fraction: float = 0.2, box: dict | None = None) -> LSTMModel:
    """Tune hyper-parameters by GWO over k-fold CV, retrain, and score on a held-out split.

    A random ``holdout_fraction`` of the samples is set aside first and never
    seen by tuning or training; the returned model's ``validation_r`` is the
    Pearson R on that split. One wolf starts at the middle of the box.
    """
    lower, upper = search_box(box)
    mid = (lower + upper) / 2
    x, y = dataset.arrays()
    n = len(y)
    n_hold = max(2, int(math.ceil(holdout_fraction * n)))
    if folds < 2 or n - n_hold < folds:
        raise InvalidArgument(f"{n} samples are too few for a held-out split and {folds} folds")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) % 2**64, n]))
    order = rng.permutation(n)
    # rest stays shuffled so folds mix placements
    hold, rest = np.sort(order[:n_hold]), order[n_hold:]
    assert not set(hold.tolist()) & set(rest.tolist())
    cv_folds = kfold_indices(rest.size, folds)
    xr, yr = x[rest], y[rest]
    train_seed = int(rng.integers(2**31))

    cache: dict[HyperParams, float] = {}

    def fitness(v):
        hyper = hyper_from_vector(v)
        if hyper not in cache:
            cache[hyper] = cv_fitness(xr, yr, hyper, cv_folds, dataset.side, train_seed)
        return cache[hyper]

    result = gwo_optimize(fitness, lower, upper, pack_size, iterations, int(rng.integers(2**31)), start=mid)
    best = hyper_from_vector(result.best_x)
    model, losses = train(xr, yr, best, train_seed, dataset.side)
    try:
        r = pearson_r(model.predict(x[hold]), y[hold])
    except UndefinedStatistic:
        r = math.nan
    model = with_validation(model, r)
    model.extras.update(
        gwo_best_per_iteration=result.best_per_iteration(),
        fitness=result.best_fitness,
        mid_box_fitness=cache[hyper_from_vector(mid)],
        losses=losses,
        holdout=hold,
        train_rows=rest,
        trainings=len(cache) * folds + 1,
    )
    log.info("surrogate tuned: %s fitness=%.4g R=%.3f", best, result.best_fitness, r)
    return model
