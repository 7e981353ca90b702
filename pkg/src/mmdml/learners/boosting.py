"""Gradient-boosted regression trees built from scratch.

Squared-error trees with exact greedy splits on sorted feature values;
depth 1 gives classic boosted stumps.  Kept dependency-free on purpose:
at the sample sizes this package targets, exact splits are fast enough
and make results bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from ..core import SemiSynthDataset
from ..rng import substream
from .base import FittedLearner, GbtSpec, assemble_features, schema_of

_MIN_GAIN = 1e-12


def _best_split(x: np.ndarray, r: np.ndarray):
    """Return (gain, feature, threshold) of the best SSE split, or None."""
    n = len(r)
    if n < 2:
        return None
    total = r.sum()
    base = total * total / n
    best = None
    for j in range(x.shape[1]):
        col = x[:, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        # candidate cut positions: between strictly increasing neighbors
        cuts = np.flatnonzero(xs[:-1] < xs[1:])
        if cuts.size == 0:
            continue
        prefix = np.cumsum(r[order])[:-1]
        n_left = np.arange(1, n)
        left = prefix[cuts]
        nl = n_left[cuts]
        gain = left * left / nl + (total - left) ** 2 / (n - nl) - base
        k = int(np.argmax(gain))
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), j, float((xs[cuts[k]] + xs[cuts[k] + 1]) / 2.0))
    if best is None or best[0] <= _MIN_GAIN:
        return None
    return best


def _grow(x: np.ndarray, r: np.ndarray, depth: int):
    """Recursively grow a tree node: (feature, threshold, left, right) or leaf mean."""
    if depth == 0:
        return float(r.mean())
    split = _best_split(x, r)
    if split is None:
        return float(r.mean())
    _, j, thr = split
    mask = x[:, j] <= thr
    left = _grow(x[mask], r[mask], depth - 1)
    right = _grow(x[~mask], r[~mask], depth - 1)
    return (j, thr, left, right)


def _tree_predict(node, x: np.ndarray) -> np.ndarray:
    if not isinstance(node, tuple):
        return np.full(x.shape[0], node)
    j, thr, left, right = node
    out = np.empty(x.shape[0])
    mask = x[:, j] <= thr
    out[mask] = _tree_predict(left, x[mask])
    out[~mask] = _tree_predict(right, x[~mask])
    return out


def _boost(x: np.ndarray, t: np.ndarray, spec: GbtSpec, rng) -> tuple[float, list, list[float]]:
    """Fit the ensemble; returns (base, trees, per-round training losses)."""
    n = len(t)
    base = float(t.mean())
    pred = np.full(n, base)
    trees = []
    losses = []
    for _ in range(spec.trees):
        resid = t - pred
        if spec.subsample < 1.0:
            k = max(1, int(round(spec.subsample * n)))
            rows = rng.choice(n, size=k, replace=False)
            tree = _grow(x[rows], resid[rows], spec.depth)
        else:
            tree = _grow(x, resid, spec.depth)
        trees.append(tree)
        pred = pred + spec.learning_rate * _tree_predict(tree, x)
        losses.append(float(np.mean((t - pred) ** 2)))
    return base, trees, losses


class GbtFit(FittedLearner):
    def __init__(self, spec: GbtSpec, schema, ens_l, ens_m):
        super().__init__(tag=f"gbt(trees={spec.trees},depth={spec.depth})", schema=schema)
        self.spec = spec
        self.base_l, self.trees_l, self.train_losses_l = ens_l
        self.base_m, self.trees_m, self.train_losses_m = ens_m

    def _ensemble_predict(self, base, trees, x):
        pred = np.full(x.shape[0], base)
        for tree in trees:
            pred = pred + self.spec.learning_rate * _tree_predict(tree, x)
        return pred

    def _predict_arrays(self, ds: SemiSynthDataset):
        x = assemble_features(ds, self.modalities)
        return (
            self._ensemble_predict(self.base_l, self.trees_l, x),
            self._ensemble_predict(self.base_m, self.trees_m, x),
        )


def fit_gbt(spec: GbtSpec, train: SemiSynthDataset, modality_subset) -> GbtFit:
    x = assemble_features(train, modality_subset)
    ens_l = _boost(x, train.y, spec, substream(spec.seed, "gbt", "l"))
    ens_m = _boost(x, train.d, spec, substream(spec.seed, "gbt", "m"))
    return GbtFit(spec, schema_of(train, modality_subset), ens_l, ens_m)
