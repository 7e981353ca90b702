"""Middle-fusion neural network trained with the product-of-RMSE loss.

Each modality block passes through its own small encoder; encoder outputs
are concatenated, fused through a hidden layer, and reduced to an
E-dimensional embedding from which two linear heads predict the outcome
and the treatment.  Both heads train simultaneously on

    L = sqrt(mean((d - m_hat)^2)) * sqrt(mean((y - l_hat)^2)),

so the gradient through the shared layers mixes both factors:
dL = ||r_l|| * d||r_m|| + ||r_m|| * d||r_l||.

Plain mini-batch gradient descent with a constant step keeps runs exactly
reproducible; the epoch with the lowest holdout combined loss is the
reported model unless the spec selects the last epoch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..core import FLOAT_FMT, SemiSynthDataset
from ..errors import ConfigError, TrainingDivergedError
from ..rng import substream
from .base import EmbeddingSpec, FittedLearner, FusionArch, FusionSpec, schema_of


def combined_loss(l_hat, m_hat, y, d) -> float:
    """Product of the two empirical root-mean-squared errors."""
    l_hat, m_hat, y, d = (np.asarray(v, dtype=float) for v in (l_hat, m_hat, y, d))
    if not (len(l_hat) == len(m_hat) == len(y) == len(d)) or len(y) == 0:
        raise ConfigError("combined_loss needs four equal-length, nonempty vectors")
    rmse_l = np.sqrt(np.mean((y - l_hat) ** 2))
    rmse_m = np.sqrt(np.mean((d - m_hat) ** 2))
    return float(rmse_l * rmse_m)


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    return (z > 0).astype(float) if name == "relu" else 1.0 - a * a


def init_params(arch: FusionArch, block_dims: list[int], seed: int, init_scale: float) -> dict:
    """Seeded uniform init scaled by 1/sqrt(fan_in); biases start at zero."""
    rng = substream(seed, "fusion", "init")

    def layer(fan_in, fan_out):
        a = init_scale / np.sqrt(fan_in)
        return [rng.uniform(-a, a, size=(fan_in, fan_out)), np.zeros(fan_out)]

    encoders = []
    for dim in block_dims:
        layers = []
        fan = dim
        for w in arch.encoder_widths:
            layers.append(layer(fan, w))
            fan = w
        encoders.append(layers)
    concat_dim = len(block_dims) * arch.encoder_widths[-1]
    params = {
        "encoders": encoders,
        "fusion": layer(concat_dim, arch.fusion_width),
        "embed": layer(arch.fusion_width, arch.embedding_dim),
        "head_l": [rng.uniform(-1, 1, size=arch.embedding_dim) * init_scale / np.sqrt(arch.embedding_dim), np.zeros(1)],
        "head_m": [rng.uniform(-1, 1, size=arch.embedding_dim) * init_scale / np.sqrt(arch.embedding_dim), np.zeros(1)],
    }
    return params


def iter_arrays(params: dict):
    """Yield every parameter array in a fixed layer-major order."""
    for enc in params["encoders"]:
        for w, b in enc:
            yield w
            yield b
    for key in ("fusion", "embed", "head_l", "head_m"):
        yield params[key][0]
        yield params[key][1]


def _forward(params: dict, arch: FusionArch, xs: list[np.ndarray]):
    """Full forward pass; returns (l_hat, m_hat, embedding, caches)."""
    act = arch.activation
    enc_caches = []
    outs = []
    for x, layers in zip(xs, params["encoders"]):
        a = x
        cache = []
        for w, b in layers:
            z = a @ w + b
            a_next = _act(act, z)
            cache.append((a, z, a_next))
            a = a_next
        enc_caches.append(cache)
        outs.append(a)
    concat = np.hstack(outs) if len(outs) > 1 else outs[0]
    wf, bf = params["fusion"]
    zf = concat @ wf + bf
    f = _act(act, zf)
    we, be = params["embed"]
    ze = f @ we + be
    h = _act(act, ze)
    l_hat = h @ params["head_l"][0] + params["head_l"][1][0]
    m_hat = h @ params["head_m"][0] + params["head_m"][1][0]
    caches = (enc_caches, concat, zf, f, ze, h)
    return l_hat, m_hat, h, caches


def loss_and_grads(params: dict, arch: FusionArch, xs: list[np.ndarray], y: np.ndarray, d: np.ndarray):
    """Combined loss and its exact gradient for one batch."""
    l_hat, m_hat, _, caches = _forward(params, arch, xs)
    enc_caches, concat, zf, f, ze, h = caches
    act = arch.activation
    nb = len(y)
    r_l = y - l_hat
    r_m = d - m_hat
    rmse_l = np.sqrt(np.mean(r_l**2))
    rmse_m = np.sqrt(np.mean(r_m**2))
    loss = float(rmse_l * rmse_m)

    # dL/dl_hat_i = -rmse_m * r_l_i / (nb * rmse_l); zero at an exact fit,
    # and zero after divergence so the caller sees the non-finite loss first
    degenerate = not np.isfinite(loss)
    dl = np.zeros(nb) if degenerate or rmse_l < 1e-300 else (-rmse_m / (nb * rmse_l)) * r_l
    dm = np.zeros(nb) if degenerate or rmse_m < 1e-300 else (-rmse_l / (nb * rmse_m)) * r_m

    grads = {"encoders": [], "fusion": None, "embed": None, "head_l": None, "head_m": None}
    wl = params["head_l"][0]
    wm = params["head_m"][0]
    grads["head_l"] = [h.T @ dl, np.array([dl.sum()])]
    grads["head_m"] = [h.T @ dm, np.array([dm.sum()])]
    dh = np.outer(dl, wl) + np.outer(dm, wm)

    dze = dh * _act_grad(act, ze, h)
    we = params["embed"][0]
    grads["embed"] = [f.T @ dze, dze.sum(axis=0)]
    df = dze @ we.T

    dzf = df * _act_grad(act, zf, f)
    wf = params["fusion"][0]
    grads["fusion"] = [concat.T @ dzf, dzf.sum(axis=0)]
    dconcat = dzf @ wf.T

    offset = 0
    for cache, layers in zip(enc_caches, params["encoders"]):
        width = cache[-1][2].shape[1]
        da = dconcat[:, offset : offset + width]
        offset += width
        layer_grads = []
        for (a_in, z, a_out), (w, b) in zip(reversed(cache), reversed(layers)):
            dz = da * _act_grad(act, z, a_out)
            layer_grads.append([a_in.T @ dz, dz.sum(axis=0)])
            da = dz @ w.T
        grads["encoders"].append(list(reversed(layer_grads)))
    return loss, grads


@dataclass
class TrainLog:
    """Per-epoch monitoring record kept by train_fusion."""

    train_loss: list[float] = field(default_factory=list)
    holdout_rmse_l: list[float] = field(default_factory=list)
    holdout_rmse_m: list[float] = field(default_factory=list)
    holdout_loss: list[float] = field(default_factory=list)
    holdout_l_hat: list[np.ndarray] = field(default_factory=list)
    holdout_m_hat: list[np.ndarray] = field(default_factory=list)

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)


@dataclass
class FusionNet:
    """Trained network: selected parameters plus the full training log."""

    arch: FusionArch
    schema: tuple[tuple[str, int], ...]
    params: dict
    log: TrainLog
    selected_epoch: int
    spec: FusionSpec

    @property
    def modalities(self):
        return tuple(name for name, _ in self.schema)

    def forward(self, ds: SemiSynthDataset):
        xs = [ds.blocks[m] for m in self.modalities]
        return _forward(self.params, self.arch, xs)


def train_fusion(spec: FusionSpec, train: SemiSynthDataset, holdout: SemiSynthDataset, modality_subset) -> FusionNet:
    """Mini-batch gradient descent on the combined loss.

    ``holdout`` must be disjoint from ``train``; it is only used for loss
    monitoring, per-epoch prediction snapshots, and epoch selection.
    """
    modality_subset = tuple(modality_subset)
    schema = schema_of(train, modality_subset)
    xs = [train.blocks[m] for m in modality_subset]
    xs_hold = [holdout.blocks[m] for m in modality_subset]
    params = init_params(spec.arch, [dim for _, dim in schema], spec.seed, spec.weight_init_scale)
    shuffle_rng = substream(spec.seed, "fusion", "shuffle")
    n = train.n
    log = TrainLog()
    best = (np.inf, None, -1)

    for epoch in range(spec.epochs):
        perm = shuffle_rng.permutation(n)
        # overflow after a divergence is reported via the loss check below
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, spec.batch_size):
                idx = perm[start : start + spec.batch_size]
                loss, grads = loss_and_grads(params, spec.arch, [x[idx] for x in xs], train.y[idx], train.d[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                for p, g in zip(iter_arrays(params), iter_arrays(grads)):
                    p -= spec.step_size * g
            train_loss, _ = loss_and_grads(params, spec.arch, xs, train.y, train.d)
        if not np.isfinite(train_loss):
            raise TrainingDivergedError(epoch)
        l_hat, m_hat, _, _ = _forward(params, spec.arch, xs_hold)
        rmse_l = float(np.sqrt(np.mean((holdout.y - l_hat) ** 2)))
        rmse_m = float(np.sqrt(np.mean((holdout.d - m_hat) ** 2)))
        log.train_loss.append(float(train_loss))
        log.holdout_rmse_l.append(rmse_l)
        log.holdout_rmse_m.append(rmse_m)
        log.holdout_loss.append(rmse_l * rmse_m)
        log.holdout_l_hat.append(l_hat.copy())
        log.holdout_m_hat.append(m_hat.copy())
        if rmse_l * rmse_m < best[0]:
            best = (rmse_l * rmse_m, _copy_params(params), epoch)

    if spec.selection == "best_holdout":
        selected_params, selected_epoch = best[1], best[2]
    else:
        selected_params, selected_epoch = params, spec.epochs - 1
    return FusionNet(
        arch=spec.arch, schema=schema, params=selected_params, log=log, selected_epoch=selected_epoch, spec=spec
    )


def _copy_params(params: dict) -> dict:
    return {
        "encoders": [[[w.copy(), b.copy()] for w, b in enc] for enc in params["encoders"]],
        "fusion": [params["fusion"][0].copy(), params["fusion"][1].copy()],
        "embed": [params["embed"][0].copy(), params["embed"][1].copy()],
        "head_l": [params["head_l"][0].copy(), params["head_l"][1].copy()],
        "head_m": [params["head_m"][0].copy(), params["head_m"][1].copy()],
    }


def extract_embedding(net: FusionNet, ds: SemiSynthDataset) -> np.ndarray:
    """Forward pass up to (and including) the embedding activation; n x E."""
    for name, dim in net.schema:
        if name not in ds.blocks or ds.blocks[name].shape[1] != dim:
            from ..errors import SchemaMismatchError

            raise SchemaMismatchError(f"dataset does not provide block {name!r} with {dim} columns")
    _, _, h, _ = net.forward(ds)
    return h


class FusionFit(FittedLearner):
    def __init__(self, net: FusionNet):
        super().__init__(tag=f"fusion(E={net.arch.embedding_dim},epochs={net.spec.epochs})", schema=net.schema)
        self.net = net

    def _predict_arrays(self, ds: SemiSynthDataset):
        l_hat, m_hat, _, _ = self.net.forward(ds)
        return l_hat, m_hat


def fit_fusion(spec: FusionSpec, train: SemiSynthDataset, modality_subset, holdout=None) -> FusionFit:
    """Fit on ``train``; carve an internal holdout when none is supplied."""
    if holdout is None:
        rng = substream(spec.seed, "fusion", "holdout")
        perm = rng.permutation(train.n)
        n_hold = max(1, int(round(spec.holdout_fraction * train.n)))
        if n_hold >= train.n:
            raise ConfigError("training set too small to carve a holdout from")
        holdout_ds = train.take(np.sort(perm[:n_hold]))
        train_ds = train.take(np.sort(perm[n_hold:]))
    else:
        holdout_ds, train_ds = holdout, train
    net = train_fusion(spec, train_ds, holdout_ds, modality_subset)
    return FusionFit(net)


class EmbeddingFit(FittedLearner):
    """Boosted trees over the fusion embedding joined with the tabular block."""

    def __init__(self, net: FusionNet, gbt_fit, tab_block: str | None, tag: str):
        super().__init__(tag=tag, schema=net.schema)
        self.net = net
        self.gbt_fit = gbt_fit
        self.tab_block = tab_block

    def _embedding_features(self, ds: SemiSynthDataset) -> np.ndarray:
        h = extract_embedding(self.net, ds)
        if self.tab_block is not None:
            return np.hstack([h, ds.blocks[self.tab_block]])
        return h

    def _predict_arrays(self, ds: SemiSynthDataset):
        x = self._embedding_features(ds)
        fit = self.gbt_fit
        return (
            fit._ensemble_predict(fit.base_l, fit.trees_l, x),
            fit._ensemble_predict(fit.base_m, fit.trees_m, x),
        )


def fit_embedding_model(net: FusionNet, train: SemiSynthDataset, gbt_spec, tab_block: str = "tab") -> EmbeddingFit:
    """Refit the two nuisance heads as boosted trees on [H_E, X_tab]."""
    from .boosting import GbtFit, _boost

    h = extract_embedding(net, train)
    use_tab = tab_block if tab_block in train.blocks else None
    x = np.hstack([h, train.blocks[use_tab]]) if use_tab else h
    ens_l = _boost(x, train.y, gbt_spec, substream(gbt_spec.seed, "embedding", "l"))
    ens_m = _boost(x, train.d, gbt_spec, substream(gbt_spec.seed, "embedding", "m"))
    pseudo_schema = tuple()
    gbt_fit = GbtFit(gbt_spec, pseudo_schema, ens_l, ens_m)
    tag = f"embedding(E={net.arch.embedding_dim},trees={gbt_spec.trees})"
    return EmbeddingFit(net, gbt_fit, use_tab, tag)


def fit_embedding_learner(spec: EmbeddingSpec, train: SemiSynthDataset, modality_subset, holdout=None) -> EmbeddingFit:
    fusion_fit = fit_fusion(spec.fusion, train, modality_subset, holdout=holdout)
    return fit_embedding_model(fusion_fit.net, train, spec.gbt, tab_block=spec.tab_block)


# ---------------------------------------------------------------------------
# Weight serialization (layer-major, row-major, 17 significant digits)
# ---------------------------------------------------------------------------


def _fmt_array(arr: np.ndarray) -> str:
    flat = arr.reshape(-1)
    return "[" + ", ".join(FLOAT_FMT % v for v in flat) + "]"


def save_weights(net: FusionNet, path):
    names = []
    for i, enc in enumerate(net.params["encoders"]):
        for j in range(len(enc)):
            names.append(f"encoder{i}.layer{j}")
    names += ["fusion", "embed", "head_l", "head_m"]
    arrays = list(iter_arrays(net.params))
    entries = []
    for name, (w, b) in zip(names, zip(arrays[0::2], arrays[1::2])):
        entries.append(
            f'    {{"name": "{name}", "shape": {list(w.shape)}, "weights": {_fmt_array(w)}, "bias": {_fmt_array(b)}}}'
        )
    arch = net.arch
    header = json.dumps(
        {
            "schema": [[name, dim] for name, dim in net.schema],
            "encoder_widths": list(arch.encoder_widths),
            "fusion_width": arch.fusion_width,
            "embedding_dim": arch.embedding_dim,
            "activation": arch.activation,
            "selected_epoch": net.selected_epoch,
        }
    )
    text = '{\n  "arch": ' + header + ',\n  "layers": [\n' + ",\n".join(entries) + "\n  ]\n}\n"
    with open(path, "w") as fh:
        fh.write(text)


def load_weights(path, spec: FusionSpec | None = None) -> FusionNet:
    with open(path) as fh:
        payload = json.load(fh)
    meta = payload["arch"]
    arch = FusionArch(
        encoder_widths=tuple(meta["encoder_widths"]),
        fusion_width=meta["fusion_width"],
        embedding_dim=meta["embedding_dim"],
        activation=meta["activation"],
    )
    schema = tuple((name, dim) for name, dim in meta["schema"])
    layers = payload["layers"]
    it = iter(layers)

    def take_layer(fan_in, fan_out):
        entry = next(it)
        w = np.array(entry["weights"], dtype=float).reshape(fan_in, fan_out)
        b = np.array(entry["bias"], dtype=float)
        return [w, b]

    encoders = []
    for _, dim in schema:
        fan = dim
        enc = []
        for width in arch.encoder_widths:
            enc.append(take_layer(fan, width))
            fan = width
        encoders.append(enc)
    concat_dim = len(schema) * arch.encoder_widths[-1]
    params = {
        "encoders": encoders,
        "fusion": take_layer(concat_dim, arch.fusion_width),
        "embed": take_layer(arch.fusion_width, arch.embedding_dim),
    }
    for key in ("head_l", "head_m"):
        entry = next(it)
        params[key] = [np.array(entry["weights"], dtype=float), np.array(entry["bias"], dtype=float)]
    return FusionNet(
        arch=arch,
        schema=schema,
        params=params,
        log=TrainLog(),
        selected_epoch=meta.get("selected_epoch", -1),
        spec=spec or FusionSpec(arch=arch),
    )
