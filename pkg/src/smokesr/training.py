"""Minibatch Adam training: full-parameter, layer-progressive, and multiscale.

The learning rate starts at its configured value and halves whenever the
epoch-mean training loss plateaus (relative improvement below the threshold);
after the allowed number of halvings the next plateau stops the run. The
returned parameters are the best-validation snapshot.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .network import (
    AdamState,
    LossWeights,
    Model,
    MultiscaleNet,
    NetworkParams,
    ResidualGeometry,
    adam_step,
    gradient,
    grow_params,
    loss,
    random_params,
    residual_geometry,
)
from .patching import PatchSet


@dataclass(frozen=True)
class TrainConfig:
    layers: int = 6
    atoms: int = 400
    scales: int = 0  # extra scales beyond the first (M)
    batch_size: int = 4096
    learning_rate: float = 1e-4
    max_epochs: int = 40
    epochs_per_phase: int | None = None  # progressive; default max_epochs/layers
    plateau_threshold: float = 1e-3
    plateau_patience: int = 3  # stalled epochs tolerated before halving
    max_halvings: int = 3
    val_fraction: float = 0.1
    seed: int = 0
    init_scale: float = 0.01
    weights: LossWeights = LossWeights()
    dh_init: np.ndarray | None = None


@dataclass
class LossHistory:
    records: list = dc_field(default_factory=list)  # (epoch, train, val, phase)

    def add(self, epoch: int, train: float, val: float, phase: str) -> None:
        self.records.append((epoch, float(train), float(val), phase))

    def final_train(self) -> float:
        return self.records[-1][1]

    def best_val(self) -> float:
        return min(r[2] for r in self.records)

    def phases(self) -> list[str]:
        seen = []
        for r in self.records:
            if not seen or seen[-1] != r[3]:
                seen.append(r[3])
        return seen

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,val_loss,phase\n")
        for e, tr, va, ph in self.records:
            buf.write(f"{e},{tr:.8e},{va:.8e},{ph}\n")
        return buf.getvalue()


def split_indices(patches: PatchSet, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Train/validation split.

    space_time (and velocity_only) splits patches randomly; phase_space holds
    out whole sequences when several are present, to test generalization
    rather than interpolation. With a single sequence the random split is the
    only option.
    """
    k = len(patches)
    rng = np.random.default_rng(config.seed)
    seqs = np.unique(patches.sequences)
    if patches.mode.kind == "phase_space" and len(seqs) > 1:
        held = seqs[-1]
        val = np.nonzero(patches.sequences == held)[0]
        train = np.nonzero(patches.sequences != held)[0]
        return train, val
    perm = rng.permutation(k)
    n_val = max(1, int(round(k * config.val_fraction)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _epoch_pass(inputs, targets, model, state, weights, geometry, batch_size, rng):
    order = rng.permutation(inputs.shape[0])
    total, batches = 0.0, 0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        value, grads = gradient(inputs[idx], targets[idx], model, weights, geometry)
        model, state = adam_step(model, grads, state)
        total += value / len(idx)
        batches += 1
    return model, state, total / max(batches, 1)


def _val_loss(inputs, targets, model, weights, geometry, batch_size=8192):
    if inputs.shape[0] == 0:
        return np.nan
    total = 0.0
    for start in range(0, inputs.shape[0], batch_size):
        stop = min(start + batch_size, inputs.shape[0])
        # data terms only, so snapshots of different sizes stay comparable
        total += loss(inputs[start:stop], targets[start:stop], model,
                      replace(weights, alpha_theta=0.0), geometry)
    return total / inputs.shape[0]


def _optimize(
    inputs,
    targets,
    model,
    val_inputs,
    val_targets,
    config: TrainConfig,
    geometry,
    history: LossHistory,
    phase: str,
    epoch_budget: int,
    rng,
    epoch_offset: int,
):
    """Adam with plateau-halving; returns (final model, best-val model, epochs used)."""
    state = AdamState.for_model(model, config.learning_rate)
    best_val = np.inf
    best = model.copy()
    best_train = np.inf
    stalled = 0
    halvings = 0
    epoch = 0
    while epoch < epoch_budget:
        model, state, train_loss = _epoch_pass(
            inputs, targets, model, state, config.weights, geometry, config.batch_size, rng
        )
        val = _val_loss(val_inputs, val_targets, model, config.weights, geometry)
        history.add(epoch_offset + epoch, train_loss, val, phase)
        epoch += 1
        if val < best_val:
            best_val = val
            best = model.copy()
        # plateau: several epochs without the required relative improvement
        if train_loss < best_train * (1.0 - config.plateau_threshold):
            best_train = train_loss
            stalled = 0
        else:
            stalled += 1
            if stalled >= config.plateau_patience:
                if halvings >= config.max_halvings:
                    break
                state.rate *= 0.5
                halvings += 1
                stalled = 0
    return model, best, epoch


def _geometry_for(patches: PatchSet) -> ResidualGeometry:
    ndim = patches.centers.shape[1]
    return residual_geometry(patches.n * patches.ratio, ndim)


def _model_from(patches: PatchSet, scales: list[NetworkParams]) -> Model:
    return Model(
        scales=scales,
        mode=patches.mode,
        n=patches.n,
        ratio=patches.ratio,
        norm=patches.norm,
    )


def train_full(patches: PatchSet, config: TrainConfig) -> tuple[Model, LossHistory]:
    """Full-parameter optimization of all layers (and scales) jointly."""
    geometry = _geometry_for(patches)
    train_idx, val_idx = split_indices(patches, config)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("empty train or validation split")
    xi = patches.inputs
    ti = patches.residuals
    rng = np.random.default_rng(config.seed)
    n_in, n_res = xi.shape[1], ti.shape[1]
    scales = [
        random_params(n_in, n_res, config.atoms, config.layers, rng,
                      config.init_scale, config.dh_init if m == 0 else None)
        for m in range(config.scales + 1)
    ]
    net = MultiscaleNet(scales) if config.scales else scales[0]
    history = LossHistory()
    _, best, _ = _optimize(
        xi[train_idx], ti[train_idx], net, xi[val_idx], ti[val_idx],
        config, geometry, history, "full", config.max_epochs, rng, 0,
    )
    best_scales = best.scales if isinstance(best, MultiscaleNet) else [best]
    return _model_from(patches, best_scales), history


def train_progressive(patches: PatchSet, config: TrainConfig) -> tuple[Model, LossHistory]:
    """Layer-by-layer training: converge layer 1, then insert each randomly
    initialized (S_{i+1}, lambda_{i+1}) and re-optimize all parameters."""
    if config.scales:
        raise ValueError("progressive training is defined for single-scale networks")
    geometry = _geometry_for(patches)
    train_idx, val_idx = split_indices(patches, config)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("empty train or validation split")
    xi, ti = patches.inputs, patches.residuals
    rng = np.random.default_rng(config.seed)
    n_in, n_res = xi.shape[1], ti.shape[1]

    base = config.epochs_per_phase or max(1, config.max_epochs // config.layers)
    budgets = [base] * config.layers
    if config.epochs_per_phase is None:
        budgets[-1] += config.max_epochs - base * config.layers

    params = random_params(n_in, n_res, config.atoms, 1, rng,
                           config.init_scale, config.dh_init)
    history = LossHistory()
    best = params
    offset = 0
    for layer in range(config.layers):
        params, best, used = _optimize(
            xi[train_idx], ti[train_idx], params, xi[val_idx], ti[val_idx],
            config, geometry, history, f"layer{layer + 1}", budgets[layer], rng, offset,
        )
        offset += used
        if layer + 1 < config.layers:
            # the converged phase parameters seed the next, deeper phase
            params = grow_params(params, rng, config.init_scale)
    return _model_from(patches, [best]), history


def train(patches: PatchSet, config: TrainConfig, method: str = "full"):
    if method == "full":
        return train_full(patches, config)
    if method == "progressive":
        return train_progressive(patches, config)
    raise ValueError(f"unknown training method {method!r}")
