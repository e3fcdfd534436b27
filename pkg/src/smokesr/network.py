"""Unrolled shrinkage network with a learnable residual dictionary.

The model maps an encoded coarse patch y to sparse weights through T layers
w_t = shrink(S_t w_{t-1} + B y; lambda_t), w_0 = 0, and predicts the fine
residual as D_h w_T. Loss and exact reverse-mode gradients are implemented
directly in numpy with float64 accumulation; the composite loss combines the
reconstruction error with stencil (gradient/divergence) penalties on the
residual patch and an l2 penalty on all parameters.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .patching import EncodingMode, NormalizationInfo

MODEL_MAGIC = b"SM01"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LossWeights:
    """Balance of reconstruction, gradient, divergence, and parameter terms."""

    alpha_l: float = 1.0
    alpha_g: float = 0.05
    alpha_d: float = 0.05
    alpha_theta: float = 0.5

    def __post_init__(self):
        if min(self.alpha_l, self.alpha_g, self.alpha_d, self.alpha_theta) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class NetworkParams:
    """Complete learnable state: B, per-layer S_t and lambda_t, and D_h."""

    b: np.ndarray  # (atoms, n_in)
    s: list[np.ndarray]  # T of (atoms, atoms)
    lam: np.ndarray  # (T,)
    dh: np.ndarray  # (n_res, atoms)

    def __post_init__(self):
        t = len(self.s)
        if self.lam.shape != (t,):
            raise ValueError("lambda count must match layer count")
        atoms = self.b.shape[0]
        if any(m.shape != (atoms, atoms) for m in self.s) or self.dh.shape[1] != atoms:
            raise ValueError("inconsistent parameter shapes")
        if np.any(self.lam < 0):
            raise ValueError("lambda_t must be >= 0")

    @property
    def layer_count(self) -> int:
        return len(self.s)

    @property
    def atom_count(self) -> int:
        return self.b.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b.shape[1]

    @property
    def residual_dim(self) -> int:
        return self.dh.shape[0]

    def items(self):
        yield "b", self.b
        for t, m in enumerate(self.s):
            yield f"s{t}", m
        yield "lam", self.lam
        yield "dh", self.dh

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.b.copy(), [m.copy() for m in self.s], self.lam.copy(), self.dh.copy()
        )

    def squared_norm(self) -> float:
        return float(sum((arr**2).sum() for _, arr in self.items()))


@dataclass
class ParamGradients:
    """Gradient arrays mirroring NetworkParams, without its value constraints."""

    b: np.ndarray
    s: list[np.ndarray]
    lam: np.ndarray
    dh: np.ndarray

    @property
    def layer_count(self) -> int:
        return len(self.s)

    def items(self):
        yield "b", self.b
        for t, m in enumerate(self.s):
            yield f"s{t}", m
        yield "lam", self.lam
        yield "dh", self.dh


def random_params(
    n_in: int,
    n_res: int,
    atoms: int,
    layers: int,
    rng: np.random.Generator,
    init_scale: float = 0.01,
    dh_init: np.ndarray | None = None,
) -> NetworkParams:
    """Uniform init in [-init_scale, init_scale]; lambdas clamped to >= 0."""

    def u(*shape):
        return rng.uniform(-init_scale, init_scale, size=shape)

    dh = np.array(dh_init, dtype=np.float64) if dh_init is not None else u(n_res, atoms)
    return NetworkParams(
        b=u(atoms, n_in),
        s=[u(atoms, atoms) for _ in range(layers)],
        lam=np.maximum(u(layers), 0.0),
        dh=dh,
    )


def grow_params(params: NetworkParams, rng: np.random.Generator,
                init_scale: float = 0.01) -> NetworkParams:
    """Append one randomly initialized layer (S_{T+1}, lambda_{T+1})."""
    atoms = params.atom_count
    return NetworkParams(
        b=params.b.copy(),
        s=[m.copy() for m in params.s] + [rng.uniform(-init_scale, init_scale, (atoms, atoms))],
        lam=np.append(params.lam, max(rng.uniform(-init_scale, init_scale), 0.0)),
        dh=params.dh.copy(),
    )


def shrink(x: np.ndarray, lam: float) -> np.ndarray:
    """Elementwise soft threshold sgn(x) * max(|x| - lam, 0)."""
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def forward(y: np.ndarray, params: NetworkParams) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the unrolled iteration; y is (n_in,) or a (K, n_in) batch.

    Returns (w_T, [w_0, ..., w_T]); intermediates feed backpropagation.
    """
    squeeze = y.ndim == 1
    yb = np.atleast_2d(np.asarray(y, dtype=np.float64))
    by = yb @ params.b.T
    w = np.zeros((yb.shape[0], params.atom_count))
    ws = [w]
    for s_t, lam_t in zip(params.s, params.lam):
        w = shrink(w @ s_t.T + by, lam_t)
        ws.append(w)
    if squeeze:
        return w[0], [wi[0] for wi in ws]
    return w, ws


def predict_residual(y: np.ndarray, params: NetworkParams) -> np.ndarray:
    w, _ = forward(y, params)
    return w @ params.dh.T


# ---------------------------------------------------------------------------
# Residual patch geometry (stencils for the loss)
# ---------------------------------------------------------------------------


def _diff_matrix(side: int) -> sp.csr_matrix:
    """1D central difference, first-order one-sided rows at both ends (unit spacing)."""
    d = sp.lil_matrix((side, side))
    d[0, 0], d[0, 1] = -1.0, 1.0
    d[side - 1, side - 2], d[side - 1, side - 1] = -1.0, 1.0
    for i in range(1, side - 1):
        d[i, i - 1], d[i, i + 1] = -0.5, 0.5
    return d.tocsr()


@dataclass(frozen=True)
class ResidualGeometry:
    """Maps flat residual vectors to (side, ..., side, ndim) patches and owns
    the sparse gradient/divergence stencils used by the loss (unit spacing)."""

    side: int
    ndim: int
    grad_op: sp.csr_matrix = field(repr=False, compare=False)
    div_op: sp.csr_matrix = field(repr=False, compare=False)

    @property
    def residual_dim(self) -> int:
        return self.ndim * self.side**self.ndim

    def reshape(self, flat: np.ndarray) -> np.ndarray:
        return np.asarray(flat).reshape((self.side,) * self.ndim + (self.ndim,))


_GEOMETRY_CACHE: dict[tuple[int, int], ResidualGeometry] = {}


def residual_geometry(side: int, ndim: int) -> ResidualGeometry:
    key = (side, ndim)
    if key in _GEOMETRY_CACHE:
        return _GEOMETRY_CACHE[key]
    cells = side**ndim
    eye = sp.identity(cells, format="csr")
    partial = []
    for a in range(ndim):
        op = None
        for ax in range(ndim):
            f = _diff_matrix(side) if ax == a else sp.identity(side, format="csr")
            op = f if op is None else sp.kron(op, f, format="csr")
        partial.append(op)
    # component selectors for the interleaved (cells, ndim) flattening
    selectors = []
    for c in range(ndim):
        e = np.zeros((1, ndim))
        e[0, c] = 1.0
        selectors.append(sp.kron(eye, sp.csr_matrix(e), format="csr"))
    grad = sp.vstack(
        [partial[a] @ selectors[c] for c in range(ndim) for a in range(ndim)], format="csr"
    )
    div = sum(partial[a] @ selectors[a] for a in range(ndim)).tocsr()
    geom = ResidualGeometry(side, ndim, grad, div)
    _GEOMETRY_CACHE[key] = geom
    return geom


# ---------------------------------------------------------------------------
# Loss and exact gradients
# ---------------------------------------------------------------------------


def _scales(model) -> list[NetworkParams]:
    return model.scales if isinstance(model, MultiscaleNet) else [model]


def _forward_all(y: np.ndarray, scales: list[NetworkParams]):
    per_scale = []
    pred = None
    for p in scales:
        w, ws = forward(y, p)
        per_scale.append((w, ws))
        contrib = w @ p.dh.T
        pred = contrib if pred is None else pred + contrib
    return pred, per_scale


def _error_gradient(err: np.ndarray, weights: LossWeights, geometry: ResidualGeometry | None):
    """Value of the data terms and dL/d err, via the shared stencil operators."""
    value = weights.alpha_l * float((err**2).sum())
    g = 2.0 * weights.alpha_l * err
    if geometry is not None and (weights.alpha_g or weights.alpha_d):
        if weights.alpha_g:
            ge = geometry.grad_op @ err.T
            value += weights.alpha_g * float((ge**2).sum())
            g = g + 2.0 * weights.alpha_g * (geometry.grad_op.T @ ge).T
        if weights.alpha_d:
            ve = geometry.div_op @ err.T
            value += weights.alpha_d * float((ve**2).sum())
            g = g + 2.0 * weights.alpha_d * (geometry.div_op.T @ ve).T
    elif weights.alpha_g or weights.alpha_d:
        raise ValueError("gradient/divergence loss terms need a residual geometry")
    return value, g


def loss(
    inputs: np.ndarray,
    targets: np.ndarray,
    model,
    weights: LossWeights = LossWeights(),
    geometry: ResidualGeometry | None = None,
) -> float:
    """Batch-summed composite loss plus the parameter penalty."""
    yb = np.asarray(inputs, dtype=np.float64)
    tb = np.asarray(targets, dtype=np.float64)
    if yb.shape[0] == 0:
        raise ValueError("empty batch")
    scales = _scales(model)
    pred, _ = _forward_all(yb, scales)
    value, _ = _error_gradient(pred - tb, weights, geometry)
    value += weights.alpha_theta * sum(p.squared_norm() for p in scales)
    return value


def gradient(
    inputs: np.ndarray,
    targets: np.ndarray,
    model,
    weights: LossWeights = LossWeights(),
    geometry: ResidualGeometry | None = None,
) -> tuple[float, list[ParamGradients]]:
    """Loss value and exact reverse-mode gradients, one container per scale.

    The shrink subgradient is taken as 0 at the threshold kinks.
    """
    yb = np.asarray(inputs, dtype=np.float64)
    tb = np.asarray(targets, dtype=np.float64)
    if yb.shape[0] == 0:
        raise ValueError("empty batch")
    scales = _scales(model)
    pred, per_scale = _forward_all(yb, scales)
    value, g_err = _error_gradient(pred - tb, weights, geometry)
    value += weights.alpha_theta * sum(p.squared_norm() for p in scales)

    grads = []
    at = weights.alpha_theta
    for p, (w_t, ws) in zip(scales, per_scale):
        by = yb @ p.b.T
        d_dh = g_err.T @ w_t + 2.0 * at * p.dh
        dw = g_err @ p.dh
        db = np.zeros_like(p.b)
        ds = [None] * p.layer_count
        dlam = np.zeros(p.layer_count)
        for t in range(p.layer_count - 1, -1, -1):
            z = ws[t] @ p.s[t].T + by
            mask = np.abs(z) > p.lam[t]
            dz = dw * mask
            dlam[t] = -(dz * np.sign(z)).sum() + 2.0 * at * p.lam[t]
            ds[t] = dz.T @ ws[t] + 2.0 * at * p.s[t]
            db += dz.T @ yb
            dw = dz @ p.s[t]
        db += 2.0 * at * p.b
        grads.append(ParamGradients(db, ds, dlam, d_dh))
    return value, grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[dict] = field(default_factory=list)
    v: list[dict] = field(default_factory=list)

    @staticmethod
    def for_model(model, rate: float) -> "AdamState":
        scales = _scales(model)
        state = AdamState(rate=rate)
        for p in scales:
            state.m.append({name: np.zeros_like(arr) for name, arr in p.items()})
            state.v.append({name: np.zeros_like(arr) for name, arr in p.items()})
        return state


def adam_step(model, grads: list[NetworkParams], state: AdamState):
    """One Adam update over every parameter; lambdas clamped to >= 0 after."""
    scales = _scales(model)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_scales = []
    for i, (p, g) in enumerate(zip(scales, grads)):
        updated = {}
        for (name, arr), (_, garr) in zip(p.items(), g.items()):
            m = state.m[i][name] = state.beta1 * state.m[i][name] + (1 - state.beta1) * garr
            v = state.v[i][name] = state.beta2 * state.v[i][name] + (1 - state.beta2) * garr**2
            stepped = arr - state.rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
            updated[name] = stepped
        lam = np.maximum(updated["lam"], 0.0)
        new_scales.append(
            NetworkParams(
                updated["b"],
                [updated[f"s{k}"] for k in range(p.layer_count)],
                lam,
                updated["dh"],
            )
        )
    if isinstance(model, MultiscaleNet):
        return MultiscaleNet(new_scales), state
    return new_scales[0], state


# ---------------------------------------------------------------------------
# Multiscale composition
# ---------------------------------------------------------------------------


@dataclass
class MultiscaleNet:
    """M+1 parallel networks whose residual predictions sum."""

    scales: list[NetworkParams]

    def __post_init__(self):
        if not self.scales:
            raise ValueError("need at least one scale")
        first = self.scales[0]
        for p in self.scales[1:]:
            if p.input_dim != first.input_dim or p.residual_dim != first.residual_dim:
                raise ValueError("scales must share input and residual dims")

    @property
    def scale_count(self) -> int:
        return len(self.scales)

    def copy(self) -> "MultiscaleNet":
        return MultiscaleNet([p.copy() for p in self.scales])


def multiscale_forward(y: np.ndarray, net: MultiscaleNet) -> np.ndarray:
    pred, _ = _forward_all(np.asarray(y, dtype=np.float64), net.scales)
    return pred


# ---------------------------------------------------------------------------
# Model bundle and SM01 serialization
# ---------------------------------------------------------------------------


@dataclass
class Model:
    """Trained scales plus everything synthesis needs to apply them."""

    scales: list[NetworkParams]
    mode: EncodingMode
    n: int
    ratio: int
    norm: NormalizationInfo
    weights: LossWeights = LossWeights()

    @property
    def net(self) -> MultiscaleNet:
        return MultiscaleNet(self.scales)

    def predict(self, y: np.ndarray) -> np.ndarray:
        return multiscale_forward(y, self.net)


_MODEL_HEADER = struct.Struct("<4sHBBIIIBBBBBBH")


def save_model(model: Model, path: str | os.PathLike) -> None:
    p0 = model.scales[0]
    meta = json.dumps(
        {
            "extra_codes": list(model.mode.extra_codes),
            "code_scales": dict(model.norm.code_scales),
        },
        sort_keys=True,
    ).encode()
    kind_idx = ("velocity_only", "space_time", "phase_space").index(model.mode.kind)
    with open(path, "wb") as fh:
        fh.write(
            _MODEL_HEADER.pack(
                MODEL_MAGIC,
                MODEL_VERSION,
                len(model.scales),
                p0.layer_count,
                p0.input_dim,
                p0.residual_dim,
                p0.atom_count,
                _infer_ndim(model),
                model.n,
                model.ratio,
                kind_idx,
                model.mode.tau,
                1 if model.mode.include_vorticity else 0,
                0,
            )
        )
        fh.write(
            struct.pack(
                "<5d",
                model.weights.alpha_l,
                model.weights.alpha_g,
                model.weights.alpha_d,
                model.weights.alpha_theta,
                model.norm.scale,
            )
        )
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        for p in model.scales:
            for _, arr in p.items():
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _infer_ndim(model: Model) -> int:
    cells = model.scales[0].residual_dim
    for ndim in (2, 3):
        if ndim * (model.n * model.ratio) ** ndim == cells:
            return ndim
    raise ValueError("cannot infer dimensionality from residual size")


def load_model(path: str | os.PathLike) -> Model:
    with open(path, "rb") as fh:
        blob = fh.read()
    (
        magic, version, nscales, layers, n_in, n_res, atoms,
        _ndim, n, ratio, kind_idx, tau, vort, _reserved,
    ) = _MODEL_HEADER.unpack_from(blob)
    if magic != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    off = _MODEL_HEADER.size
    al, ag, ad, at, scale = struct.unpack_from("<5d", blob, off)
    off += 40
    (mlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    meta = json.loads(blob[off : off + mlen])
    off += mlen

    def take(shape):
        nonlocal off
        cnt = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=cnt, offset=off).astype(np.float64)
        off += 4 * cnt
        return arr.reshape(shape)

    scales = []
    for _ in range(nscales):
        b = take((atoms, n_in))
        s = [take((atoms, atoms)) for _ in range(layers)]
        lam = take((layers,))
        dh = take((n_res, atoms))
        scales.append(NetworkParams(b, s, np.maximum(lam, 0.0), dh))
    mode = EncodingMode(
        kind=("velocity_only", "space_time", "phase_space")[kind_idx],
        tau=tau,
        include_vorticity=bool(vort),
        extra_codes=tuple(meta.get("extra_codes", ())),
    )
    norm = NormalizationInfo(scale, dict(meta.get("code_scales", {})))
    return Model(scales, mode, n, ratio, norm, LossWeights(al, ag, ad, at))
