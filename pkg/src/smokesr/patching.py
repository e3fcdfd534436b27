"""Extract, encode, augment, and sample coarse/fine patch pairs.

A coarse patch of side n (cells) pairs with the fine window of side n*r
covering the same spatial extent. Residual targets are taken against the
globally upsampled coarse frame so that `up + residual*scale` reproduces the
fine patch exactly and a zero dictionary synthesizes `up` bit-for-bit.

Encoded vector layout: velocity blocks newest-first, then vorticity blocks
newest-first (phase-space only), then scalar codes. Each grid block is the
C-order flattening of an (n, ..., n, channels) array.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import (
    GridShape,
    ScalarField,
    VectorField,
    curl_array,
    read_field,
    list_frames,
    strain_rate_norm,
    upsample_linear_array,
)
from .solver import MANIFEST_NAME, read_manifest

MODE_KINDS = ("velocity_only", "space_time", "phase_space")
MORTON_BITS = 10


class SamplingError(Exception):
    """Could not collect the requested number of patch pairs."""

    def __init__(self, requested: int, achieved: int):
        super().__init__(f"collected {achieved} of {requested} requested patch pairs")
        self.requested = requested
        self.achieved = achieved


@dataclass(frozen=True)
class EncodingMode:
    kind: str = "phase_space"
    tau: int = 2
    include_vorticity: bool = True
    extra_codes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in MODE_KINDS:
            raise ValueError(f"unknown encoding kind {self.kind!r}")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        object.__setattr__(self, "extra_codes", tuple(self.extra_codes))

    @property
    def window_length(self) -> int:
        return self.tau + 1 if self.kind == "phase_space" else 1

    def vorticity_channels(self, ndim: int) -> int:
        if self.kind != "phase_space" or not self.include_vorticity:
            return 0
        return 1 if ndim == 2 else 3

    def code_names(self) -> tuple[str, ...]:
        if self.kind == "space_time":
            return ("morton", "time") + self.extra_codes
        return self.extra_codes

    def input_length(self, n: int, ndim: int) -> int:
        cells = n**ndim
        length = self.window_length * ndim * cells
        length += self.window_length * self.vorticity_channels(ndim) * cells
        return length + len(self.code_names())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tau": self.tau,
            "include_vorticity": self.include_vorticity,
            "extra_codes": list(self.extra_codes),
        }

    @staticmethod
    def from_dict(d: dict) -> "EncodingMode":
        return EncodingMode(
            kind=d["kind"],
            tau=int(d.get("tau", 2)),
            include_vorticity=bool(d.get("include_vorticity", True)),
            extra_codes=tuple(d.get("extra_codes", ())),
        )


@dataclass(frozen=True)
class NormalizationInfo:
    scale: float
    code_scales: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("normalization scale must be positive")


@dataclass(frozen=True)
class EncodedPatch:
    vector: np.ndarray
    center: tuple[int, ...]
    frame: int


@dataclass(frozen=True)
class PatchPair:
    input: EncodedPatch
    residual_target: np.ndarray
    ratio: int


# ---------------------------------------------------------------------------
# Morton codes
# ---------------------------------------------------------------------------


def morton_interleave(coords: tuple[int, ...], bits: int) -> int:
    """Interleave `bits` bits per coordinate, first coordinate least significant."""
    code = 0
    ndim = len(coords)
    for b in range(bits):
        for d, c in enumerate(coords):
            code |= ((c >> b) & 1) << (b * ndim + d)
    return code


def morton_code(center: tuple[int, ...], dims: tuple[int, ...]) -> float:
    """Scalar locality code in [0, 1] from a quantized, bit-interleaved position."""
    if len(center) != len(dims):
        raise ValueError("center/dims dimensionality mismatch")
    q = []
    top = (1 << MORTON_BITS) - 1
    for c, d in zip(center, dims):
        if not 0 <= c < d:
            raise ValueError(f"center {center} outside grid {dims}")
        q.append(int(round(c / (d - 1) * top)) if d > 1 else 0)
    code = morton_interleave(tuple(q), MORTON_BITS)
    return code / float((1 << (MORTON_BITS * len(dims))) - 1)


# ---------------------------------------------------------------------------
# Block layout and rotations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSpec:
    kind: str  # vector | pseudoscalar | pseudovector
    side: int
    channels: int

    @property
    def length(self) -> int:
        return 0


@dataclass(frozen=True)
class PatchLayout:
    """Block structure of an encoded input vector (and its residual block)."""

    mode: EncodingMode
    n: int
    ndim: int

    def grid_blocks(self) -> list[BlockSpec]:
        blocks = [
            BlockSpec("vector", self.n, self.ndim) for _ in range(self.mode.window_length)
        ]
        cw = self.mode.vorticity_channels(self.ndim)
        if cw:
            kind = "pseudoscalar" if self.ndim == 2 else "pseudovector"
            blocks += [BlockSpec(kind, self.n, cw) for _ in range(self.mode.window_length)]
        return blocks

    def input_length(self) -> int:
        return self.mode.input_length(self.n, self.ndim)


@dataclass(frozen=True)
class Rotation:
    """Axis-aligned rotation: new coordinate a = signs[a] * old coordinate perm[a]."""

    perm: tuple[int, ...]
    signs: tuple[int, ...]

    @property
    def matrix(self) -> np.ndarray:
        ndim = len(self.perm)
        m = np.zeros((ndim, ndim))
        for a in range(ndim):
            m[a, self.perm[a]] = self.signs[a]
        return m

    def is_identity(self) -> bool:
        return self.perm == tuple(range(len(self.perm))) and all(s == 1 for s in self.signs)

    def compose(self, other: "Rotation") -> "Rotation":
        """self after other."""
        m = self.matrix @ other.matrix
        return rotation_from_matrix(m)

    def apply_grid(self, arr: np.ndarray, vector: bool) -> np.ndarray:
        """Permute grid samples; rotate channel vectors too when `vector`."""
        ndim = len(self.perm)
        out = np.transpose(arr, axes=tuple(self.perm) + (ndim,))
        for a in range(ndim):
            if self.signs[a] < 0:
                out = np.flip(out, axis=a)
        if vector:
            out = np.stack(
                [self.signs[a] * out[..., self.perm[a]] for a in range(ndim)], axis=-1
            )
        return np.ascontiguousarray(out)


def rotation_from_matrix(m: np.ndarray) -> Rotation:
    ndim = m.shape[0]
    perm, signs = [], []
    for a in range(ndim):
        j = int(np.nonzero(m[a])[0][0])
        perm.append(j)
        signs.append(int(round(m[a, j])))
    return Rotation(tuple(perm), tuple(signs))


def identity_rotation(ndim: int) -> Rotation:
    return Rotation(tuple(range(ndim)), (1,) * ndim)


def _quarter_turn(ndim: int, axis0: int, axis1: int) -> Rotation:
    """+90 degrees taking axis0 toward axis1."""
    perm = list(range(ndim))
    signs = [1] * ndim
    perm[axis1], perm[axis0] = axis0, axis1
    signs[axis0] = -1
    return Rotation(tuple(perm), tuple(signs))


def rotation_group(ndim: int) -> list[Rotation]:
    """All proper axis-aligned rotations: 4 in 2D, 24 in 3D."""
    if ndim == 2:
        r = _quarter_turn(2, 0, 1)
        out = [identity_rotation(2)]
        for _ in range(3):
            out.append(r.compose(out[-1]))
        return out
    gens = [_quarter_turn(3, 0, 1), _quarter_turn(3, 1, 2), _quarter_turn(3, 2, 0)]
    seen = {identity_rotation(3): None}
    frontier = list(seen)
    while frontier:
        nxt = []
        for r in frontier:
            for g in gens:
                c = g.compose(r)
                if c not in seen:
                    seen[c] = None
                    nxt.append(c)
        frontier = nxt
    return list(seen)


def rotation_generators(ndim: int) -> list[Rotation]:
    """Default augmentation set: the 4 planar rotations in 2D; identity plus
    +-90 and 180 degrees about each axis in 3D (9 rotations)."""
    if ndim == 2:
        return rotation_group(2)
    out = [identity_rotation(3)]
    for a0, a1 in ((0, 1), (1, 2), (2, 0)):
        q = _quarter_turn(3, a0, a1)
        half = q.compose(q)
        out += [q, half, q.compose(half)]
    # q^3 is -90 degrees; dedupe preserves order
    uniq = []
    for r in out:
        if r not in uniq:
            uniq.append(r)
    return uniq


def rotate_pair(pair: PatchPair, rot: Rotation, layout: PatchLayout) -> PatchPair:
    """Rotate grid samples and vector components of both sides of a pair.

    Only velocity_only and phase_space encodings may be rotated; space-time
    codes pin patches to absolute positions and times.
    """
    if layout.mode.kind == "space_time":
        raise ValueError("rotation augmentation is not defined for space_time encodings")
    vec = np.asarray(pair.input.vector)
    ndim = layout.ndim
    out = np.empty_like(vec)
    off = 0
    for spec in layout.grid_blocks():
        cells = spec.side**ndim * spec.channels
        block = vec[off : off + cells].reshape((spec.side,) * ndim + (spec.channels,))
        if spec.kind == "vector":
            rotated = rot.apply_grid(block, vector=True)
        elif spec.kind == "pseudovector":
            rotated = rot.apply_grid(block, vector=True)  # proper rotations: det=+1
        else:
            rotated = rot.apply_grid(block, vector=False)
        out[off : off + cells] = rotated.reshape(-1)
        off += cells
    out[off:] = vec[off:]  # scalar codes are rotation-invariant

    side = layout.n * pair.ratio
    res = np.asarray(pair.residual_target).reshape((side,) * ndim + (ndim,))
    res = rot.apply_grid(res, vector=True).reshape(-1)
    return PatchPair(
        EncodedPatch(out, pair.input.center, pair.input.frame), res, pair.ratio
    )


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _patch_slices(center, n, dims):
    half = n // 2
    slices = []
    for c, d in zip(center, dims):
        lo = c - half
        hi = lo + n
        if lo < 0 or hi > d:
            raise ValueError(f"patch of side {n} at center {tuple(center)} leaves grid {dims}")
        slices.append(slice(lo, hi))
    return tuple(slices)


def encode_patch(
    window,
    center,
    mode: EncodingMode,
    norm: NormalizationInfo,
    n: int,
    *,
    frame: int = 0,
    total_frames: int | None = None,
    extra_values: dict | None = None,
    vorticity_window=None,
) -> EncodedPatch:
    """Flatten one coarse patch into the mode's normalized input vector.

    `window` holds VectorFields ordered newest first: [t, t-1, ..., t-tau].
    Vorticity grids may be passed precomputed (full-frame arrays in the same
    order); otherwise they are derived from the window.
    """
    need = mode.window_length
    if len(window) < need:
        raise ValueError(f"{mode.kind} needs {need} history frames, got {len(window)}")
    window = list(window)[:need]
    ndim = window[0].ndim
    dims = window[0].shape.dims
    sl = _patch_slices(center, n, dims)

    parts = [w.data[sl].reshape(-1) / norm.scale for w in window]
    if mode.vorticity_channels(ndim):
        if vorticity_window is None:
            vorticity_window = [curl_array(w.data, w.shape.spacing) for w in window]
        for vort in vorticity_window[:need]:
            block = vort[sl]
            if block.ndim == ndim:  # 2D scalar vorticity
                block = block[..., None]
            parts.append(block.reshape(-1) / norm.scale)

    codes = []
    for name in mode.code_names():
        if name == "morton":
            codes.append(morton_code(tuple(center), dims))
        elif name == "time":
            if total_frames is None:
                raise ValueError("space_time encoding needs total_frames")
            codes.append(frame / max(total_frames - 1, 1))
        else:
            if extra_values is None or name not in extra_values:
                raise ValueError(f"missing value for extra code {name!r}")
            codes.append(extra_values[name] / norm.code_scales.get(name, 1.0))
    if codes:
        parts.append(np.asarray(codes, dtype=float))

    vector = np.concatenate(parts)
    return EncodedPatch(vector, tuple(int(c) for c in center), int(frame))


def decode_velocity_patch(patch: EncodedPatch, mode: EncodingMode, norm: NormalizationInfo,
                          n: int, ndim: int) -> np.ndarray:
    """Inverse of the newest velocity block of encode_patch: (n,...,n,D) raw values."""
    cells = n**ndim * ndim
    return patch.vector[:cells].reshape((n,) * ndim + (ndim,)) * norm.scale


def extract_pair(
    window,
    fine_frame: VectorField,
    up_frame: np.ndarray,
    center,
    mode: EncodingMode,
    norm: NormalizationInfo,
    ratio: int,
    n: int,
    **encode_kw,
) -> PatchPair:
    """Build one training pair; `up_frame` is the upsampled full coarse frame."""
    enc = encode_patch(window, center, mode, norm, n, **encode_kw)
    half = n // 2
    fsl = tuple(
        slice((c - half) * ratio, (c - half + n) * ratio) for c in center
    )
    residual = (fine_frame.data[fsl] - up_frame[fsl]) / norm.scale
    return PatchPair(enc, residual.reshape(-1), ratio)


# ---------------------------------------------------------------------------
# Sequence access
# ---------------------------------------------------------------------------


class SequencePair:
    """Aligned coarse/fine VF01 sequences plus their simulation manifest."""

    def __init__(self, coarse_dir: str, fine_dir: str, manifest: dict):
        self.coarse_dir = coarse_dir
        self.fine_dir = fine_dir
        self.manifest = manifest
        self.ratio = int(manifest["ratio"])
        self.coarse_vel = list_frames(coarse_dir, "vel")
        self.coarse_den = list_frames(coarse_dir, "den")
        self.fine_vel = list_frames(fine_dir, "vel")
        if len(self.coarse_vel) != len(self.fine_vel):
            raise ValueError("coarse and fine sequences have different frame counts")

    @staticmethod
    def from_dir(outdir: str | os.PathLike) -> "SequencePair":
        outdir = os.fspath(outdir)
        manifest = read_manifest(os.path.join(outdir, MANIFEST_NAME))
        return SequencePair(
            os.path.join(outdir, manifest.get("coarse_dir", "coarse")),
            os.path.join(outdir, manifest.get("fine_dir", "fine")),
            manifest,
        )

    def __len__(self) -> int:
        return len(self.coarse_vel)

    def extra_value(self, dotted: str) -> float:
        node = self.manifest
        for part in dotted.split("."):
            node = node[part]
        return float(node)


def compute_normalization(pairs: list[SequencePair], extra_codes=()) -> NormalizationInfo:
    """Global max fine speed over the training set, plus per-code scales."""
    scale = 0.0
    for sp in pairs:
        for path in sp.fine_vel:
            f = read_field(path)
            scale = max(scale, f.max_speed())
    code_scales = {}
    for name in extra_codes:
        mx = max(abs(sp.extra_value(name)) for sp in pairs)
        code_scales[name] = mx if mx > 0 else 1.0
    if scale <= 0:
        raise SamplingError(1, 0)
    return NormalizationInfo(scale, code_scales)


# ---------------------------------------------------------------------------
# Importance-driven Poisson-disk sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImportanceConfig:
    gamma: float = 1.0
    poisson_radius: float | None = None  # default n/2 coarse cells
    darts_per_frame: int = 256
    max_passes: int = 64


def _importance_field(den: ScalarField, vel: VectorField, gamma: float) -> np.ndarray:
    rho = np.array(den.values)
    if rho.max() > 0:
        rho /= rho.max()
    strain = strain_rate_norm(vel).values.copy()
    if strain.max() > 0:
        strain /= strain.max()
    p = rho + gamma * strain
    if p.max() > 0:
        p /= p.max()
    return p


def _throw_darts(rng, p, lo, hi, accepted, r2, budget):
    """One batch of dart throws; returns new centers accepted this batch."""
    new = []
    for _ in range(budget):
        c = tuple(int(rng.integers(l, h + 1)) for l, h in zip(lo, hi))
        if rng.random() >= p[c]:
            continue
        if accepted:
            d2 = ((np.asarray(accepted) - np.asarray(c)) ** 2).sum(axis=1).min()
            if d2 < r2:
                continue
        accepted.append(c)
        new.append(c)
    return new


@dataclass
class PatchSet:
    """Sampled training pairs as packed arrays plus provenance."""

    inputs: np.ndarray  # (K, N_in) float32, normalized
    residuals: np.ndarray  # (K, N_res) float32, normalized
    centers: np.ndarray  # (K, D) int32
    frames: np.ndarray  # (K,) int32
    sequences: np.ndarray  # (K,) int32
    rotations: np.ndarray  # (K,) int8 index into the augmentation set
    mode: EncodingMode
    n: int
    ratio: int
    norm: NormalizationInfo
    manifest: dict

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def pair(self, i: int) -> PatchPair:
        enc = EncodedPatch(
            self.inputs[i].astype(np.float64),
            tuple(int(c) for c in self.centers[i]),
            int(self.frames[i]),
        )
        return PatchPair(enc, self.residuals[i].astype(np.float64), self.ratio)

    def subset(self, idx) -> "PatchSet":
        return replace(
            self,
            inputs=self.inputs[idx],
            residuals=self.residuals[idx],
            centers=self.centers[idx],
            frames=self.frames[idx],
            sequences=self.sequences[idx],
            rotations=self.rotations[idx],
        )


def sample_training_set(
    seq_pairs: list[SequencePair],
    count: int,
    n: int,
    mode: EncodingMode,
    importance: ImportanceConfig = ImportanceConfig(),
    seed: int = 0,
    rotations: list[Rotation] | None = None,
    norm: NormalizationInfo | None = None,
) -> PatchSet:
    """Poisson-disk, importance-weighted selection of `count` patch centers.

    Acceptance probability is max-normalized rho + gamma * strain (each term
    max-normalized per frame); accepted centers stay >= the Poisson radius
    apart within a frame. Collection round-robins over frames, one RNG stream
    per (sequence, frame), until `count` centers are found. Each rotation in
    `rotations` multiplies the output count.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    ndim = len(seq_pairs[0].manifest["coarse"]["dims"])
    if norm is None:
        norm = compute_normalization(seq_pairs, mode.extra_codes)
    r_pd = importance.poisson_radius if importance.poisson_radius is not None else n / 2
    r2 = r_pd**2
    half = n // 2
    wlen = mode.window_length

    frame_keys = []
    for si, sp in enumerate(seq_pairs):
        for t in range(wlen - 1, len(sp)):
            frame_keys.append((si, t))

    rngs = {}
    importance_cache = {}
    accepted_by_frame = {k: [] for k in frame_keys}
    picked = []  # (seq, frame, center) in collection order
    attempts = max(1, importance.darts_per_frame)

    for _pass in range(importance.max_passes):
        for key in frame_keys:
            si, t = key
            sp = seq_pairs[si]
            if key not in importance_cache:
                den = read_field(sp.coarse_den[t])
                vel = read_field(sp.coarse_vel[t])
                p = _importance_field(den, vel, importance.gamma)
                dims = den.shape.dims
                lo = [half] * ndim
                hi = [d - (n - half) for d in dims]
                importance_cache[key] = (p, lo, hi)
            p, lo, hi = importance_cache[key]
            if p.max() <= 0 or any(l > h for l, h in zip(lo, hi)):
                continue
            if key not in rngs:
                rngs[key] = np.random.default_rng([seed, si, t])
            new = _throw_darts(rngs[key], p, lo, hi, accepted_by_frame[key], r2, attempts)
            picked.extend((si, t, c) for c in new)
        if len(picked) >= count:
            break
    if len(picked) < count:
        raise SamplingError(count, len(picked))
    picked = sorted(picked[:count])

    rots = rotations or [identity_rotation(ndim)]
    layout = PatchLayout(mode, n, ndim)
    inputs, residuals, centers, frames_, seqs, rot_idx = [], [], [], [], [], []
    by_frame: dict[tuple[int, int], list] = {}
    for si, t, c in picked:
        by_frame.setdefault((si, t), []).append(c)

    for (si, t), cs in sorted(by_frame.items()):
        sp = seq_pairs[si]
        window = [read_field(sp.coarse_vel[t - k]) for k in range(wlen)]
        fine = read_field(sp.fine_vel[t])
        up = upsample_linear_array(window[0].data, (sp.ratio,) * ndim)
        vort = None
        if mode.vorticity_channels(ndim):
            vort = [curl_array(w.data, w.shape.spacing) for w in window]
        extras = {name: sp.extra_value(name) for name in mode.extra_codes}
        total = len(sp)
        for c in cs:
            pair = extract_pair(
                window, fine, up, c, mode, norm, sp.ratio, n,
                frame=t, total_frames=total, extra_values=extras,
                vorticity_window=vort,
            )
            for ri, rot in enumerate(rots):
                rp = pair if rot.is_identity() else rotate_pair(pair, rot, layout)
                inputs.append(rp.input.vector.astype(np.float32))
                residuals.append(rp.residual_target.astype(np.float32))
                centers.append(c)
                frames_.append(t)
                seqs.append(si)
                rot_idx.append(ri)

    manifest = {
        "kind": "patch_set",
        "sources": [sp.manifest for sp in seq_pairs],
        "mode": mode.to_dict(),
        "n": n,
        "ratio": seq_pairs[0].ratio,
        "count": count,
        "seed": seed,
        "importance": {
            "gamma": importance.gamma,
            "poisson_radius": r_pd,
            "darts_per_frame": importance.darts_per_frame,
            "max_passes": importance.max_passes,
        },
        "rotations": len(rots),
        "scale": norm.scale,
        "code_scales": dict(norm.code_scales),
    }
    return PatchSet(
        inputs=np.asarray(inputs, dtype=np.float32),
        residuals=np.asarray(residuals, dtype=np.float32),
        centers=np.asarray(centers, dtype=np.int32),
        frames=np.asarray(frames_, dtype=np.int32),
        sequences=np.asarray(seqs, dtype=np.int32),
        rotations=np.asarray(rot_idx, dtype=np.int8),
        mode=mode,
        n=n,
        ratio=seq_pairs[0].ratio,
        norm=norm,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# Patch archive (PA01)
# ---------------------------------------------------------------------------

_PA_HEADER = struct.Struct("<4sIIIBBBHdI")
PA_MAGIC = b"PA01"


def save_patches(patches: PatchSet, path: str | os.PathLike) -> None:
    meta = json.dumps(patches.manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(
            _PA_HEADER.pack(
                PA_MAGIC,
                len(patches),
                patches.inputs.shape[1],
                patches.residuals.shape[1],
                patches.centers.shape[1],
                patches.n,
                patches.ratio,
                0,
                patches.norm.scale,
                len(meta),
            )
        )
        fh.write(meta)
        for arr, dt in (
            (patches.inputs, "<f4"),
            (patches.residuals, "<f4"),
            (patches.centers, "<i4"),
            (patches.frames, "<i4"),
            (patches.sequences, "<i4"),
            (patches.rotations, "<i1"),
        ):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_patches(path: str | os.PathLike) -> PatchSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, k, nin, nres, ndim, n, ratio, _res, scale, mlen = _PA_HEADER.unpack_from(blob)
    if magic != PA_MAGIC:
        raise ValueError(f"{path}: not a patch archive")
    off = _PA_HEADER.size
    manifest = json.loads(blob[off : off + mlen])
    off += mlen

    def take(shape, dt):
        nonlocal off
        cnt = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype=dt, count=cnt, offset=off).reshape(shape)
        off += cnt * np.dtype(dt).itemsize
        return np.array(arr)

    inputs = take((k, nin), "<f4")
    residuals = take((k, nres), "<f4")
    centers = take((k, ndim), "<i4")
    frames_ = take((k,), "<i4")
    seqs = take((k,), "<i4")
    rot_idx = take((k,), "<i1")
    mode = EncodingMode.from_dict(manifest["mode"])
    norm = NormalizationInfo(scale, dict(manifest.get("code_scales", {})))
    return PatchSet(
        inputs, residuals, centers, frames_, seqs, rot_idx, mode, n, ratio, norm, manifest
    )
