"""Grid-based scalar/vector fields, differential operators, resampling, and file I/O.

Axis convention: array axis ``a`` is spatial coordinate ``a`` and velocity
component ``a`` points along it. Vector data is stored as one array of shape
``(*dims, D)`` with the component on the last axis. All operators use central
differences in the interior and first-order one-sided differences at the
domain boundary, so they are total on any finite field.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC_PREFIX = b"VF"
FORMAT_VERSION = b"01"


class FieldFormatError(Exception):
    """Base class for field-file format problems."""


class BadMagicError(FieldFormatError):
    pass


class FormatVersionError(FieldFormatError):
    pass


class TruncatedPayloadError(FieldFormatError):
    pass


class NonFiniteValuesError(FieldFormatError):
    pass


@dataclass(frozen=True)
class GridShape:
    """Uniform cell-centered grid: D cell counts plus one cell size."""

    dims: tuple[int, ...]
    spacing: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got {len(self.dims)} dims")
        if any(d < 4 for d in self.dims):
            raise ValueError(f"all dims must be >= 4, got {self.dims}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def cell_count(self) -> int:
        return int(np.prod(self.dims))


@dataclass(frozen=True)
class ScalarField:
    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.shape.dims:
            raise ValueError(f"values shape {v.shape} != grid dims {self.shape.dims}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class VectorField:
    shape: GridShape
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.data, dtype=np.float64)
        want = self.shape.dims + (self.shape.ndim,)
        if v.shape != want:
            raise ValueError(f"data shape {v.shape} != {want}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "data", v)

    def component(self, i: int) -> np.ndarray:
        return self.data[..., i]

    @property
    def ndim(self) -> int:
        return self.shape.ndim

    def max_speed(self) -> float:
        return float(np.sqrt((self.data**2).sum(axis=-1)).max())


def zeros_vector(shape: GridShape) -> VectorField:
    return VectorField(shape, np.zeros(shape.dims + (shape.ndim,)))


def zeros_scalar(shape: GridShape) -> ScalarField:
    return ScalarField(shape, np.zeros(shape.dims))


# ---------------------------------------------------------------------------
# Differential operators
# ---------------------------------------------------------------------------


def divergence_array(data: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    """Central-difference divergence of a (*dims, D) array."""
    ndim = data.shape[-1]
    out = np.zeros(data.shape[:-1])
    for a in range(ndim):
        out += np.gradient(data[..., a], spacing, axis=a, edge_order=1)
    return out


def divergence(f: VectorField) -> ScalarField:
    return ScalarField(f.shape, divergence_array(f.data, f.shape.spacing))


def curl_array(data: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    """Curl of a (*dims, D) array: scalar grid in 2D, (*dims, 3) in 3D."""
    d = lambda comp, axis: np.gradient(data[..., comp], spacing, axis=axis, edge_order=1)
    if data.shape[-1] == 2:
        return d(1, 0) - d(0, 1)
    return np.stack(
        [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)],
        axis=-1,
    )


def curl(f: VectorField):
    """Vorticity of f: a ScalarField in 2D, a VectorField in 3D."""
    w = curl_array(f.data, f.shape.spacing)
    if f.ndim == 2:
        return ScalarField(f.shape, w)
    return VectorField(f.shape, w)


def gradient_all_array(data: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    """All first partials of every component: out[..., c, a] = d comp_c / d x_a."""
    ncomp = data.shape[-1]
    ndim = data.ndim - 1
    out = np.empty(data.shape[:-1] + (ncomp, ndim))
    for c in range(ncomp):
        for a in range(ndim):
            out[..., c, a] = np.gradient(data[..., c], spacing, axis=a, edge_order=1)
    return out


def gradient_all(f: VectorField) -> np.ndarray:
    return gradient_all_array(f.data, f.shape.spacing)


def strain_rate_norm(f: VectorField) -> ScalarField:
    """Frobenius norm of the strain-rate tensor 0.5*(grad u + grad u^T) per cell."""
    j = gradient_all(f)
    s = 0.5 * (j + np.swapaxes(j, -1, -2))
    return ScalarField(f.shape, np.sqrt((s**2).sum(axis=(-1, -2))))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def _ratio_tuple(ratio, ndim: int) -> tuple[int, ...]:
    if np.isscalar(ratio):
        ratio = (ratio,) * ndim
    ratio = tuple(int(r) for r in ratio)
    if len(ratio) != ndim or any(r < 1 for r in ratio):
        raise ValueError(f"ratio must be >= 1 integer per axis, got {ratio}")
    return ratio


def upsample_linear_array(data: np.ndarray, ratio, value_axes: int = 1) -> np.ndarray:
    """Separable linear upsampling of cell samples by an integer factor per axis.

    Fine index j along an axis maps to coarse coordinate j/r (edge-clamped), so
    fine sample j = r*i reproduces coarse sample i exactly and constants map to
    constants. The trailing `value_axes` axes are carried through unchanged.
    """
    ndim = data.ndim - value_axes
    ratio = _ratio_tuple(ratio, ndim)
    out = data
    for a in range(ndim):
        r = ratio[a]
        if r == 1:
            continue
        n = out.shape[a]
        pos = np.arange(n * r) / r
        i0 = np.minimum(pos.astype(int), n - 1)
        i1 = np.minimum(i0 + 1, n - 1)
        t = pos - i0
        sl = [np.newaxis] * out.ndim
        sl[a] = slice(None)
        t = t[tuple(sl)]
        out = np.take(out, i0, axis=a) * (1.0 - t) + np.take(out, i1, axis=a) * t
    return out


def upsample_linear(f: VectorField, ratio) -> VectorField:
    ratio = _ratio_tuple(ratio, f.ndim)
    fine_dims = tuple(d * r for d, r in zip(f.shape.dims, ratio))
    fine_shape = GridShape(fine_dims, f.shape.spacing / ratio[0])
    return VectorField(fine_shape, upsample_linear_array(f.data, ratio))


def upsample_scalar(f: ScalarField, ratio) -> ScalarField:
    ratio = _ratio_tuple(ratio, f.shape.ndim)
    fine_dims = tuple(d * r for d, r in zip(f.shape.dims, ratio))
    fine_shape = GridShape(fine_dims, f.shape.spacing / ratio[0])
    return ScalarField(fine_shape, upsample_linear_array(f.values[..., None], ratio)[..., 0])


# ---------------------------------------------------------------------------
# VF01 file format
# ---------------------------------------------------------------------------
# magic "VF01", u8 D, u8 component count C, u16 reserved=0, D x u32 LE dims,
# f64 LE spacing, then C grids of prod(dims) f32 LE values each, row-major
# (last dim fastest). One file per field per frame, name.%05d.vf.

_HEADER_FIXED = struct.Struct("<4sBBH")


def write_raw_field(path: str | os.PathLike, arrays: list[np.ndarray], dims: tuple[int, ...],
                    spacing: float) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValuesError(f"refusing to write non-finite values to {path}")
    ndim = len(dims)
    with open(path, "wb") as fh:
        fh.write(_HEADER_FIXED.pack(MAGIC_PREFIX + FORMAT_VERSION, ndim, len(arrays), 0))
        fh.write(struct.pack(f"<{ndim}I", *dims))
        fh.write(struct.pack("<d", spacing))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_raw_field(path: str | os.PathLike) -> tuple[list[np.ndarray], tuple[int, ...], float]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER_FIXED.size:
        raise TruncatedPayloadError(f"{path}: file shorter than fixed header")
    magic, ndim, ncomp, _reserved = _HEADER_FIXED.unpack_from(blob)
    if magic[:2] != MAGIC_PREFIX:
        raise BadMagicError(f"{path}: bad magic {magic[:2]!r}")
    if magic[2:] != FORMAT_VERSION:
        raise FormatVersionError(f"{path}: unsupported format version {magic[2:]!r}")
    off = _HEADER_FIXED.size
    need = off + 4 * ndim + 8
    if len(blob) < need:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    dims = struct.unpack_from(f"<{ndim}I", blob, off)
    off += 4 * ndim
    (spacing,) = struct.unpack_from("<d", blob, off)
    off += 8
    count = int(np.prod(dims))
    if len(blob) != off + 4 * count * ncomp:
        raise TruncatedPayloadError(
            f"{path}: payload length {len(blob) - off} inconsistent with header "
            f"({ncomp} x {count} f32 expected)"
        )
    arrays = []
    for c in range(ncomp):
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off + 4 * count * c)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValuesError(f"{path}: component {c} contains non-finite values")
        arrays.append(arr.reshape(dims).astype(np.float64))
    return arrays, dims, spacing


def write_field(f: VectorField | ScalarField, path: str | os.PathLike) -> None:
    if isinstance(f, VectorField):
        arrays = [f.component(i) for i in range(f.ndim)]
    else:
        arrays = [f.values]
    write_raw_field(path, arrays, f.shape.dims, f.shape.spacing)


def read_field(path: str | os.PathLike) -> VectorField | ScalarField:
    arrays, dims, spacing = read_raw_field(path)
    shape = GridShape(dims, spacing)
    if len(arrays) == 1:
        return ScalarField(shape, arrays[0])
    if len(arrays) != shape.ndim:
        raise FieldFormatError(
            f"{path}: component count {len(arrays)} matches neither scalar nor {shape.ndim}D vector"
        )
    return VectorField(shape, np.stack(arrays, axis=-1))


def frame_path(directory: str | os.PathLike, name: str, index: int) -> str:
    return os.path.join(directory, f"{name}.{index:05d}.vf")


def list_frames(directory: str | os.PathLike, name: str) -> list[str]:
    """All frame files for `name` in a directory, ordered by frame index."""
    prefix = name + "."
    entries = []
    for fn in os.listdir(directory):
        if fn.startswith(prefix) and fn.endswith(".vf"):
            mid = fn[len(prefix):-3]
            if mid.isdigit():
                entries.append((int(mid), os.path.join(directory, fn)))
    entries.sort()
    return [p for _, p in entries]
