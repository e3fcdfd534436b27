import numpy as np
import pytest

from smokesr import fields
from smokesr.fields import (
    BadMagicError,
    FormatVersionError,
    GridShape,
    NonFiniteValuesError,
    ScalarField,
    TruncatedPayloadError,
    VectorField,
    curl,
    divergence,
    gradient_all,
    read_field,
    upsample_linear,
    write_field,
)


def grid2(n=8, spacing=1.0):
    return GridShape((n, n), spacing)


def coords(shape: GridShape):
    """Cell-center coordinates, one array per axis."""
    axes = [(np.arange(d) + 0.5) * shape.spacing for d in shape.dims]
    return np.meshgrid(*axes, indexing="ij")


def test_gridshape_validation():
    with pytest.raises(ValueError):
        GridShape((3, 8))
    with pytest.raises(ValueError):
        GridShape((8,))
    with pytest.raises(ValueError):
        GridShape((8, 8), spacing=0.0)


def test_vectorfield_validation():
    g = grid2()
    with pytest.raises(ValueError):
        VectorField(g, np.zeros((8, 8)))
    bad = np.zeros((8, 8, 2))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        VectorField(g, bad)


# ---------------------------------------------------------------------------
# divergence
# ---------------------------------------------------------------------------


def test_divergence_constant_is_zero():
    f = VectorField(grid2(), np.full((8, 8, 2), 3.7))
    assert np.allclose(divergence(f).values, 0.0)


def test_divergence_solenoidal_ramp():
    # f = (x, -y) has zero divergence everywhere (linear, so exact even at edges)
    g = grid2()
    x, y = coords(g)
    f = VectorField(g, np.stack([x, -y], axis=-1))
    assert np.allclose(divergence(f).values, 0.0, atol=1e-12)


def test_divergence_expanding_ramp():
    g = grid2()
    x, y = coords(g)
    f = VectorField(g, np.stack([x, y], axis=-1))
    assert np.allclose(divergence(f).values[1:-1, 1:-1], 2.0)


def test_divergence_respects_spacing():
    g = GridShape((8, 8), spacing=0.5)
    x, y = coords(g)
    f = VectorField(g, np.stack([x, y], axis=-1))
    assert np.allclose(divergence(f).values[1:-1, 1:-1], 2.0)


# ---------------------------------------------------------------------------
# curl
# ---------------------------------------------------------------------------


def test_curl_constant_is_zero():
    f = VectorField(grid2(), np.full((8, 8, 2), -1.2))
    assert np.allclose(curl(f).values, 0.0)


def test_curl_rigid_rotation_2d():
    g = grid2()
    x, y = coords(g)
    f = VectorField(g, np.stack([-y, x], axis=-1))
    assert np.allclose(curl(f).values[1:-1, 1:-1], 2.0)


def _curl3_oracle(data, h):
    """Independent loop-based stencil evaluation of the 3D curl."""
    dims = data.shape[:-1]
    out = np.zeros_like(data)

    def deriv(comp, axis, idx):
        lo = list(idx)
        hi = list(idx)
        if idx[axis] == 0:
            hi[axis] += 1
            return (data[tuple(hi) + (comp,)] - data[tuple(idx) + (comp,)]) / h
        if idx[axis] == dims[axis] - 1:
            lo[axis] -= 1
            return (data[tuple(idx) + (comp,)] - data[tuple(lo) + (comp,)]) / h
        hi[axis] += 1
        lo[axis] -= 1
        return (data[tuple(hi) + (comp,)] - data[tuple(lo) + (comp,)]) / (2 * h)

    for idx in np.ndindex(dims):
        out[idx + (0,)] = deriv(2, 1, idx) - deriv(1, 2, idx)
        out[idx + (1,)] = deriv(0, 2, idx) - deriv(2, 0, idx)
        out[idx + (2,)] = deriv(1, 0, idx) - deriv(0, 1, idx)
    return out


def test_curl_3d_matches_stencil_oracle():
    g = GridShape((5, 5, 5), spacing=0.7)
    data = np.zeros((5, 5, 5, 3))
    data[2, 2, 2, 1] = 1.0  # single perturbed cell
    f = VectorField(g, data)
    assert np.allclose(curl(f).data, _curl3_oracle(data, 0.7), atol=1e-12)


# ---------------------------------------------------------------------------
# gradient_all
# ---------------------------------------------------------------------------


def test_gradient_all_constant_zero():
    f = VectorField(grid2(), np.full((8, 8, 2), 2.0))
    assert np.allclose(gradient_all(f), 0.0)


def test_gradient_all_linear_ramp():
    g = grid2()
    x, _ = coords(g)
    f = VectorField(g, np.stack([x, np.zeros_like(x)], axis=-1))
    grad = gradient_all(f)
    assert np.allclose(grad[1:-1, 1:-1, 0, 0], 1.0)
    assert np.allclose(grad[..., 0, 1], 0.0)
    assert np.allclose(grad[..., 1, :], 0.0)


def test_gradient_all_matches_loop_oracle():
    rng = np.random.default_rng(5)
    g = GridShape((4, 4, 4), spacing=1.0)
    data = rng.normal(size=(4, 4, 4, 3))
    grad = fields.gradient_all_array(data, 1.0)
    for c in range(3):
        for a in range(3):
            for idx in np.ndindex((4, 4, 4)):
                lo, hi = list(idx), list(idx)
                if idx[a] == 0:
                    hi[a] += 1
                    want = data[tuple(hi) + (c,)] - data[tuple(idx) + (c,)]
                elif idx[a] == 3:
                    lo[a] -= 1
                    want = data[tuple(idx) + (c,)] - data[tuple(lo) + (c,)]
                else:
                    hi[a] += 1
                    lo[a] -= 1
                    want = (data[tuple(hi) + (c,)] - data[tuple(lo) + (c,)]) / 2
                assert grad[idx + (c, a)] == pytest.approx(want, abs=1e-12)


def test_operators_are_linear():
    rng = np.random.default_rng(11)
    g = grid2()
    fa = VectorField(g, rng.normal(size=(8, 8, 2)))
    fb = VectorField(g, rng.normal(size=(8, 8, 2)))
    a, b = 1.7, -0.4
    combo = VectorField(g, a * fa.data + b * fb.data)
    for op in (lambda f: divergence(f).values, lambda f: curl(f).values):
        lhs = op(combo)
        rhs = a * op(fa) + b * op(fb)
        assert np.allclose(lhs, rhs, rtol=1e-5, atol=1e-12)


# ---------------------------------------------------------------------------
# upsample_linear
# ---------------------------------------------------------------------------


def test_upsample_constant():
    f = VectorField(grid2(4), np.full((4, 4, 2), 2.5))
    up = upsample_linear(f, 4)
    assert up.shape.dims == (16, 16)
    assert np.allclose(up.data, 2.5)


def test_upsample_reproduces_coarse_at_aligned_points():
    rng = np.random.default_rng(3)
    f = VectorField(grid2(5), rng.normal(size=(5, 5, 2)))
    for r in (2, 3, 4):
        up = upsample_linear(f, r)
        assert np.allclose(up.data[::r, ::r], f.data, atol=1e-14)


def test_upsample_1d_ramp_preserves_linear_values():
    g = GridShape((4, 4))
    vals = np.tile(np.arange(4.0)[:, None], (1, 4))
    f = VectorField(g, np.stack([vals, np.zeros_like(vals)], axis=-1))
    up = upsample_linear(f, 2)
    # interior fine samples sit on the straight line through coarse samples
    assert np.allclose(up.data[: 2 * 3 + 1, 0, 0], np.arange(7) * 0.5)


def _bilinear_oracle(data, r):
    """Direct per-fine-cell evaluation of the bilinear formula."""
    n0, n1 = data.shape[:2]
    out = np.zeros((n0 * r, n1 * r) + data.shape[2:])
    for j0 in range(n0 * r):
        for j1 in range(n1 * r):
            x, y = j0 / r, j1 / r
            i0, i1 = min(int(x), n0 - 1), min(int(y), n1 - 1)
            k0, k1 = min(i0 + 1, n0 - 1), min(i1 + 1, n1 - 1)
            tx, ty = x - i0, y - i1
            out[j0, j1] = (
                data[i0, i1] * (1 - tx) * (1 - ty)
                + data[k0, i1] * tx * (1 - ty)
                + data[i0, k1] * (1 - tx) * ty
                + data[k0, k1] * tx * ty
            )
    return out


def test_upsample_matches_bilinear_oracle():
    rng = np.random.default_rng(7)
    data = rng.normal(size=(4, 4, 2))
    got = fields.upsample_linear_array(data, (2, 2))
    assert np.allclose(got, _bilinear_oracle(data, 2), atol=1e-13)


def test_upsample_rejects_bad_ratio():
    f = VectorField(grid2(4), np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        upsample_linear(f, 0)


# ---------------------------------------------------------------------------
# VF01 I/O
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "dims,ncomp",
    [((8, 8), 2), ((5, 9), 1), ((4, 4, 4), 3), ((64, 4, 4), 1)],
)
def test_roundtrip_bit_exact(tmp_path, dims, ncomp):
    rng = np.random.default_rng(hash(dims) % 2**32)
    shape = GridShape(dims, 0.25)
    if ncomp == 1:
        f = ScalarField(shape, np.abs(rng.normal(size=dims)))
    else:
        f = VectorField(shape, rng.normal(size=dims + (ncomp,)))
    p1 = tmp_path / "a.00000.vf"
    p2 = tmp_path / "b.00000.vf"
    write_field(f, p1)
    write_field(read_field(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_read_errors_are_distinct(tmp_path):
    f = VectorField(grid2(4), np.ones((4, 4, 2)))
    path = tmp_path / "f.00000.vf"
    write_field(f, path)
    blob = bytearray(path.read_bytes())

    bad = tmp_path / "bad.vf"
    bad.write_bytes(b"XX" + bytes(blob[2:]))
    with pytest.raises(BadMagicError):
        read_field(bad)

    bad.write_bytes(b"VF99" + bytes(blob[4:]))
    with pytest.raises(FormatVersionError):
        read_field(bad)

    bad.write_bytes(bytes(blob[:-8]))
    with pytest.raises(TruncatedPayloadError):
        read_field(bad)

    nan_payload = bytearray(blob)
    nan_payload[-4:] = np.float32(np.nan).tobytes()
    bad.write_bytes(bytes(nan_payload))
    with pytest.raises(NonFiniteValuesError):
        read_field(bad)


def test_write_rejects_nonfinite(tmp_path):
    with pytest.raises(NonFiniteValuesError):
        fields.write_raw_field(tmp_path / "x.vf", [np.array([[np.inf] * 4] * 4)], (4, 4), 1.0)


def test_frame_listing(tmp_path):
    f = ScalarField(grid2(4), np.zeros((4, 4)))
    for i in (0, 2, 1):
        write_field(f, fields.frame_path(tmp_path, "den", i))
    write_field(f, fields.frame_path(tmp_path, "vel", 0))
    got = fields.list_frames(tmp_path, "den")
    assert [p.split(".")[-2] for p in got] == ["00000", "00001", "00002"]
