import numpy as np

from smokesr.fields import GridShape, VectorField, upsample_linear_array
from smokesr.metrics import (
    StageTimings,
    critical_wavenumber,
    curve_csv,
    divergence_norm,
    energy_spectrum,
    normalized_mse_curve,
    spectrum_csv,
    timing_report,
)
from smokesr.solver import SimConfig, Inlet, initial_state, step


def test_spectrum_zero_field():
    f = VectorField(GridShape((16, 16)), np.zeros((16, 16, 2)))
    assert all(e == 0.0 for _, e in energy_spectrum(f))


def test_spectrum_single_mode_peaks_at_k4():
    n = 64
    x = (np.arange(n) + 0.5) / n
    u = np.sin(2 * np.pi * 4 * x)[:, None] * np.ones((1, n))
    f = VectorField(GridShape((n, n)), np.stack([u, np.zeros_like(u)], axis=-1))
    spec = dict(energy_spectrum(f))
    total = sum(spec.values())
    # Hann windowing spreads an integer tone into exactly the +-1 neighbour
    # bins, so the main lobe {3,4,5} carries essentially all the energy and
    # the k=4 shell is the peak.
    assert max(spec, key=spec.get) == 4
    assert (spec[3] + spec[4] + spec[5]) / total > 0.99


def test_spectrum_parseval():
    rng = np.random.default_rng(0)
    n = 32
    data = rng.normal(size=(n, n, 2))
    f = VectorField(GridShape((n, n)), data)
    total = sum(e for _, e in energy_spectrum(f))
    # windowed Parseval, restricted to shells below the smallest Nyquist
    w = np.outer(np.hanning(n), np.hanning(n))
    uhat0 = np.fft.fftn(w * data[..., 0]) / n**2
    uhat1 = np.fft.fftn(w * data[..., 1]) / n**2
    freqs = np.fft.fftfreq(n) * n
    kmag = np.sqrt(freqs[:, None] ** 2 + freqs[None, :] ** 2)
    keep = np.floor(kmag) <= n // 2
    want = 0.5 * ((np.abs(uhat0) ** 2)[keep].sum() + (np.abs(uhat1) ** 2)[keep].sum())
    assert abs(total - want) <= 1e-3 * want


def test_critical_wavenumber():
    a = [(k, 10.0 ** (-k / 10)) for k in range(17)]
    b = list(a)
    b[6] = (6, a[6][1] * 10.0)  # distort above threshold at k=6
    assert critical_wavenumber(a, a) == 16
    assert critical_wavenumber(a, b) == 5


def test_mse_curve_identical_and_zero():
    g = GridShape((8, 8))
    rng = np.random.default_rng(1)
    seq = [VectorField(g, rng.normal(size=(8, 8, 2))) for _ in range(3)]
    zeros = [VectorField(g, np.zeros((8, 8, 2))) for _ in range(3)]
    assert all(e == 0.0 for _, e in normalized_mse_curve(seq, seq))
    assert all(e == 1.0 for _, e in normalized_mse_curve(zeros, seq))


def test_mse_curve_upsamples_and_matches_script_oracle():
    rng = np.random.default_rng(2)
    gc, gf = GridShape((8, 8)), GridShape((16, 16), 0.5)
    coarse = [VectorField(gc, rng.normal(size=(8, 8, 2))) for _ in range(4)]
    fine = [VectorField(gf, rng.normal(size=(16, 16, 2))) for _ in range(4)]
    got = normalized_mse_curve(coarse, fine)
    for t, e in got:
        up = upsample_linear_array(coarse[t].data, (2, 2))
        want = ((up - fine[t].data) ** 2).sum() / (fine[t].data ** 2).sum()
        assert abs(e - want) < 1e-12


def test_divergence_norm_constant_zero():
    f = VectorField(GridShape((8, 8)), np.full((8, 8, 2), 1.3))
    assert divergence_norm(f) == 0.0


def test_divergence_norm_solver_output():
    cfg = SimConfig(
        shape=GridShape((32, 32), 1.0),
        dt=0.05,
        buoyancy=0.6,
        inlet=Inlet(center=(16.0, 3.0), radius=2.5, velocity=(0.0, 1.2)),
    )
    s = initial_state(cfg)
    for _ in range(10):
        s = step(s)
    assert divergence_norm(s.velocity) <= 1e-3


def test_timing_report_schema():
    t = StageTimings(coarse_sim=0.01, synthesis=0.02, fine_sim=0.3)
    lines = timing_report(t).strip().split("\n")
    assert lines[0] == "stage,seconds_per_frame"
    assert [ln.split(",")[0] for ln in lines[1:]] == [
        "coarse_sim",
        "synthesis",
        "fine_sim",
        "speedup",
    ]
    assert float(lines[-1].split(",")[1]) == round(0.3 / 0.03, 4)


def test_csv_helpers():
    assert curve_csv([(0, 1.0)], "err").startswith("frame,err\n0,")
    assert spectrum_csv([(0, 0.5)]).startswith("k,energy\n0,")
