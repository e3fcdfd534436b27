"""Quantitative evaluation: energy spectra, error curves, divergence norms, timings."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .fields import VectorField, divergence_array, upsample_linear_array


def _hann_window(dims: tuple[int, ...]) -> np.ndarray:
    w = np.ones(dims)
    for a, n in enumerate(dims):
        h = np.hanning(n)
        sl = [np.newaxis] * len(dims)
        sl[a] = slice(None)
        w = w * h[tuple(sl)]
    return w


def energy_spectrum(f: VectorField) -> list[tuple[int, float]]:
    """Shell-binned kinetic energy vs integer wavenumber.

    Fields are Hann-windowed (simulation domains are not periodic), transformed
    per component, and |u_hat|^2/2 is summed over integer shells |kappa| in
    [k, k+1) up to the smallest axis Nyquist.
    """
    dims = f.shape.dims
    w = _hann_window(dims)
    ntot = float(np.prod(dims))
    freqs = [np.fft.fftfreq(n) * n for n in dims]
    mesh = np.meshgrid(*freqs, indexing="ij", sparse=True)
    kmag = np.sqrt(sum(m**2 for m in mesh))
    shell = np.floor(kmag).astype(int)
    kmax = min(dims) // 2
    energy = np.zeros(kmax + 1)
    for c in range(f.ndim):
        uhat = np.fft.fftn(w * f.component(c)) / ntot
        power = 0.5 * np.abs(uhat) ** 2
        binned = np.bincount(shell.ravel(), weights=power.ravel())
        upto = min(len(binned), kmax + 1)
        energy[:upto] += binned[:upto]
    return [(k, float(energy[k])) for k in range(kmax + 1)]


def critical_wavenumber(
    spectrum_a: list[tuple[int, float]],
    spectrum_b: list[tuple[int, float]],
    threshold: float = 0.3,
) -> int:
    """Largest k such that |log10 Ea - log10 Eb| <= threshold for all 1 <= k' <= k."""
    ea = dict(spectrum_a)
    eb = dict(spectrum_b)
    best = 0
    for k in range(1, min(max(ea), max(eb)) + 1):
        a, b = ea.get(k, 0.0), eb.get(k, 0.0)
        if a <= 0.0 or b <= 0.0:
            break
        if abs(np.log10(a) - np.log10(b)) > threshold:
            break
        best = k
    return best


def normalized_mse_curve(seq_a, seq_b) -> list[tuple[int, float]]:
    """Per-frame ||A_t - B_t||^2 / ||B_t||^2 with B the reference.

    A is linearly upsampled first when the shapes differ. Not symmetric: the
    reference is always the second argument.
    """
    out = []
    for t, (a, b) in enumerate(zip(seq_a, seq_b)):
        da = a.data if isinstance(a, VectorField) else np.asarray(a)
        db = b.data if isinstance(b, VectorField) else np.asarray(b)
        if da.shape != db.shape:
            ratio = tuple(nb // na for na, nb in zip(da.shape[:-1], db.shape[:-1]))
            da = upsample_linear_array(da, ratio)
        denom = float((db**2).sum())
        num = float(((da - db) ** 2).sum())
        out.append((t, num / denom if denom > 0 else 0.0))
    return out


def divergence_norm(f: VectorField) -> float:
    """Dimensionless RMS of the interior central-difference divergence.

    RMS(div) * spacing / mean speed; zero speed gives zero.
    """
    div = divergence_array(f.data, f.shape.spacing)
    core = tuple(slice(1, -1) for _ in f.shape.dims)
    rms = float(np.sqrt((div[core] ** 2).mean()))
    mean_speed = float(np.sqrt((f.data**2).sum(axis=-1)).mean())
    if mean_speed == 0.0:
        return 0.0
    return rms * f.shape.spacing / mean_speed


@dataclass
class StageTimings:
    """Per-frame wall-clock for the three pipeline stages, in seconds."""

    coarse_sim: float
    synthesis: float
    fine_sim: float

    @property
    def speedup(self) -> float:
        return self.fine_sim / max(self.coarse_sim + self.synthesis, 1e-12)


def timing_report(timings: StageTimings) -> str:
    """CSV with a fixed schema: stage,seconds_per_frame plus a derived speedup row."""
    buf = io.StringIO()
    buf.write("stage,seconds_per_frame\n")
    buf.write(f"coarse_sim,{timings.coarse_sim:.6f}\n")
    buf.write(f"synthesis,{timings.synthesis:.6f}\n")
    buf.write(f"fine_sim,{timings.fine_sim:.6f}\n")
    buf.write(f"speedup,{timings.speedup:.4f}\n")
    return buf.getvalue()


def curve_csv(curve: list[tuple[int, float]], value_name: str = "value") -> str:
    buf = io.StringIO()
    buf.write(f"frame,{value_name}\n")
    for t, v in curve:
        buf.write(f"{t},{v:.8e}\n")
    return buf.getvalue()


def spectrum_csv(spectrum: list[tuple[int, float]]) -> str:
    buf = io.StringIO()
    buf.write("k,energy\n")
    for k, e in spectrum:
        buf.write(f"{k},{e:.8e}\n")
    return buf.getvalue()
