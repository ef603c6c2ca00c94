"""Biot-Savart couplings from superconducting circuit geometry and spin placement in samples."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import constants

MU0 = constants.mu_0
HBAR = constants.hbar
MU_B = constants.physical_constants["Bohr magneton"][0]
G_E = 2.0023
SINGULAR_DISTANCE = 1e-12


class SingularPointError(ValueError):
    pass


@dataclass(frozen=True)
class WireSegment:
    """Straight conductor with a rectangular cross-section split into uniform filaments.

    ``width_dir`` fixes the orientation of the cross-section; the height direction is
    ``direction x width_dir``.
    """

    start: tuple
    end: tuple
    current: float
    width: float = 0.0
    height: float = 0.0
    n_width: int = 1
    n_height: int = 1
    width_dir: Optional[tuple] = None

    def __post_init__(self):
        s, e = np.asarray(self.start, float), np.asarray(self.end, float)
        if s.shape != (3,) or e.shape != (3,):
            raise ValueError("segment endpoints must be 3-vectors")
        if np.linalg.norm(e - s) == 0:
            raise ValueError("segment has zero length")
        if self.n_width < 1 or self.n_height < 1:
            raise ValueError("filament counts must be >= 1")
        if self.width < 0 or self.height < 0:
            raise ValueError("cross-section sizes must be non-negative")

    @property
    def direction(self) -> np.ndarray:
        d = np.asarray(self.end, float) - np.asarray(self.start, float)
        return d / np.linalg.norm(d)

    def _cross_axes(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.direction
        if self.width_dir is not None:
            w = np.asarray(self.width_dir, float)
            w = w - np.dot(w, d) * d
        else:
            trial = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
            w = np.cross(trial, d)
        w /= np.linalg.norm(w)
        return w, np.cross(d, w)

    def filaments(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Start points, end points (each (n, 3)) and the current per filament."""
        w, h = self._cross_axes()
        uw = (np.arange(self.n_width) + 0.5) / self.n_width - 0.5
        uh = (np.arange(self.n_height) + 0.5) / self.n_height - 0.5
        offs = (uw[:, None, None] * self.width * w + uh[None, :, None] * self.height * h).reshape(-1, 3)
        s = np.asarray(self.start, float) + offs
        e = np.asarray(self.end, float) + offs
        return s, e, self.current / len(offs)


def _segment_field(starts: np.ndarray, ends: np.ndarray, currents: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Exact finite-segment Biot-Savart field for thin filaments; points (m, 3) -> (m, 3)."""
    out = np.zeros_like(points)
    for s, e, cur in zip(starts, ends, currents):
        r1 = points - s
        r2 = points - e
        n1 = np.linalg.norm(r1, axis=1)
        n2 = np.linalg.norm(r2, axis=1)
        seg = e - s
        length = np.linalg.norm(seg)
        along = r1 @ seg / length
        perp = np.linalg.norm(r1 - np.outer(along, seg / length), axis=1)
        if np.any((perp <= SINGULAR_DISTANCE) & (along >= -SINGULAR_DISTANCE) & (along <= length + SINGULAR_DISTANCE)):
            raise SingularPointError("field requested on a filament")
        cross = np.cross(r1, r2)
        denom = n1 * n2 * (n1 * n2 + np.einsum("ij,ij->i", r1, r2))
        with np.errstate(invalid="ignore", divide="ignore"):
            factor = np.where(denom > 0, (n1 + n2) / denom, 0.0)
        out += (MU0 * cur / (4 * np.pi)) * cross * factor[:, None]
    return out


def field_at(segments: Sequence[WireSegment], points) -> np.ndarray:
    """Magnetic field (tesla) of all segments at ``points`` (shape (3,) or (..., 3))."""
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 3)
    starts, ends, currents = [], [], []
    for seg in segments:
        s, e, c = seg.filaments()
        starts.append(s)
        ends.append(e)
        currents.append(np.full(len(s), c))
    b = _segment_field(np.concatenate(starts), np.concatenate(ends), np.concatenate(currents), flat)
    return b.reshape(pts.shape)


# --------------------------------------------------------------------------
# Circuit geometries


@dataclass(frozen=True)
class FluxQubitLoop:
    """Square loop in the x = 0 plane centred on the origin; ``side`` is the centre-line length."""

    side: float = 3e-6
    width: float = 0.1e-6
    height: float = 0.2e-6
    current: float = 1.4e-6
    n_width: int = 4
    n_height: int = 4

    def segments(self, current: float | None = None) -> list[WireSegment]:
        cur = self.current if current is None else current
        n = self.n_width * self.n_height
        uw = ((np.arange(self.n_width) + 0.5) / self.n_width - 0.5) * self.width
        uh = ((np.arange(self.n_height) + 0.5) / self.n_height - 0.5) * self.height
        segs = []
        for u in uw:
            half = self.side / 2 + u
            corners = [(-half, -half), (half, -half), (half, half), (-half, half)]
            for v in uh:
                for k in range(4):
                    (y0, z0), (y1, z1) = corners[k], corners[(k + 1) % 4]
                    segs.append(WireSegment((v, y0, z0), (v, y1, z1), cur / n))
        return segs


@dataclass(frozen=True)
class ResonatorWire:
    """Straight wire along x centred on the origin, width along y, height along z."""

    length: float = 1.5e-3
    width: float = 2e-6
    height: float = 50e-9
    inductance: float = 1.5e-9
    omega: float = 2 * np.pi * 3e9
    n_width: int = 64
    n_height: int = 2

    @property
    def zero_point_current(self) -> float:
        return float(np.sqrt(HBAR * self.omega / (2 * self.inductance)))

    def segments(self, current: float | None = None) -> list[WireSegment]:
        cur = self.zero_point_current if current is None else current
        half = self.length / 2
        return [WireSegment((-half, 0.0, 0.0), (half, 0.0, 0.0), cur, self.width, self.height,
                            self.n_width, self.n_height, width_dir=(0.0, 1.0, 0.0))]


def zero_point_current(inductance: float, omega: float) -> float:
    return float(np.sqrt(HBAR * omega / (2 * inductance)))


def fq_coupling(points, loop: FluxQubitLoop | None = None, current: float | None = None) -> np.ndarray:
    """lambda = g_e mu_B |B| / (sqrt(2) hbar) in rad/s."""
    loop = loop or FluxQubitLoop()
    b = field_at(loop.segments(current), points)
    return G_E * MU_B * np.linalg.norm(b, axis=-1) / (np.sqrt(2) * HBAR)


def mr_coupling(points, wire: ResonatorWire | None = None, inductance: float | None = None,
                omega: float | None = None) -> np.ndarray:
    """lambda = g_e mu_B |B(I_0)| / (2 hbar) in rad/s with I_0 = sqrt(hbar omega / 2L)."""
    wire = wire or ResonatorWire()
    i0 = zero_point_current(inductance or wire.inductance, omega or wire.omega)
    b = field_at(wire.segments(i0), points)
    return G_E * MU_B * np.linalg.norm(b, axis=-1) / (2 * HBAR)


# --------------------------------------------------------------------------
# Samples


@dataclass(frozen=True)
class SampleBox:
    origin: tuple  # minimum corner
    extents: tuple
    density: float  # spins per m^3

    def __post_init__(self):
        if len(self.origin) != 3 or len(self.extents) != 3:
            raise ValueError("origin and extents must be 3-vectors")
        if min(self.extents) <= 0 or self.density <= 0:
            raise ValueError("extents and density must be positive")

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def expected_count(self) -> float:
        return self.volume * self.density

    @classmethod
    def centered(cls, center, extents, density) -> "SampleBox":
        c, e = np.asarray(center, float), np.asarray(extents, float)
        return cls(tuple(c - e / 2), tuple(e), density)


def fq_sample_box() -> SampleBox:
    """1.58 x 1.58 x 0.2 um^3 diamond centred in the loop plane, NV density 1e15 cm^-3."""
    return SampleBox.centered((0.0, 0.0, 0.0), (0.2e-6, 1.58e-6, 1.58e-6), 1e21)


def mr_sample_box(wire: ResonatorWire | None = None, gap: float = 100e-9) -> SampleBox:
    """1 mm x 2 um x 50 nm silicon placed ``gap`` above the wire's top surface, donor density 1.2e14 cm^-3."""
    wire = wire or ResonatorWire()
    z0 = wire.height / 2 + gap
    return SampleBox((-0.5e-3, -1e-6, z0), (1e-3, 2e-6, 50e-9), 1.2e20)


def sample_spins(box: SampleBox, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
    """Uniform positions in the box; Poisson count with mean density*volume unless ``count`` is fixed."""
    n = int(rng.poisson(box.expected_count)) if count is None else int(count)
    u = rng.random((n, 3))
    return np.asarray(box.origin) + u * np.asarray(box.extents)


@dataclass(frozen=True)
class CouplingStats:
    lambda_bar: float
    delta_lambda: float
    counts: np.ndarray
    edges: np.ndarray
    n: int


def coupling_stats(positions: np.ndarray, coupling_fn: Callable, bins: int = 40) -> CouplingStats:
    pos = np.asarray(positions, float)
    if len(pos) < 2:
        raise ValueError("need at least two positions")
    lam = np.asarray(coupling_fn(pos), float)
    counts, edges = np.histogram(lam, bins=bins)
    return CouplingStats(float(lam.mean()), float(lam.std()), counts, edges, len(lam))


def coupling_map(coupling_fn: Callable, ys: np.ndarray, zs: np.ndarray, x: float = 0.0) -> np.ndarray:
    """lambda on the (y, z) grid at fixed x; rows indexed by y."""
    yy, zz = np.meshgrid(ys, zs, indexing="ij")
    pts = np.stack([np.full_like(yy, x), yy, zz], axis=-1)
    return np.asarray(coupling_fn(pts), float)


def coupling_map_csv(ys, zs, lam: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("y_m,z_m,lambda_hz\n")
    for i, y in enumerate(ys):
        for j, z in enumerate(zs):
            buf.write(f"{y:.12g},{z:.12g},{lam[i, j] / (2 * np.pi):.12g}\n")
    return buf.getvalue()


def positions_csv(positions: np.ndarray, couplings: np.ndarray | None = None) -> str:
    buf = io.StringIO()
    buf.write("x_m,y_m,z_m" + (",lambda_hz" if couplings is not None else "") + "\n")
    for k, p in enumerate(positions):
        row = [f"{v:.12g}" for v in p]
        if couplings is not None:
            row.append(f"{couplings[k] / (2 * np.pi):.12g}")
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
