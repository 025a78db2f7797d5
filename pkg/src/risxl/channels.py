"""Geometry and channel synthesis for the XL-MIMO / RIS downlink."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .config import SystemConfig


class ChannelError(ValueError):
    """Raised for invalid geometry or indices."""


@dataclass(frozen=True)
class Scatterer:
    position: np.ndarray  # (3,) m
    beta: complex  # reflection coefficient including scatterer-to-user gain


@dataclass(frozen=True)
class UserGeometry:
    nfue_positions: np.ndarray  # (K_n, 3) m
    ffue_angles: np.ndarray  # (K_f, 2) azimuth, elevation in rad
    ris_aoa: tuple[float, float]
    xl_aod: tuple[float, float]
    d_MR: float
    d_RU: float
    scatterers: tuple[tuple[Scatterer, ...], ...] = ()

    def __post_init__(self):
        pos = np.asarray(self.nfue_positions, dtype=float).reshape(-1, 3)
        if np.any(pos[:, 2] <= 0):
            raise ChannelError("near-field users need u_z > 0")
        ang = np.asarray(self.ffue_angles, dtype=float).reshape(-1, 2)
        if np.any(np.abs(ang) > math.pi) or any(abs(a) > math.pi for a in (*self.ris_aoa, *self.xl_aod)):
            raise ChannelError("angle magnitudes must not exceed pi")
        object.__setattr__(self, "nfue_positions", pos)
        object.__setattr__(self, "ffue_angles", ang)
        if not self.scatterers:
            object.__setattr__(self, "scatterers", tuple(() for _ in range(pos.shape[0])))


def draw_geometry(cfg: SystemConfig, rng: np.random.Generator) -> UserGeometry:
    """Near-field users uniform in the configured box; far-field users on the semicircle."""
    lo = np.array([cfg.nf_x[0], cfg.nf_y[0], cfg.nf_z[0]])
    hi = np.array([cfg.nf_x[1], cfg.nf_y[1], cfg.nf_z[1]])
    pos = lo + (hi - lo) * rng.random((cfg.K_n, 3))
    scatterers = []
    for _ in range(cfg.K_n):
        user = []
        for _ in range(cfg.scatterers_per_user):
            p = lo + (hi - lo) * rng.random(3)
            phase = rng.uniform(-math.pi, math.pi)
            user.append(Scatterer(p, cfg.scatterer_gain * complex(np.exp(1j * phase))))
        scatterers.append(tuple(user))
    return UserGeometry(
        nfue_positions=pos,
        ffue_angles=np.array(cfg.ffue_angles(), dtype=float).reshape(-1, 2),
        ris_aoa=tuple(cfg.ris_aoa),
        xl_aod=tuple(cfg.xl_aod),
        d_MR=cfg.d_MR,
        d_RU=cfg.d_RU,
        scatterers=tuple(scatterers),
    )


# ---------------------------------------------------------------------------
# near field


def antenna_coords(m, M_x: int, M_y: int):
    """Centered grid coordinates of 1-based antenna index ``m`` (row-major, x fastest).

    Odd counts give integer coordinates; even counts give half-integers.
    """
    m_arr = np.asarray(m)
    if np.any(m_arr < 1) or np.any(m_arr > M_x * M_y):
        raise ChannelError(f"antenna index outside 1..{M_x * M_y}")
    m_x = -0.5 * (M_x - 1) + np.mod(m_arr - 1, M_x)
    m_y = 0.5 * (M_y - 1) - np.floor_divide(m_arr - 1, M_x)
    if m_arr.ndim == 0:
        return float(m_x), float(m_y)
    return m_x.astype(float), m_y.astype(float)


def path_gain(point, m_x, m_y, wavelength: float, d: float):
    """Power gain of the element(s) at grid coordinates (m_x, m_y) seen from ``point``."""
    ux, uy, uz = (float(v) for v in point)
    if uz <= 0:
        raise ChannelError("point must have positive z")
    dx = ux - np.asarray(m_x) * d
    dy = uy - np.asarray(m_y) * d
    r2 = dx**2 + dy**2 + uz**2
    area = wavelength**2 / (4 * math.pi)
    return area / (4 * math.pi) * uz * (dx**2 + uz**2) / r2**2.5


def _distance(point, m_x, m_y, d: float):
    ux, uy, uz = (float(v) for v in point)
    return np.sqrt((ux - np.asarray(m_x) * d) ** 2 + (uy - np.asarray(m_y) * d) ** 2 + uz**2)


def nf_element_channel(
    u, m_x, m_y, wavelength: float, d: Optional[float] = None, scatterers: Sequence[Scatterer] = ()
):
    """Near-field channel coefficient(s) between user position ``u`` and element(s) (m_x, m_y)."""
    d = wavelength / 2 if d is None else d
    k0 = 2 * math.pi / wavelength
    g = np.sqrt(path_gain(u, m_x, m_y, wavelength, d)) * np.exp(-1j * k0 * _distance(u, m_x, m_y, d))
    for sc in scatterers:
        eta_l = path_gain(sc.position, m_x, m_y, wavelength, d)
        g = g + sc.beta * np.sqrt(eta_l) * np.exp(-1j * k0 * _distance(sc.position, m_x, m_y, d))
    return g


def nf_channel_vector(u, cfg: SystemConfig, scatterers: Sequence[Scatterer] = ()) -> np.ndarray:
    """Channel vector over all M elements ordered by antenna index (subarray blocks contiguous)."""
    m_x, m_y = antenna_coords(np.arange(1, cfg.M + 1), cfg.M_x, cfg.M_y)
    return np.asarray(nf_element_channel(u, m_x, m_y, cfg.wavelength, cfg.d, scatterers), dtype=complex)


# ---------------------------------------------------------------------------
# far field


def _upa_response(az: float, el: float, n_x: int, n_y: int, spacing_over_lambda: float) -> np.ndarray:
    kx = 2 * math.pi * spacing_over_lambda * math.cos(el) * math.sin(az)
    ky = 2 * math.pi * spacing_over_lambda * math.sin(el)
    return np.kron(np.exp(1j * kx * np.arange(n_x)), np.exp(1j * ky * np.arange(n_y)))


def array_response_tx(phi_a: float, phi_e: float, M_x: int, M_y: int) -> np.ndarray:
    """Steering vector a_M of the XL-MIMO array (half-wavelength spacing)."""
    return _upa_response(phi_a, phi_e, M_x, M_y, 0.5)


def array_response_ris(varphi_a: float, varphi_e: float, N_1: int, N_2: int) -> np.ndarray:
    """Steering vector b_N of the RIS (half-wavelength spacing)."""
    return _upa_response(varphi_a, varphi_e, N_1, N_2, 0.5)


def ris_user_channel(cfg: SystemConfig, angles) -> np.ndarray:
    """Vector h_k (so the channel row is h_k^H) for a far-field user at ``angles``."""
    az, el = angles
    return math.sqrt(cfg.varsigma) * array_response_ris(az, el, cfg.N_1, cfg.N_2)


def los_matrix(cfg: SystemConfig, geometry: UserGeometry) -> np.ndarray:
    b = array_response_ris(*geometry.ris_aoa, cfg.N_1, cfg.N_2)
    a = array_response_tx(*geometry.xl_aod, cfg.M_x, cfg.M_y)
    return np.outer(b, a.conj())


# ---------------------------------------------------------------------------
# channel sets


@dataclass(frozen=True)
class ChannelSet:
    """Deterministic channel state of one trial plus the RIS phases.

    ``g_near[k]`` is the vector ḡ_k, ``h[k]`` the vector h_k; the NLoS part of
    the XL-MIMO-to-RIS link is drawn separately (see :class:`NlosSampler`).
    """

    cfg: SystemConfig
    geometry: UserGeometry
    g_near: np.ndarray  # (K_n, M)
    H2_los: np.ndarray  # (N, M)
    h: np.ndarray  # (K_f, N)
    theta: np.ndarray  # (N,)
    alpha2: float
    beta2: float
    H2_nlos: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def H1_bar(self) -> np.ndarray:
        """K_n x M matrix with rows ḡ_k^H."""
        return self.g_near.conj()

    @property
    def S(self) -> int:
        return self.cfg.S

    @property
    def M_star(self) -> int:
        return self.cfg.M_star

    def with_phases(self, theta) -> "ChannelSet":
        theta = np.mod(np.asarray(theta, dtype=float), 2 * math.pi)
        if theta.shape != (self.cfg.N,):
            raise ChannelError(f"expected {self.cfg.N} phases")
        return replace(self, theta=theta)

    def with_nlos(self, H2_nlos: Optional[np.ndarray]) -> "ChannelSet":
        return replace(self, H2_nlos=H2_nlos)

    def ff_vectors(self) -> np.ndarray:
        """Rows x_k = Θ^H h_k, so that g̃_k^H = x_k^H H₂."""
        return np.exp(-1j * self.theta)[None, :] * self.h

    def H2(self, nlos: Optional[np.ndarray] = None) -> np.ndarray:
        nlos = self.H2_nlos if nlos is None else nlos
        if nlos is None:
            raise ChannelError("no NLoS realization attached")
        return self.alpha2 * self.H2_los + self.beta2 * nlos

    def cascaded(self, nlos: Optional[np.ndarray] = None) -> np.ndarray:
        """Rows g̃_k^H for one realization, or stacked over a leading batch axis."""
        nlos = self.H2_nlos if nlos is None else nlos
        x = self.ff_vectors()
        H2 = self.alpha2 * self.H2_los + self.beta2 * nlos
        return np.einsum("kn,...nm->...km", x.conj(), H2)


def build_channels(
    cfg: SystemConfig, geometry: UserGeometry, theta=None, rng: Optional[np.random.Generator] = None
) -> ChannelSet:
    """Assemble the deterministic channels of a trial.

    If ``theta`` is None, phases are drawn uniformly (requires ``rng``).
    """
    if theta is None:
        if rng is None:
            raise ChannelError("either theta or rng is required")
        theta = random_phases(rng, cfg.N)
    g_near = np.array(
        [nf_channel_vector(u, cfg, sc) for u, sc in zip(geometry.nfue_positions, geometry.scatterers)],
        dtype=complex,
    ).reshape(cfg.K_n, cfg.M)
    h = np.array([ris_user_channel(cfg, ang) for ang in geometry.ffue_angles], dtype=complex).reshape(
        cfg.K_f, cfg.N
    )
    return ChannelSet(
        cfg=cfg,
        geometry=geometry,
        g_near=g_near,
        H2_los=los_matrix(cfg, geometry),
        h=h,
        theta=np.mod(np.asarray(theta, dtype=float), 2 * math.pi),
        alpha2=cfg.alpha2,
        beta2=cfg.beta2,
    )


def random_phases(rng: np.random.Generator, N: int) -> np.ndarray:
    """I.i.d. phases uniform on [0, 2π)."""
    return rng.uniform(0.0, 2 * math.pi, N)


def cascaded_channel(theta, H2: np.ndarray, h_k: np.ndarray, s: Optional[int] = None, M_star: Optional[int] = None):
    """Row g̃_k^H = h_k^H Θ H₂, optionally restricted to the columns of subarray ``s``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] != H2.shape[0] or h_k.shape[0] != H2.shape[0]:
        raise ChannelError("phase, RIS-channel and H2 sizes disagree")
    row = (h_k.conj() * np.exp(1j * theta)) @ H2
    if s is None:
        return row
    if M_star is None or not 0 <= s < H2.shape[1] // M_star:
        raise ChannelError(f"invalid subarray index {s}")
    return row[s * M_star : (s + 1) * M_star]


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def sample_h2(channels: ChannelSet, rng: np.random.Generator):
    """Fresh NLoS draw; returns (H̄₂, H̃₂, H₂)."""
    cfg = channels.cfg
    nlos = complex_normal(rng, (cfg.N, cfg.M))
    return channels.H2_los, nlos, channels.alpha2 * channels.H2_los + channels.beta2 * nlos


class NlosSampler:
    """Reproducible stream of NLoS matrices, regenerated chunk by chunk.

    Iterating twice yields identical draws, which lets several estimators
    share common random numbers without holding every draw in memory.
    """

    def __init__(self, seed, n: int, N: int, M: int, chunk: int = 500):
        if n < 1:
            raise ChannelError("at least one draw is required")
        self.seed = seed
        self.n, self.N, self.M = n, N, M
        self.chunk = max(1, min(chunk, max(1, 4_000_000 // max(1, N * M))))

    def __iter__(self) -> Iterator[np.ndarray]:
        rng = np.random.default_rng(self.seed)
        left = self.n
        while left > 0:
            b = min(self.chunk, left)
            yield complex_normal(rng, (b, self.N, self.M))
            left -= b
