"""VR-masked MRT, CZF and LZF precoders and the transmit-power budget."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

SCHEMES = ("MRT", "CZF", "LZF")
COND_LIMIT = 1e8


class PrecodingError(ValueError):
    """Configuration problems such as empty visibility regions."""


class SingularChannelError(PrecodingError):
    """A zero-forcing Gram matrix is (numerically) singular."""


@dataclass(frozen=True)
class VrAssignment:
    """Active subarrays per user as boolean masks of shape (K, S)."""

    near: np.ndarray
    far: np.ndarray

    def __post_init__(self):
        near = np.asarray(self.near, dtype=bool)
        far = np.asarray(self.far, dtype=bool)
        if near.ndim != 2 or far.ndim != 2 or (near.size and far.size and near.shape[1] != far.shape[1]):
            raise PrecodingError("masks must be (K, S) arrays with a common S")
        object.__setattr__(self, "near", near)
        object.__setattr__(self, "far", far)

    @classmethod
    def full(cls, K_n: int, K_f: int, S: int) -> "VrAssignment":
        return cls(np.ones((K_n, S), bool), np.ones((K_f, S), bool))

    @classmethod
    def from_sets(cls, near_sets, far_sets, S: int) -> "VrAssignment":
        near = np.zeros((len(near_sets), S), bool)
        far = np.zeros((len(far_sets), S), bool)
        for k, sets in enumerate(near_sets):
            near[k, list(sets)] = True
        for k, sets in enumerate(far_sets):
            far[k, list(sets)] = True
        return cls(near, far)

    @property
    def S(self) -> int:
        return self.near.shape[1] if self.near.size else self.far.shape[1]

    def near_sets(self) -> list[tuple[int, ...]]:
        return [tuple(np.flatnonzero(row)) for row in self.near]

    def far_sets(self) -> list[tuple[int, ...]]:
        return [tuple(np.flatnonzero(row)) for row in self.far]

    def all_masks(self) -> np.ndarray:
        """Masks of all users, near-field first."""
        return np.vstack([self.near.reshape(-1, self.S), self.far.reshape(-1, self.S)])

    def element_mask(self, M_star: int, group: str) -> np.ndarray:
        """Per-antenna masks (K, M), i.e. the diagonals of the D matrices."""
        masks = self.near if group == "near" else self.far
        return np.repeat(masks, M_star, axis=1)

    def check(self) -> None:
        if not self.near.any(axis=1).all():
            raise PrecodingError("every near-field user needs a nonempty VR")
        if not self.far.any(axis=1).all():
            raise PrecodingError("every far-field user needs a nonempty VR")

    def replace_user(self, u: int, mask: np.ndarray) -> "VrAssignment":
        near, far = self.near.copy(), self.far.copy()
        K_n = near.shape[0]
        if u < K_n:
            near[u] = mask
        else:
            far[u - K_n] = mask
        return VrAssignment(near, far)


@dataclass(frozen=True)
class PrecoderSet:
    """Full-length precoders w_k = [D_1k w_1k; ...; D_Sk w_Sk].

    ``far`` may carry a leading batch axis (one precoder set per NLoS draw).
    """

    scheme: str
    near: np.ndarray  # (K_n, M)
    far: np.ndarray  # (K_f, M) or (B, K_f, M)
    M_star: int

    def block(self, group: str, k: int, s: int) -> np.ndarray:
        W = self.near if group == "near" else self.far
        return W[..., k, s * self.M_star : (s + 1) * self.M_star]


@dataclass
class PowerAllocation:
    """Power coefficients η per (user, subarray); zero outside the VR."""

    scheme: str
    near: np.ndarray  # (K_n, S)
    far: np.ndarray  # (K_f, S)

    def __post_init__(self):
        self.near = np.asarray(self.near, dtype=float)
        self.far = np.asarray(self.far, dtype=float)
        if np.any(self.near < 0) or np.any(self.far < 0):
            raise PrecodingError("power coefficients must be nonnegative")

    @property
    def common_near(self) -> np.ndarray:
        """Per-user common coefficient (CZF); the largest entry over the VR."""
        return self.near.max(axis=1, initial=0.0)

    @property
    def common_far(self) -> np.ndarray:
        return self.far.max(axis=1, initial=0.0)


def _mask_rows(W: np.ndarray, masks: np.ndarray, M_star: int) -> np.ndarray:
    return W * np.repeat(masks, M_star, axis=1)


def mrt_precoders(g_near: np.ndarray, g_far: np.ndarray, vr: VrAssignment, M_star: int) -> PrecoderSet:
    """MRT: each active block is a copy of the user's channel block.

    ``g_near`` holds vectors ḡ_k as rows; ``g_far`` holds cascaded rows g̃_k^H,
    optionally batched over NLoS draws.
    """
    vr.check()
    return PrecoderSet(
        "MRT", _mask_rows(g_near, vr.near, M_star), _mask_rows(np.conj(g_far), vr.far, M_star), M_star
    )


def zf_columns(H: np.ndarray, label: str = "channel") -> np.ndarray:
    """W = H (H^H H)^{-1} for H of shape (..., M, K), computed through an SVD."""
    if H.shape[-1] == 0:
        return H.copy()
    U, sv, Vh = np.linalg.svd(H, full_matrices=False)
    cond = sv[..., 0] / np.maximum(sv[..., -1], np.finfo(float).tiny)
    if np.any(cond > COND_LIMIT) or np.any(sv[..., -1] == 0):
        with np.errstate(over="ignore"):
            worst = float(np.square(np.max(cond)))  # Gram condition is the square
        raise SingularChannelError(f"{label} Gram matrix is singular (condition estimate {worst:.3e})")
    return (U / sv[..., None, :]) @ Vh


def czf_precoders(g_near: np.ndarray, g_far: np.ndarray, vr: VrAssignment, M_star: int) -> PrecoderSet:
    """Central ZF over the whole array, then VR masking per user."""
    vr.check()
    W_near = zf_columns(g_near.T, "near-field H1").T if g_near.shape[0] else g_near.copy()
    Gf = np.swapaxes(np.conj(g_far), -1, -2)  # (..., M, K_f) columns g̃_k
    W_far = np.swapaxes(zf_columns(Gf, "cascaded G"), -1, -2) if g_far.shape[-2] else np.conj(g_far)
    return PrecoderSet("CZF", _mask_rows(W_near, vr.near, M_star), _mask_rows(W_far, vr.far, M_star), M_star)


def _lzf_group(rows: np.ndarray, masks: np.ndarray, M_star: int, label: str) -> np.ndarray:
    """Per-subarray ZF among the users active on each subarray; rows are channel vectors."""
    W = np.zeros_like(rows)
    S = masks.shape[1]
    for s in range(S):
        users = np.flatnonzero(masks[:, s])
        if users.size == 0:
            continue
        if users.size > M_star:
            raise PrecodingError(f"subarray {s} serves {users.size} users with only {M_star} antennas")
        sl = slice(s * M_star, (s + 1) * M_star)
        block = np.swapaxes(rows[..., users, sl], -1, -2)  # (..., M*, |U_s|)
        try:
            Ws = zf_columns(block, f"{label} subarray {s}")
        except SingularChannelError as err:
            raise SingularChannelError(f"{err} [subarray {s}]") from None
        W[..., users, sl] = np.swapaxes(Ws, -1, -2)
    return W


def lzf_precoders(g_near: np.ndarray, g_far: np.ndarray, vr: VrAssignment, M_star: int) -> PrecoderSet:
    """Local ZF: each subarray inverts only the K_s x K_s Gram of its active users."""
    vr.check()
    W_near = _lzf_group(g_near, vr.near, M_star, "near-field")
    W_far = _lzf_group(np.conj(g_far), vr.far, M_star, "cascaded")
    return PrecoderSet("LZF", W_near, W_far, M_star)


BUILDERS = {"MRT": mrt_precoders, "CZF": czf_precoders, "LZF": lzf_precoders}


def build_precoders(scheme: str, g_near, g_far, vr: VrAssignment, M_star: int) -> PrecoderSet:
    if scheme not in BUILDERS:
        raise PrecodingError(f"unknown precoder {scheme!r}")
    return BUILDERS[scheme](g_near, g_far, vr, M_star)


def subarray_power(W: np.ndarray, S: int) -> np.ndarray:
    """‖D_sk w_sk‖² for rows of W, shape (..., K, S)."""
    shape = W.shape[:-1] + (S, W.shape[-1] // S)
    return np.sum(np.abs(W.reshape(shape)) ** 2, axis=-1)


@dataclass(frozen=True)
class PowerConstants:
    """c̄_sk (exact) and c̃_sk (expectation) with the standard error of c̃."""

    near: np.ndarray  # (K_n, S)
    far: np.ndarray  # (K_f, S)
    far_se: Optional[np.ndarray] = None


def power_constants(precoders: PrecoderSet, S: int) -> PowerConstants:
    """c̄ from the deterministic precoders and c̃ as a sample mean over the batch axis."""
    c_near = subarray_power(precoders.near, S)
    far = subarray_power(precoders.far, S)
    if far.ndim == 3:
        n = far.shape[0]
        se = far.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(far.shape[1:], np.inf)
        return PowerConstants(c_near, far.mean(axis=0), se)
    return PowerConstants(c_near, far, np.zeros_like(far))


def power_used(alloc: PowerAllocation, constants: PowerConstants, P_n: float, P_f: float) -> float:
    """Left-hand side of the transmit power constraint."""
    return float(P_n * np.sum(alloc.near * constants.near) + P_f * np.sum(alloc.far * constants.far))


def check_power(alloc: PowerAllocation, constants: PowerConstants, P: float, P_n: float, P_f: float,
                rtol: float = 1e-9) -> tuple[bool, float]:
    """Return (feasible, margin) with margin = P - LHS."""
    margin = P - power_used(alloc, constants, P_n, P_f)
    return margin >= -rtol * P, margin


def equal_power(scheme: str, constants: PowerConstants, vr: VrAssignment, P: float, P_n: float, P_f: float,
                scale: float = 1.0) -> PowerAllocation:
    """Every user gets P/K; within a user, η is equal on all active subarrays."""
    K = vr.near.shape[0] + vr.far.shape[0]
    out = []
    for masks, c, Pg in ((vr.near, constants.near, P_n), (vr.far, constants.far, P_f)):
        tot = np.sum(c * masks, axis=1)
        if np.any(tot <= 0):
            raise PrecodingError("a user has zero precoder power on its VR")
        eta = scale * P / (K * Pg * tot)
        out.append(masks * eta[:, None])
    return PowerAllocation(scheme, out[0], out[1])
