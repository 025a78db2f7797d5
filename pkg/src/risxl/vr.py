"""Greedy visibility-region selection and the VR-efficiency metric."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .analytics import ExpectationCache, MrtStatistics, SinrModel, zf_model
from .channels import ChannelSet
from .precoding import PrecodingError, VrAssignment


class VrSelectionError(ValueError):
    """The full-array baseline leaves some user with zero SINR."""


@dataclass
class VrSelection:
    """Outcome of one selection run.

    ``baseline`` holds full-array SINRs, ``thresholds`` the targets
    δ·baseline and ``final`` the SINRs of each user's selected VR evaluated
    in the same frozen context (other users on their full arrays).
    """

    kind: str
    vr: VrAssignment
    delta: float
    baseline: np.ndarray
    thresholds: np.ndarray
    final: np.ndarray
    evaluations: np.ndarray  # candidate SINR evaluations per user
    fallback: list = field(default_factory=list)  # users that kept their best single subarray


def model_factory(channels: ChannelSet, kind: str, cache: Optional[ExpectationCache] = None
                  ) -> Callable[[VrAssignment], SinrModel]:
    """VR -> SinrModel for MRT (closed form) or CZF (statistical, mask-independent cache)."""
    if kind == "MRT":
        stats = MrtStatistics.compute(channels)
        return stats.model
    if kind == "CZF":
        if cache is None or cache.kind != "CZF":
            raise VrSelectionError("CZF selection needs a CZF expectation cache")
        return lambda vr: zf_model(channels, cache, vr)
    raise VrSelectionError(f"VR selection runs on MRT or CZF, not {kind!r}")


def candidate_sinr(factory, full: VrAssignment, u: int, mask: np.ndarray, P: float) -> float:
    """SINR of user ``u`` on ``mask`` with all other users on their full arrays.

    Power is split equally between users and renormalized to the candidate
    mask; an empty mask yields zero.
    """
    if not mask.any():
        return 0.0
    model = factory(full.replace_user(u, mask))
    return float(model.sinr(model.equal_amplitudes(P))[u])


def select_vrs(
    channels: ChannelSet,
    kind: str,
    delta: float,
    cache: Optional[ExpectationCache] = None,
    start: Optional[VrAssignment] = None,
    thresholds: Optional[np.ndarray] = None,
) -> VrSelection:
    """Prune subarrays user by user in ascending order while SINR ≥ δ·baseline.

    Each user's candidate removals are cumulative and evaluated once per
    subarray, so exactly S SINR evaluations are made per user. ``kind`` is
    ``MRT`` or ``CZF``; LZF reuses the CZF result. ``start`` and
    ``thresholds`` allow re-running from a previous selection.
    """
    if not 0 < delta <= 1:
        raise VrSelectionError("delta must lie in (0, 1]")
    if kind == "LZF":
        kind = "CZF"
    cfg = channels.cfg
    P, S = cfg.P, cfg.S
    factory = model_factory(channels, kind, cache)
    full = VrAssignment.full(cfg.K_n, cfg.K_f, S)
    base_model = factory(full)
    with np.errstate(divide="ignore", invalid="ignore"):  # dead channels are diagnosed below
        baseline = base_model.sinr(base_model.equal_amplitudes(P))
    if np.any(~(baseline > 0)):
        bad = np.flatnonzero(~(baseline > 0)).tolist()
        raise VrSelectionError(f"users {bad} have zero full-array SINR; VR selection is undefined")
    if thresholds is None:
        thresholds = delta * baseline
    masks = (start or full).all_masks().copy()
    K = masks.shape[0]
    evaluations = np.zeros(K, int)
    final = np.zeros(K)
    fallback = []
    for u in range(K):
        current = masks[u].copy()
        for s in range(S):
            evaluations[u] += 1
            if not current[s]:
                continue
            trial = current.copy()
            trial[s] = False
            if candidate_sinr(factory, full, u, trial, P) >= thresholds[u]:
                current = trial
        if not current.any():
            solo = [candidate_sinr(factory, full, u, np.eye(S, dtype=bool)[s], P) for s in range(S)]
            current = np.eye(S, dtype=bool)[int(np.argmax(solo))]
            fallback.append(u)
        masks[u] = current
        final[u] = candidate_sinr(factory, full, u, current, P)
    vr = VrAssignment(masks[: cfg.K_n], masks[cfg.K_n :])
    return VrSelection(kind, vr, delta, baseline, np.asarray(thresholds, float), final, evaluations, fallback)


def vr_efficiency(*assignments: VrAssignment) -> float:
    """Average fraction of active subarrays over all users of all assignments."""
    masks = [a.all_masks() for a in assignments]
    if not masks or sum(m.size for m in masks) == 0:
        raise PrecodingError("no users to average over")
    return float(sum(m.sum() for m in masks) / sum(m.size for m in masks))


def dump_vr_csv(selection: VrSelection, path) -> None:
    """One row per user: group, index, selected subarrays (1-based), SINRs."""
    n_near = selection.vr.near.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "group", "user", "subarrays", "baseline_sinr", "threshold", "final_sinr"])
        for u, mask in enumerate(selection.vr.all_masks()):
            group, k = ("near", u) if u < n_near else ("far", u - n_near)
            subs = " ".join(str(s + 1) for s in np.flatnonzero(mask))
            w.writerow([selection.kind, group, k, subs, repr(float(selection.baseline[u])),
                        repr(float(selection.thresholds[u])), repr(float(selection.final[u]))])
