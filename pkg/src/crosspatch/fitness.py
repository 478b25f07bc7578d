"""Attack-progress measures and the score-aware joint fitness.

`progress` normalizes how far a confidence score has fallen from its clean
value toward the detection threshold: 0 means untouched, 1 means the
threshold is reached, above 1 means the target is already lost.

The joint fitness exponentiates the worse of the two modality progresses,
so improving only the stronger modality buys nothing; the plain sum is kept
around as the unbalanced baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

JOINT = "joint"
SUM = "sum"
FITNESS_MODES = (JOINT, SUM)


@dataclass(frozen=True)
class FitnessValue:
    joint: float
    dis_vis: float
    dis_inf: float
    f_vis_adv: float
    f_inf_adv: float


def progress(f_clean: float, f_adv: float, threshold: float) -> float:
    if f_clean <= threshold:
        raise ValueError(
            f"clean score {f_clean} must exceed the threshold {threshold}; "
            "sample is not attackable"
        )
    return (f_clean - f_adv) / (f_clean - threshold)


def joint_fitness(dis_vis: float, dis_inf: float, lam: float) -> float:
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return math.exp(lam * min(dis_vis, dis_inf))


def sum_fitness(dis_vis: float, dis_inf: float) -> float:
    return dis_vis + dis_inf


def attack_success(f_vis_adv: float, f_inf_adv: float, threshold: float) -> bool:
    return max(f_vis_adv, f_inf_adv) < threshold


def make_fitness(f_clean_vis, f_adv_vis, f_clean_inf, f_adv_inf, threshold, lam) -> FitnessValue:
    dv = progress(f_clean_vis, f_adv_vis, threshold)
    di = progress(f_clean_inf, f_adv_inf, threshold)
    return FitnessValue(joint_fitness(dv, di, lam), dv, di, f_adv_vis, f_adv_inf)


def selection_key(value: FitnessValue, mode: str) -> float:
    """The scalar DE selects on: the joint fitness or the plain sum."""
    if mode == JOINT:
        return value.joint
    if mode == SUM:
        return sum_fitness(value.dis_vis, value.dis_inf)
    raise ValueError(f"unknown fitness mode {mode!r}")
