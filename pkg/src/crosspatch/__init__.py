"""crosspatch: black-box shape search for dual-band detector evasion patches.

Patch shapes are closed centripetal Catmull-Rom contours over movable anchor
points; differential evolution moves the anchors inside per-anchor feasible
regions while a score-aware fitness balances the visible and infrared
detector responses.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .compose import CoverModel, ScenePair
from .config import RunConfig
from .fitness import FitnessValue, attack_success
from .geometry import BinaryMask, ClosedContour
from .optimizer import AttackResult, ShapeGenome, run_attack
from .oracle import Detection, ExternalOracle, SyntheticCoverageOracle

__version__ = "0.1.0"

__all__ = [
    "AttackResult",
    "BinaryMask",
    "ClosedContour",
    "CoverModel",
    "Detection",
    "ExternalOracle",
    "FitnessValue",
    "KERNEL_BACKEND",
    "RunConfig",
    "ScenePair",
    "ShapeGenome",
    "SyntheticCoverageOracle",
    "attack_success",
    "run_attack",
    "__version__",
]
