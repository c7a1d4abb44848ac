"""Union ensembles over calibrated detector profiles.

A record is OOD for the ensemble as soon as any member flags it. Two named
configurations ship: ens1 joins all six detectors over both the center-loss
and the cross-entropy model, ens2 is the curated trio of the confidence
detector on the center-loss model plus knn and odin on the cross-entropy one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detectors import DETECTOR_KINDS
from .errors import ConfigurationError

ANY_OOD = "any-ood"


@dataclass
class EnsembleConfig:
    name: str
    members: list  # of (detector kind, regime tag)
    policy: str = ANY_OOD

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("ensemble needs at least one member")
        if self.policy != ANY_OOD:
            raise ConfigurationError(f"unsupported ensemble policy {self.policy!r}")
        members = [tuple(m) for m in self.members]
        if len(set(members)) != len(members):
            raise ConfigurationError("duplicate ensemble member")
        self.members = members

    @property
    def member_keys(self) -> list:
        return [f"{kind}@{tag}" for kind, tag in self.members]


def build_ensemble(name: str, members, profiles: dict) -> EnsembleConfig:
    """Generic constructor; every member must reference a calibrated profile.

    ``profiles`` maps "kind@regime_tag" to a DetectorProfile.
    """
    config = EnsembleConfig(name=name, members=list(members))
    for key in config.member_keys:
        if key not in profiles:
            raise ConfigurationError(f"ensemble {name!r} references missing profile {key}")
        if profiles[key].threshold is None:
            raise ConfigurationError(f"profile {key} is not calibrated")
    return config


def build_ens1(profiles: dict, cl_tag: str, ce_tag: str) -> EnsembleConfig:
    """All detectors over both trainings: 6 kinds x {cl, ce} = 12 members."""
    members = [(kind, tag) for tag in (cl_tag, ce_tag) for kind in DETECTOR_KINDS]
    return build_ensemble("ens1", members, profiles)


def build_ens2(profiles: dict, cl_tag: str, ce_tag: str) -> EnsembleConfig:
    """The curated trio: conf on the CL model, knn and odin on the CE model."""
    members = [("conf", cl_tag), ("knn", ce_tag), ("odin", ce_tag)]
    return build_ensemble("ens2", members, profiles)


def ensemble_flag(member_flags) -> bool:
    """OOD as soon as any member says OOD."""
    return bool(np.any(np.asarray(member_flags, dtype=bool)))


def ensemble_flags(flag_matrix: np.ndarray) -> np.ndarray:
    """Row-wise union over a (records x members) flag matrix."""
    flag_matrix = np.asarray(flag_matrix, dtype=bool)
    return flag_matrix.any(axis=1)
