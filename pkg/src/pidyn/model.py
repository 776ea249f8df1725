"""Serial-chain manipulator description.

A model is plain immutable data: one revolute joint per link, each joint
given by a unit axis in the parent frame and a fixed translation from the
parent joint origin, plus the link's inertial parameters (mass, centre of
mass and rotational inertia about it, both in the link frame). Units are
meters, kilograms, kg m^2 and radians throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .rotations import rotation_about_axis, skew

GRAVITY_DEFAULT = (0.0, 0.0, -9.81)


class ModelError(ValueError):
    """Raised when a manipulator description is inconsistent."""


def _readonly(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Link:
    """One revolute joint plus the rigid body it drives."""

    axis: np.ndarray
    offset: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "axis", _readonly(self.axis, (3,)))
        object.__setattr__(self, "offset", _readonly(self.offset, (3,)))
        object.__setattr__(self, "com", _readonly(self.com, (3,)))
        object.__setattr__(self, "inertia", _readonly(self.inertia, (3, 3)))
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-12:
            raise ModelError(f"joint axis {self.axis} is not unit norm")
        if self.mass <= 0.0:
            raise ModelError(f"link mass must be positive, got {self.mass}")
        if np.max(np.abs(self.inertia - self.inertia.T)) > 1e-12:
            raise ModelError("rotational inertia must be symmetric")
        if np.linalg.eigvalsh(self.inertia)[0] <= 0.0:
            raise ModelError("rotational inertia must be positive definite")


@dataclass(frozen=True)
class ManipulatorModel:
    links: tuple
    ee_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity: np.ndarray = field(default_factory=lambda: np.array(GRAVITY_DEFAULT))
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    name: str = "arm"

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "ee_offset", _readonly(self.ee_offset, (3,)))
        object.__setattr__(self, "gravity", _readonly(self.gravity, (3,)))
        object.__setattr__(self, "base_position", _readonly(self.base_position, (3,)))
        object.__setattr__(self, "base_rotation", _readonly(self.base_rotation, (3, 3)))
        if not self.links:
            raise ModelError("model needs at least one link")
        r = self.base_rotation
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-10:
            raise ModelError("base rotation is not orthonormal")

    @property
    def dof(self) -> int:
        return len(self.links)

    def with_gravity(self, gravity) -> "ManipulatorModel":
        return ManipulatorModel(
            self.links, self.ee_offset, gravity, self.base_position, self.base_rotation, self.name
        )

    def at_base(self, position, rotation) -> "ManipulatorModel":
        return ManipulatorModel(
            self.links, self.ee_offset, self.gravity, position, rotation, self.name
        )

    def with_point_mass(self, mass: float, position, link_index: int = -1,
                        inertia=None) -> "ManipulatorModel":
        """Rigidly attach an extra body to a link; ``position`` is in that link's frame.

        Used by the simulator to lump a grasped payload into the terminal
        links. The combined inertia follows the parallel-axis theorem;
        ``inertia`` is the attached body's own rotational inertia about its
        COM in the link frame (zero for a point mass).
        """
        if mass < 0.0:
            raise ModelError("point mass must be non-negative")
        if mass == 0.0:
            return self
        idx = range(self.dof)[link_index]
        link = self.links[idx]
        p = np.asarray(position, dtype=float)
        own = np.zeros((3, 3)) if inertia is None else np.asarray(inertia, dtype=float)
        m_total = link.mass + mass
        com = (link.mass * link.com + mass * p) / m_total
        d0 = link.com - com
        d1 = p - com
        inertia = (
            link.inertia
            + own
            + link.mass * (skew(d0) @ skew(d0).T)
            + mass * (skew(d1) @ skew(d1).T)
        )
        links = list(self.links)
        links[idx] = Link(link.axis, link.offset, m_total, com, inertia)
        return ManipulatorModel(
            tuple(links), self.ee_offset, self.gravity, self.base_position, self.base_rotation,
            self.name,
        )


def _link_from_dict(d: dict, where: str) -> Link:
    for key in ("axis", "offset", "mass", "com"):
        if key not in d:
            raise ModelError(f"{where}: missing field '{key}'")
    if "inertia" in d:
        inertia = np.asarray(d["inertia"], dtype=float)
    elif "inertia_diag" in d:
        inertia = np.diag(np.asarray(d["inertia_diag"], dtype=float))
    else:
        raise ModelError(f"{where}: missing field 'inertia' or 'inertia_diag'")
    return Link(d["axis"], d["offset"], float(d["mass"]), d["com"], inertia)


def model_from_dict(d: dict, name: str = "arm") -> ManipulatorModel:
    """Build a model from a nested key-value description (the robot file schema)."""
    if "links" not in d or not d["links"]:
        raise ModelError("robot description: missing or empty 'links'")
    links = tuple(
        _link_from_dict(entry, f"links[{i}]") for i, entry in enumerate(d["links"])
    )
    kwargs = {}
    if "ee_offset" in d:
        kwargs["ee_offset"] = np.asarray(d["ee_offset"], dtype=float)
    if "gravity" in d:
        kwargs["gravity"] = np.asarray(d["gravity"], dtype=float)
    return ManipulatorModel(links, name=str(d.get("name", name)), **kwargs)


def load_robot_model(path) -> ManipulatorModel:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ModelError(f"{path}: robot file must be a mapping")
    return model_from_dict(data, name=str(data.get("name", "arm")))
