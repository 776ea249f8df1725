"""Scenario configuration: YAML schema, validation, round-trip serialization.

Configs are nested key-value files. Validation errors name the offending
field by path (e.g. ``disturbances[1].mass``) so batch runs fail loudly and
early. ``load`` and ``dump`` round-trip exactly.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .model import ManipulatorModel, load_robot_model
from .rotations import rotation_about_axis
from .sim import (AddedMassSegment, DisturbanceProfile, IntegratorConfig,
                  PoseClampSegment, WrenchSegment)
from .wrench_qp import FrictionParams


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the field path."""


def _get(d: dict, key: str, path: str, required=True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"missing field '{path}.{key}'" if path else f"missing field '{key}'")
        return default
    return d[key]


def _vec(value, length: int, path: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (length,):
        raise ConfigError(f"field '{path}' must be a {length}-vector, got shape {arr.shape}")
    return arr


def _positive(value, path: str) -> float:
    v = float(value)
    if v <= 0.0:
        raise ConfigError(f"field '{path}' must be positive, got {v}")
    return v


@dataclass(frozen=True)
class RobotSpec:
    model_path: str
    base_position: np.ndarray
    base_rpy: np.ndarray
    q_init: np.ndarray

    def load(self, base_dir: Path) -> ManipulatorModel:
        path = Path(self.model_path)
        if not path.is_absolute():
            path = base_dir / path
        model = load_robot_model(path)
        rot = (
            rotation_about_axis([0, 0, 1], self.base_rpy[2])
            @ rotation_about_axis([0, 1, 0], self.base_rpy[1])
            @ rotation_about_axis([1, 0, 0], self.base_rpy[0])
        )
        model = model.at_base(self.base_position, rot)
        if self.q_init.shape != (model.dof,):
            raise ConfigError(
                f"q_init has {self.q_init.shape[0]} entries but the robot has {model.dof} joints"
            )
        return model


@dataclass(frozen=True)
class TaskSpec:
    kind: str                    # "circle" | "hold"
    radius: float = 0.0
    speed: float = 0.0
    plane: str = "xy"
    ramp_time: float = 0.0
    center: np.ndarray | None = None


@dataclass(frozen=True)
class GainSpec:
    stiffness_linear: float = 300.0
    stiffness_angular: float = 30.0
    damping_linear: float | None = None     # None: critically damped from Lambda_c(0)
    damping_angular: float | None = None
    damping_ratio: float = 1.0
    posture_damping: float = 4.0            # task-neutral damping of redundant motion


@dataclass(frozen=True)
class ObjectSpec:
    dims: np.ndarray
    mass: float
    grasp_offsets: tuple
    com_offset: np.ndarray


@dataclass(frozen=True)
class QPSpec:
    edges: int = 8
    regularization: float = 1e-8
    margin_scale: float = 0.9
    preload: float = 0.0
    max_iterations: int = 200


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    constraint_type: str                    # "surface_contact" | "grasp_map"
    robots: tuple
    task: TaskSpec
    gains: GainSpec
    friction: FrictionParams | None
    payload: ObjectSpec | None
    qp: QPSpec
    estimator_quasi_static: bool
    disturbances: DisturbanceProfile
    integrator: IntegratorConfig
    duration: float
    transient_skip: float
    seed: int
    raw: dict = field(repr=False, default_factory=dict)


def _parse_disturbance(d: dict, path: str):
    kind = _get(d, "type", path)
    t_start = float(_get(d, "t_start", path))
    t_end = float(_get(d, "t_end", path))
    if t_end <= t_start:
        raise ConfigError(f"field '{path}.t_end' must exceed t_start")
    if kind == "wrench":
        return WrenchSegment(
            t_start=t_start,
            t_end=t_end,
            force=_vec(_get(d, "force", path, required=False, default=[0, 0, 0]), 3,
                       f"{path}.force"),
            moment=_vec(_get(d, "moment", path, required=False, default=[0, 0, 0]), 3,
                        f"{path}.moment"),
            ramp=float(d.get("ramp", 0.0)),
        )
    if kind == "added_mass":
        mass = _positive(_get(d, "mass", path), f"{path}.mass")
        return AddedMassSegment(
            t_start=t_start, t_end=t_end, mass=mass,
            offset=_vec(d.get("offset", [0, 0, 0]), 3, f"{path}.offset"),
        )
    if kind == "pose_clamp":
        return PoseClampSegment(
            t_start=t_start, t_end=t_end,
            offset=_vec(d.get("offset", [0, 0, 0]), 3, f"{path}.offset"),
            stiffness=_positive(d.get("stiffness", 1e4), f"{path}.stiffness"),
            damping=float(d.get("damping", 0.0)),
            ramp=float(d.get("ramp", 0.0)),
        )
    raise ConfigError(f"field '{path}.type': unknown disturbance type '{kind}'")


def parse_scenario(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario config must be a mapping")
    name = str(_get(data, "name", ""))
    constraint = _get(data, "constraint", "")
    ctype = _get(constraint, "type", "constraint")
    if ctype not in ("surface_contact", "grasp_map"):
        raise ConfigError(f"field 'constraint.type': unknown constraint type '{ctype}'")

    robots_raw = _get(data, "robots", "")
    if not isinstance(robots_raw, list) or not robots_raw:
        raise ConfigError("field 'robots' must be a non-empty list")
    if ctype == "surface_contact" and len(robots_raw) != 1:
        raise ConfigError("field 'robots': surface_contact scenarios use exactly one robot")
    if ctype == "grasp_map" and len(robots_raw) < 2:
        raise ConfigError("field 'robots': grasp_map scenarios need at least two robots")
    robots = []
    for i, r in enumerate(robots_raw):
        p = f"robots[{i}]"
        robots.append(RobotSpec(
            model_path=str(_get(r, "model", p)),
            base_position=_vec(r.get("base_position", [0, 0, 0]), 3, f"{p}.base_position"),
            base_rpy=_vec(r.get("base_rpy", [0, 0, 0]), 3, f"{p}.base_rpy"),
            q_init=np.asarray(_get(r, "q_init", p), dtype=float),
        ))

    task_raw = _get(data, "task", "")
    kind = _get(task_raw, "type", "task")
    if kind not in ("circle", "hold"):
        raise ConfigError(f"field 'task.type': unknown task type '{kind}'")
    task = TaskSpec(
        kind=kind,
        radius=_positive(task_raw.get("radius", 0.1), "task.radius") if kind == "circle" else 0.0,
        speed=float(task_raw.get("speed", np.pi / 2)) if kind == "circle" else 0.0,
        plane=str(task_raw.get("plane", "xy" if ctype == "surface_contact" else "yz")),
        ramp_time=float(task_raw.get("ramp_time", 0.0)),
        center=None if task_raw.get("center") is None
        else _vec(task_raw["center"], 3, "task.center"),
    )
    if task.kind == "circle" and task.plane not in ("xy", "yz"):
        raise ConfigError(f"field 'task.plane': unknown plane '{task.plane}'")

    gains_raw = data.get("gains", {})
    dl = gains_raw.get("damping_linear")
    da = gains_raw.get("damping_angular")
    gains = GainSpec(
        stiffness_linear=_positive(gains_raw.get("stiffness_linear", 300.0),
                                   "gains.stiffness_linear"),
        stiffness_angular=_positive(gains_raw.get("stiffness_angular", 30.0),
                                    "gains.stiffness_angular"),
        damping_linear=None if dl is None else float(dl),
        damping_angular=None if da is None else float(da),
        damping_ratio=_positive(gains_raw.get("damping_ratio", 1.0), "gains.damping_ratio"),
        posture_damping=float(gains_raw.get("posture_damping", 4.0)),
    )

    friction_raw = data.get("friction")
    if friction_raw is None:
        raise ConfigError("missing field 'friction'")
    friction = FrictionParams(
        mu=_positive(_get(friction_raw, "mu", "friction"), "friction.mu"),
        gamma=_positive(_get(friction_raw, "torsional", "friction"), "friction.torsional"),
        delta_x=_positive(_get(friction_raw, "patch_half_x", "friction"),
                          "friction.patch_half_x"),
        delta_y=_positive(_get(friction_raw, "patch_half_y", "friction"),
                          "friction.patch_half_y"),
    )

    payload = None
    if ctype == "grasp_map":
        obj_raw = _get(data, "object", "")
        offsets_raw = _get(obj_raw, "grasp_offsets", "object")
        if not isinstance(offsets_raw, list) or len(offsets_raw) != len(robots):
            raise ConfigError("field 'object.grasp_offsets' needs one offset per robot")
        payload = ObjectSpec(
            dims=_vec(_get(obj_raw, "dims", "object"), 3, "object.dims"),
            mass=float(_get(obj_raw, "mass", "object")),
            grasp_offsets=tuple(
                _vec(o, 3, f"object.grasp_offsets[{i}]") for i, o in enumerate(offsets_raw)
            ),
            com_offset=_vec(obj_raw.get("com_offset", [0, 0, 0]), 3, "object.com_offset"),
        )
        if payload.mass < 0.0:
            raise ConfigError("field 'object.mass' must be non-negative")

    qp_raw = data.get("wrench_qp", {})
    qp = QPSpec(
        edges=int(qp_raw.get("edges", 8)),
        regularization=_positive(qp_raw.get("regularization", 1e-8),
                                 "wrench_qp.regularization"),
        margin_scale=_positive(qp_raw.get("margin_scale", 0.9), "wrench_qp.margin_scale"),
        preload=float(qp_raw.get("preload", 0.0)),
        max_iterations=int(qp_raw.get("max_iterations", 200)),
    )
    if qp.edges < 3:
        raise ConfigError("field 'wrench_qp.edges' must be at least 3")
    if qp.margin_scale > 1.0:
        raise ConfigError("field 'wrench_qp.margin_scale' must not exceed 1")
    if qp.preload < 0.0:
        raise ConfigError("field 'wrench_qp.preload' must be non-negative")

    est_raw = data.get("estimator", {})
    est_mode = str(est_raw.get("mode", "quasi_static"))
    if est_mode not in ("quasi_static", "with_acceleration"):
        raise ConfigError(f"field 'estimator.mode': unknown mode '{est_mode}'")

    disturbances = DisturbanceProfile(tuple(
        _parse_disturbance(d, f"disturbances[{i}]")
        for i, d in enumerate(data.get("disturbances", []) or [])
    ))

    integ_raw = data.get("integrator", {})
    integrator = IntegratorConfig(
        dt=_positive(integ_raw.get("dt", 1e-3), "integrator.dt"),
        method=str(integ_raw.get("method", "semi_implicit")),
        baumgarte_gain=None if integ_raw.get("baumgarte_gain") is None
        else float(integ_raw["baumgarte_gain"]),
        drift_tolerance=_positive(integ_raw.get("drift_tolerance", 1e-6),
                                  "integrator.drift_tolerance"),
    )

    return ScenarioConfig(
        name=name,
        constraint_type=ctype,
        robots=tuple(robots),
        task=task,
        gains=gains,
        friction=friction,
        payload=payload,
        qp=qp,
        estimator_quasi_static=(est_mode == "quasi_static"),
        disturbances=disturbances,
        integrator=integrator,
        duration=_positive(data.get("duration", 10.0), "duration"),
        transient_skip=float(data.get("transient_skip", 1.0)),
        seed=int(data.get("seed", 0)),
        raw=copy.deepcopy(data),
    )


def load_scenario(path) -> tuple[ScenarioConfig, Path]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    cfg = parse_scenario(data)
    return cfg, path.parent


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Serialize back to YAML; parse(dump(cfg)) equals cfg's raw form."""
    return yaml.safe_dump(cfg.raw, sort_keys=True)
