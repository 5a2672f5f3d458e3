"""Robot model and system state.

A model is a kinematic tree: one free-flyer root joint attaching the root
link to the world, plus single-DoF revolute/prismatic joints.  Link frames
coincide with their inboard joint frames; at the zero configuration all
link frames are parallel to the world frame.  Units are SI, angles in
radians.

Model files are JSON documents with top-level keys ``links``, ``joints``,
``frames``, ``gravity`` (plus an optional ``name``).  Unknown keys are
rejected anywhere in the document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .spatial import quat_normalize

REVOLUTE = 0
PRISMATIC = 1

_JOINT_TYPES = {"revolute": REVOLUTE, "prismatic": PRISMATIC}


class ModelError(ValueError):
    """Raised for structurally invalid robot models or model files."""


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray          # CoM offset in the link frame, m
    inertia: np.ndarray      # 3x3 rotational inertia about the CoM, link frame


@dataclass(frozen=True)
class Joint:
    name: str
    joint_type: str          # "revolute" | "prismatic" | "free-flyer"
    parent: str
    child: str
    axis: np.ndarray | None = None
    origin: np.ndarray | None = None      # joint frame position in parent frame
    position_limits: tuple[float, float] = (-1e9, 1e9)
    torque_limit: float = 1e9


@dataclass(frozen=True)
class Frame:
    name: str
    link: str
    offset: np.ndarray


class RobotModel:
    """Immutable kinematic tree with precomputed structure arrays.

    Bodies are indexed in topological order (parent before child), body 0
    being the root link carried by the free-flyer.  Velocity coordinates
    are ordered (v_base, w_base, joint rates) with joints in declaration
    order, so nv = n + 6.
    """

    def __init__(self, links: list[Link], joints: list[Joint], frames: list[Frame],
                 gravity: np.ndarray, name: str = "robot"):
        self.name = name
        self.gravity = np.asarray(gravity, dtype=float).reshape(3)
        self._validate_and_build(links, joints, frames)

    # -- construction -----------------------------------------------------

    def _validate_and_build(self, links, joints, frames):
        link_names = [l.name for l in links]
        if len(set(link_names)) != len(link_names):
            raise ModelError("duplicate link names")
        if "world" in link_names:
            raise ModelError("'world' is reserved and cannot be a link name")
        for l in links:
            if not (l.mass > 0.0):
                raise ModelError(f"link '{l.name}': mass must be > 0")
            I = np.asarray(l.inertia, dtype=float)
            if I.shape != (3, 3):
                raise ModelError(f"link '{l.name}': inertia must be 3x3")
            if not np.allclose(I, I.T, atol=1e-9):
                raise ModelError(f"link '{l.name}': rotational inertia is not symmetric")
            if np.any(np.linalg.eigvalsh(0.5 * (I + I.T)) <= 0.0):
                raise ModelError(f"link '{l.name}': rotational inertia is not positive definite")

        roots = [j for j in joints if j.joint_type == "free-flyer"]
        if len(roots) != 1:
            raise ModelError(f"model must have exactly one free-flyer joint, found {len(roots)}")
        root = roots[0]
        if root.parent != "world":
            raise ModelError("free-flyer parent must be 'world'")

        one_dof = [j for j in joints if j.joint_type != "free-flyer"]
        for j in one_dof:
            if j.joint_type not in _JOINT_TYPES:
                raise ModelError(f"joint '{j.name}': unknown type '{j.joint_type}'")
            if j.axis is None or j.origin is None:
                raise ModelError(f"joint '{j.name}': axis and origin are required")
            n = float(np.linalg.norm(j.axis))
            if abs(n - 1.0) > 1e-6:
                raise ModelError(f"joint '{j.name}': axis must be a unit vector")
            lo, hi = j.position_limits
            if not (lo <= hi):
                raise ModelError(f"joint '{j.name}': position limits reversed")
            if not (j.torque_limit > 0.0):
                raise ModelError(f"joint '{j.name}': torque limit must be > 0")

        # tree structure: every link has exactly one inboard joint
        child_of = {}
        for j in joints:
            if j.child in child_of:
                raise ModelError(f"link '{j.child}' has two inboard joints (loop)")
            child_of[j.child] = j
        by_name = {l.name: l for l in links}
        for l in links:
            if l.name not in child_of:
                raise ModelError(f"link '{l.name}' is not connected by any joint")
        for j in joints:
            if j.child not in by_name:
                raise ModelError(f"joint '{j.name}': unknown child link '{j.child}'")
            if j.joint_type != "free-flyer" and j.parent not in by_name:
                raise ModelError(f"joint '{j.name}': unknown parent link '{j.parent}'")

        # declaration order of 1-DoF joints defines the joint coordinates
        joint_order = [j for j in joints if j.joint_type != "free-flyer"]

        self.links = list(links)
        self.joints = list(joints)
        self.frames = list(frames)
        self.root_joint = root

        self.n = len(joint_order)
        self.nv = self.n + 6
        self.nb = len(links)

        # topological order: parent before child
        body_index = {}
        order = [root.child]
        seen = {root.child}
        pending = list(joint_order)
        while pending:
            progressed = False
            rest = []
            for j in pending:
                if j.parent in seen:
                    order.append(j.child)
                    seen.add(j.child)
                    progressed = True
                else:
                    rest.append(j)
            if not progressed:
                raise ModelError("model is not a connected tree")
            pending = rest
        for i, nm in enumerate(order):
            body_index[nm] = i

        self.body_names = order
        self.body_parent = np.full(self.nb, -1, dtype=int)
        self.body_joint = np.full(self.nb, -1, dtype=int)        # joint coordinate index
        self.joint_type = np.zeros(self.n, dtype=int)
        self.joint_axis = np.zeros((self.n, 3))
        self.joint_origin = np.zeros((self.n, 3))
        self.joint_names = [j.name for j in joint_order]
        self.joint_child_body = np.zeros(self.n, dtype=int)
        self.position_lower = np.array([j.position_limits[0] for j in joint_order])
        self.position_upper = np.array([j.position_limits[1] for j in joint_order])
        self.torque_limit = np.array([j.torque_limit for j in joint_order])

        for k, j in enumerate(joint_order):
            b = body_index[j.child]
            self.body_parent[b] = body_index[j.parent]
            self.body_joint[b] = k
            self.joint_type[k] = _JOINT_TYPES[j.joint_type]
            self.joint_axis[k] = np.asarray(j.axis, dtype=float)
            self.joint_origin[k] = np.asarray(j.origin, dtype=float)
            self.joint_child_body[k] = b

        self.body_mass = np.array([by_name[nm].mass for nm in order])
        self.body_com = np.array([np.asarray(by_name[nm].com, dtype=float) for nm in order])
        self.body_inertia = np.array([np.asarray(by_name[nm].inertia, dtype=float) for nm in order])
        self.total_mass = float(np.sum(self.body_mass))

        self.frame_index: dict[str, tuple[int, np.ndarray]] = {}
        for f in frames:
            if f.link not in body_index:
                raise ModelError(f"frame '{f.name}': unknown link '{f.link}'")
            if f.name in self.frame_index:
                raise ModelError(f"duplicate frame name '{f.name}'")
            self.frame_index[f.name] = (body_index[f.link], np.asarray(f.offset, dtype=float))

        # precomputed structure used by the dynamics hot paths
        self.ancestor_rows: list[list[int]] = []      # per body: velocity rows of strict ancestors (joints only)
        for b in range(self.nb):
            rows = []
            a = self.body_parent[b]
            while a > 0:
                rows.append(6 + int(self.body_joint[a]))
                a = self.body_parent[a]
            self.ancestor_rows.append(rows)
        ax = self.joint_axis
        self.axis_skew = np.zeros((self.n, 3, 3))
        if self.n:
            self.axis_skew[:, 0, 1] = -ax[:, 2]
            self.axis_skew[:, 0, 2] = ax[:, 1]
            self.axis_skew[:, 1, 0] = ax[:, 2]
            self.axis_skew[:, 1, 2] = -ax[:, 0]
            self.axis_skew[:, 2, 0] = -ax[:, 1]
            self.axis_skew[:, 2, 1] = ax[:, 0]
        self.axis_outer = np.einsum("ki,kj->kij", ax, ax) if self.n else np.zeros((0, 3, 3))
        self.is_revolute = self.joint_type == REVOLUTE

    # -- queries -----------------------------------------------------------

    def frame(self, name: str) -> tuple[int, np.ndarray]:
        try:
            return self.frame_index[name]
        except KeyError:
            raise ModelError(f"unknown frame '{name}'") from None

    def frame_names(self) -> list[str]:
        return list(self.frame_index)

    def to_dict(self) -> dict:
        """Round-trippable document (same schema as model files)."""
        return {
            "name": self.name,
            "gravity": self.gravity.tolist(),
            "links": [
                {"name": l.name, "mass": l.mass, "com": np.asarray(l.com, dtype=float).tolist(),
                 "inertia": np.asarray(l.inertia, dtype=float).tolist()}
                for l in self.links
            ],
            "joints": [
                (
                    {"name": j.name, "type": "free-flyer", "parent": j.parent, "child": j.child}
                    if j.joint_type == "free-flyer"
                    else {
                        "name": j.name, "type": j.joint_type, "parent": j.parent, "child": j.child,
                        "axis": np.asarray(j.axis, dtype=float).tolist(),
                        "origin": np.asarray(j.origin, dtype=float).tolist(),
                        "position_limits": list(j.position_limits),
                        "torque_limit": j.torque_limit,
                    }
                )
                for j in self.joints
            ],
            "frames": [
                {"name": f.name, "link": f.link, "offset": np.asarray(f.offset, dtype=float).tolist()}
                for f in self.frames
            ],
        }


# ---------------------------------------------------------------------------
# JSON parsing
# ---------------------------------------------------------------------------

def _require_keys(d: dict, allowed: set[str], required: set[str], where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ModelError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ModelError(f"{where}: missing key(s) {sorted(missing)}")


def model_from_dict(doc: dict) -> RobotModel:
    _require_keys(doc, {"name", "gravity", "links", "joints", "frames"},
                  {"gravity", "links", "joints", "frames"}, "model")
    links = []
    for i, d in enumerate(doc["links"]):
        where = f"links[{i}]" + (f" ('{d.get('name')}')" if isinstance(d, dict) and "name" in d else "")
        _require_keys(d, {"name", "mass", "com", "inertia"}, {"name", "mass", "com", "inertia"}, where)
        links.append(Link(d["name"], float(d["mass"]),
                          np.asarray(d["com"], dtype=float).reshape(3),
                          np.asarray(d["inertia"], dtype=float)))
    joints = []
    for i, d in enumerate(doc["joints"]):
        where = f"joints[{i}]" + (f" ('{d.get('name')}')" if isinstance(d, dict) and "name" in d else "")
        if d.get("type") == "free-flyer":
            _require_keys(d, {"name", "type", "parent", "child"}, {"name", "type", "parent", "child"}, where)
            joints.append(Joint(d["name"], "free-flyer", d["parent"], d["child"]))
        else:
            _require_keys(
                d,
                {"name", "type", "parent", "child", "axis", "origin", "position_limits", "torque_limit"},
                {"name", "type", "parent", "child", "axis", "origin"},
                where,
            )
            lim = d.get("position_limits", [-1e9, 1e9])
            joints.append(Joint(
                d["name"], d["type"], d["parent"], d["child"],
                axis=np.asarray(d["axis"], dtype=float).reshape(3),
                origin=np.asarray(d["origin"], dtype=float).reshape(3),
                position_limits=(float(lim[0]), float(lim[1])),
                torque_limit=float(d.get("torque_limit", 1e9)),
            ))
    frames = []
    for i, d in enumerate(doc["frames"]):
        where = f"frames[{i}]" + (f" ('{d.get('name')}')" if isinstance(d, dict) and "name" in d else "")
        _require_keys(d, {"name", "link", "offset"}, {"name", "link", "offset"}, where)
        frames.append(Frame(d["name"], d["link"], np.asarray(d["offset"], dtype=float).reshape(3)))
    return RobotModel(links, joints, frames,
                      np.asarray(doc["gravity"], dtype=float).reshape(3),
                      name=doc.get("name", "robot"))


def load_model(path: str) -> RobotModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    try:
        return model_from_dict(doc)
    except ModelError as e:
        raise ModelError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# system state
# ---------------------------------------------------------------------------

@dataclass
class SystemState:
    """Base pose on SE(3) plus joint positions, and generalized velocity.

    ``nu`` is (v_base, w_base, joint rates), world-frame linear and angular
    base velocity.
    """

    quat: np.ndarray                 # (4,) w, x, y, z; body -> world
    pos: np.ndarray                  # (3,) base origin, world
    q: np.ndarray                    # (n,)
    nu: np.ndarray                   # (n + 6,)

    def __post_init__(self):
        self.quat = np.asarray(self.quat, dtype=float).reshape(4)
        self.pos = np.asarray(self.pos, dtype=float).reshape(3)
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        self.nu = np.asarray(self.nu, dtype=float).reshape(-1)
        if abs(np.linalg.norm(self.quat) - 1.0) > 1e-9:
            raise ValueError("base quaternion is not normalized")
        if self.nu.shape[0] != self.q.shape[0] + 6:
            raise ValueError("nu must have length len(q) + 6")

    @classmethod
    def neutral(cls, model: RobotModel) -> "SystemState":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3),
                   np.zeros(model.n), np.zeros(model.nv))

    def copy(self) -> "SystemState":
        return SystemState(self.quat.copy(), self.pos.copy(), self.q.copy(), self.nu.copy())

    def renormalized(self) -> "SystemState":
        return SystemState(quat_normalize(self.quat), self.pos, self.q, self.nu)
