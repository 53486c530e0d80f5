"""Experiment inputs: the cart-pendulum plant, bundled presets and scenario files.

Scenario files are JSON documents with top-level keys ``plant``, ``ch_user``,
``ch_eve`` and the optional ``lambda`` and ``sim``.  Matrices are row-major
lists of lists.  The plant block either lists the matrices ``A``, ``L``,
``Q``, ``R``, ``Sigma0`` directly (``Q``, ``R`` and ``Sigma0`` default to
identity matrices) or carries a ``pendulum`` block of physical parameters,
in which case ``L``, ``Q``, ``R`` and ``Sigma0`` override the pendulum
defaults.
"""
import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .channel import FsmcModel
from .errors import DegenerateGeometry, ParseError, ValidationError
from .riccati import LinearPlant
from .sim import SimConfig

PRESETS = ("pendulum_demo",)


@dataclass(frozen=True)
class PendulumParams:
    cart_mass: float = 0.5
    pole_mass: float = 0.2
    inertia: float = 0.006
    pivot_to_com: float = 0.3
    cart_friction: float = 0.1
    gravity: float = 9.81
    sample_time: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not np.isfinite(value):
                raise ValidationError(f.name, f"must be a finite number, got {value!r}")
        for name in ("cart_mass", "pole_mass", "inertia", "pivot_to_com", "sample_time"):
            if getattr(self, name) <= 0:
                raise ValidationError(name, "must be positive")
        if self.gravity < 0:
            raise ValidationError("gravity", "must be nonnegative")
        if self.cart_friction < 0:
            raise ValidationError("cart_friction", "must be nonnegative")
        if self.sample_time > 1:
            raise ValidationError("sample_time", "must lie in (0, 1]")


def pendulum_continuous(params):
    """Continuous-time (A_c, B_c) of the cart-pendulum linearized about upright.

    State order: cart position, cart velocity, pole angle, pole angular velocity.
    """
    M, m, I, l = params.cart_mass, params.pole_mass, params.inertia, params.pivot_to_com
    b, g = params.cart_friction, params.gravity
    den = I * (M + m) + M * m * l ** 2
    if den <= 0:
        raise DegenerateGeometry("inertia", f"I(M+m) + M m l^2 = {den} is not positive")
    Ac = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -(I + m * l ** 2) * b / den, m ** 2 * g * l ** 2 / den, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, -m * l * b / den, m * g * l * (M + m) / den, 0.0],
    ])
    Bc = np.array([[0.0], [(I + m * l ** 2) / den], [0.0], [m * l / den]])
    return Ac, Bc


def pendulum_plant(params=None, L=None, Q=None, R=None, Sigma0=None):
    """Zero-order-hold discretization of the linearized cart-pendulum.

    Defaults: cart position and pole angle measured, Q = R = 1e-4 I, Sigma0 = I.
    """
    params = params or PendulumParams()
    Ac, _ = pendulum_continuous(params)
    A = expm(Ac * params.sample_time)
    if L is None:
        L = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
    L = np.asarray(L, dtype=float)
    ny = L.shape[0] if L.ndim == 2 else 0
    return LinearPlant(
        A=A,
        L=L,
        Q=1e-4 * np.eye(4) if Q is None else Q,
        R=1e-4 * np.eye(ny) if R is None else R,
        Sigma0=np.eye(4) if Sigma0 is None else Sigma0,
    )


@dataclass(frozen=True, eq=False)
class Scenario:
    plant: LinearPlant
    ch_user: FsmcModel
    ch_eve: FsmcModel
    lam: Optional[float] = None
    sim: Optional[SimConfig] = None

    def to_dict(self):
        out = {
            "plant": self.plant.to_dict(),
            "ch_user": self.ch_user.to_dict(),
            "ch_eve": self.ch_eve.to_dict(),
        }
        if self.lam is not None:
            out["lambda"] = self.lam
        if self.sim is not None:
            out["sim"] = self.sim.to_dict()
        return out

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def _wrap(prefix, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValidationError as exc:
        raise exc.prefixed(prefix) from None
    except KeyError as exc:
        raise ValidationError(prefix, f"missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(prefix, str(exc)) from None


def _require_mapping(value, path):
    if not isinstance(value, dict):
        raise ValidationError(path, f"expected an object, got {type(value).__name__}")
    return value


def _check_keys(block, allowed, path):
    for key in block:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}" if path else key, "unknown key")


def _plant_from_dict(block):
    _require_mapping(block, "plant")
    if "pendulum" in block:
        _check_keys(block, {"pendulum", "L", "Q", "R", "Sigma0"}, "plant")
        pblock = _require_mapping(block["pendulum"], "plant.pendulum")
        _check_keys(pblock, {f.name for f in fields(PendulumParams)}, "plant.pendulum")
        params = _wrap("plant.pendulum", PendulumParams, **pblock)
        return _wrap("plant", pendulum_plant, params, block.get("L"), block.get("Q"), block.get("R"), block.get("Sigma0"))
    _check_keys(block, {"A", "L", "Q", "R", "Sigma0"}, "plant")
    for key in ("A", "L"):
        if key not in block:
            raise ValidationError(f"plant.{key}", "required")
    A = np.asarray(block["A"], dtype=float) if _is_matrix(block["A"]) else None
    nx = A.shape[0] if A is not None and A.ndim == 2 else 0
    L = np.asarray(block["L"], dtype=float) if _is_matrix(block["L"]) else None
    ny = L.shape[0] if L is not None and L.ndim == 2 else 0
    data = {
        "A": block["A"],
        "L": block["L"],
        "Q": block.get("Q", np.eye(nx)),
        "R": block.get("R", np.eye(ny)),
        "Sigma0": block.get("Sigma0", np.eye(nx)),
    }
    return _wrap("plant", LinearPlant.from_dict, data)


def _is_matrix(value):
    try:
        np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        return False
    return True


def _channel_from_dict(block, path):
    _require_mapping(block, path)
    _check_keys(block, {"num_modes", "tpm", "reception", "initial_dist"}, path)
    for key in ("num_modes", "tpm", "reception"):
        if key not in block:
            raise ValidationError(f"{path}.{key}", "required")
    return _wrap(path, FsmcModel.from_dict, block)


def scenario_from_dict(data):
    """Build a validated Scenario; errors carry the offending key path."""
    _require_mapping(data, "")
    _check_keys(data, {"plant", "ch_user", "ch_eve", "lambda", "sim"}, "")
    for key in ("plant", "ch_user", "ch_eve"):
        if key not in data:
            raise ValidationError(key, "required")
    plant = _plant_from_dict(data["plant"])
    ch_user = _channel_from_dict(data["ch_user"], "ch_user")
    ch_eve = _channel_from_dict(data["ch_eve"], "ch_eve")
    lam = data.get("lambda")
    if lam is not None:
        if not isinstance(lam, (int, float)) or isinstance(lam, bool) or not 0.0 <= lam <= 1.0:
            raise ValidationError("lambda", f"must be a probability, got {lam!r}")
        lam = float(lam)
    sim = None
    if data.get("sim") is not None:
        sblock = _require_mapping(data["sim"], "sim")
        _check_keys(sblock, {"horizon", "num_trials", "base_seed", "lambda", "record_trajectories"}, "sim")
        sblock = dict(sblock)
        if "lambda" not in sblock and lam is not None:
            sblock["lambda"] = lam
        sim = _wrap("sim", SimConfig.from_dict, sblock)
    return Scenario(plant, ch_user, ch_eve, lam, sim)


def preset_path(name):
    return resources.files("fsmc_secrecy") / "presets" / f"{name}.json"


def _read_json(path):
    try:
        if isinstance(path, str) and path in PRESETS:
            text = preset_path(path).read_text()
        else:
            text = Path(path).read_text()
    except OSError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_scenario_dict(path):
    """Raw parsed document of a scenario file or bundled preset name."""
    return _read_json(path)


def load_scenario(path):
    """Load and validate a scenario file, or a bundled preset by name."""
    return scenario_from_dict(_read_json(path))


def save_scenario(scenario, path):
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")
