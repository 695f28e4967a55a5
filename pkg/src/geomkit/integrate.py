"""Fixed-step ODE and SDE integrators that produce :class:`Trajectory` values.

All schemes only use ``+``, ``*`` and the user field, so they run unchanged on
jet-valued states; a loss on the endpoint is then differentiable with respect
to whatever the initial state was seeded with.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, NumericalError

__all__ = [
    "Trajectory",
    "IntegrationError",
    "integrate_ode",
    "integrate_sde_ito",
    "integrate_sde_stratonovich",
    "integrate_sde",
]

SCHEMA_VERSION = 1


class IntegrationError(NumericalError):
    """Non-finite state; ``step`` is the index of the offending step."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass
class Trajectory:
    """Uniform time grid plus the state at every grid point.

    ``states`` has shape ``(n + 1, *state_shape)``; it is a :class:`Jet` when
    the integration ran on jets.
    """

    times: np.ndarray
    states: object
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def values(self) -> np.ndarray:
        """States as a float array (order-zero part for jets)."""
        return ad.value(self.states)

    @property
    def final(self):
        return self.states[-1]

    def flat_values(self) -> np.ndarray:
        v = self.values
        return v.reshape(len(self.times), -1)

    # -- serialisation ----------------------------------------------------
    def to_csv(self, path=None, columns=None) -> str:
        flat = self.flat_values()
        if columns is None:
            columns = [f"s{i}" for i in range(flat.shape[1])]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *columns])
        for t, row in zip(self.times, flat):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None) -> str:
        vals = self.values
        doc = {
            "schema_version": SCHEMA_VERSION,
            "times": [float(t) for t in self.times],
            "state_shape": list(vals.shape[1:]),
            "states": vals.reshape(len(self.times), -1).tolist(),
            "meta": _jsonable(self.meta),
        }
        text = json.dumps(doc)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "Trajectory":
        text = text_or_path
        if not text.lstrip().startswith("{"):
            with open(text_or_path) as fh:
                text = fh.read()
        doc = json.loads(text)
        times = np.array(doc["times"], dtype=float)
        states = np.array(doc["states"], dtype=float).reshape([len(times), *doc["state_shape"]])
        return cls(times, states, doc.get("meta", {}))

    @classmethod
    def from_csv(cls, text_or_path) -> "Trajectory":
        text = text_or_path
        if "\n" not in text:
            with open(text_or_path) as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(data[:, 0].copy(), data[:, 1:].copy(), {})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Jet):
        return _jsonable(obj.value)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _grid(n_steps: int, T: float, t0: float = 0.0):
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    n = int(n_steps)
    return t0 + np.arange(n + 1) * T / n, T / n


def _as_state(x0):
    return x0 if isinstance(x0, Jet) else np.array(x0, dtype=float)


def _stack(states):
    if any(isinstance(s, Jet) for s in states):
        return ad.stack(states)
    return np.stack(states)


def _check(x, k):
    if not ad.all_finite(x):
        raise IntegrationError("non-finite state", k)


def integrate_ode(f: Callable, x0, n_steps: int = 100, T: float = 1.0, scheme: str = "rk4",
                  t0: float = 0.0, check: Callable | None = None) -> Trajectory:
    """Integrate ``dx/dt = f(t, x)`` on a uniform grid of ``n_steps`` steps over ``[t0, t0+T]``.

    ``check(k, x)`` is called after every step and may raise to abort (used
    for chart validity).
    """
    times, dt = _grid(n_steps, T, t0)
    x = _as_state(x0)
    _check(x, 0)
    states = [x]
    if scheme == "euler":
        for k in range(len(times) - 1):
            x = x + f(times[k], x) * dt
            _check(x, k + 1)
            if check is not None:
                check(k + 1, x)
            states.append(x)
    elif scheme == "rk4":
        half = 0.5 * dt
        for k in range(len(times) - 1):
            t = times[k]
            k1 = f(t, x)
            k2 = f(t + half, x + k1 * half)
            k3 = f(t + half, x + k2 * half)
            k4 = f(t + dt, x + k3 * dt)
            x = x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0)
            _check(x, k + 1)
            if check is not None:
                check(k + 1, x)
            states.append(x)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected 'euler' or 'rk4'")
    return Trajectory(times, _stack(states), {"scheme": scheme})


def _sde(s, x0, dW, dt, stratonovich, aux0=None, t0=0.0, check=None):
    dW = np.asarray(dW, dtype=float)
    if dW.ndim == 1:
        dW = dW[:, None]
    n = dW.shape[0]
    if n < 1:
        raise ValueError("dW must have at least one row")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    times = t0 + np.arange(n + 1) * dt
    x = _as_state(x0)
    y = None if aux0 is None else _as_state(aux0)
    _check(x, 0)
    states, aux = [x], [y]
    for k in range(n):
        t = times[k]
        if y is None:
            drift, sto = s(dW[k], t, x)
        else:
            drift, sto, dy = s(dW[k], t, x, y)
        x_new = x + drift * dt
        if stratonovich:
            x_hat = x + sto
            if y is None:
                sto_hat = s(dW[k], t + dt, x_hat)[1]
            else:
                sto_hat = s(dW[k], t + dt, x_hat, y)[1]
            x_new = x_new + (sto + sto_hat) * 0.5
        else:
            x_new = x_new + sto
        x = x_new
        if y is not None:
            y = y + dy * dt
            aux.append(y)
        _check(x, k + 1)
        if check is not None:
            check(k + 1, x)
        states.append(x)
    meta = {"scheme": "euler-heun" if stratonovich else "euler-maruyama"}
    traj = Trajectory(times, _stack(states), meta)
    if aux0 is not None:
        traj.meta["aux"] = _stack(aux)
    return traj


def integrate_sde_ito(s: Callable, x0, dW, dt: float, **kw) -> Trajectory:
    """Euler-Maruyama for the Ito SDE whose field ``s(dW_k, t, x)`` returns ``(drift, diffusion_increment)``.

    Each step is ``x + drift*dt + diffusion_increment``. With ``aux0`` given,
    the field takes ``(dW_k, t, x, y)`` and returns a third entry ``dy``; the
    auxiliary block advances as ``y + dy*dt``.
    """
    return _sde(s, x0, dW, dt, False, **kw)


def integrate_sde_stratonovich(s: Callable, x0, dW, dt: float, **kw) -> Trajectory:
    """Euler-Heun for a Stratonovich SDE with the same field convention.

    The diffusion increment is averaged between the current state and the
    predictor ``x + diffusion_increment``; the drift is taken at the current
    state only, so zero noise reduces to the explicit Euler scheme.
    """
    return _sde(s, x0, dW, dt, True, **kw)


def integrate_sde(s, x0, dW, dt, scheme: str = "stratonovich", **kw) -> Trajectory:
    if scheme in ("ito", "euler-maruyama"):
        return integrate_sde_ito(s, x0, dW, dt, **kw)
    if scheme in ("stratonovich", "euler-heun"):
        return integrate_sde_stratonovich(s, x0, dW, dt, **kw)
    raise ValueError(f"unknown SDE scheme {scheme!r}")
