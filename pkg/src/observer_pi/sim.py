"""Plant/observer simulation under a correction policy.

The plant is either the linear design model itself or the nonlinear
pendulum; the observer always runs the linear design model with an
additive correction term.  Probing noise for persistent excitation is
drawn up-front from a seeded generator, so a (config, seed) pair fully
determines the trajectory regardless of the stepping backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import SimulationDivergedError
from .model import SystemModel, CostConfig, spectral_radius

FLOAT_FMT = "%.17g"


# -- correction policies --------------------------------------------------

@dataclass(frozen=True)
class ZeroPolicy:
    """No correction (probing noise only, if configured)."""

    kind = "zero"


@dataclass(frozen=True)
class LuenbergerPolicy:
    """Fixed output-injection gain: w_k = L ytilde_k."""

    L: np.ndarray
    kind = "luenberger"

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        object.__setattr__(self, "L", L)
        L.setflags(write=False)

    def is_stabilizing(self, model: SystemModel, margin: float = 1.0) -> bool:
        return spectral_radius(model.A - self.L @ model.C) < margin


@dataclass(frozen=True)
class MeasuredDataPolicy:
    """Linear policy over measured histories:

        w_k = Fw [w_{k-1}; ...; w_{k-n_x+1}] + Fy [ytilde_k; ...; ytilde_{k-n_x+1}]

    During the first n_x steps (history warm-up) the configured warm-up
    policy is applied instead (zero if none is given).
    """

    Fw: np.ndarray
    Fy: np.ndarray
    warmup: LuenbergerPolicy | None = None
    kind = "measured_data"

    def __post_init__(self):
        Fw = np.atleast_2d(np.asarray(self.Fw, dtype=float))
        Fy = np.atleast_2d(np.asarray(self.Fy, dtype=float))
        object.__setattr__(self, "Fw", Fw)
        object.__setattr__(self, "Fy", Fy)
        Fw.setflags(write=False)
        Fy.setflags(write=False)
        n_w = Fw.shape[0]
        if Fy.shape[0] != n_w:
            raise ValueError("Fw and Fy must have the same number of rows")
        # widths implied by the block partition: (n_x-1)*n_w and n_x*n_y
        n_x = n_w  # correction width equals state width
        if Fw.shape[1] != (n_x - 1) * n_w:
            raise ValueError(
                f"Fw must have {(n_x - 1) * n_w} columns for n_x={n_x}, "
                f"got {Fw.shape[1]}"
            )
        if n_x > 0 and Fy.shape[1] % n_x != 0:
            raise ValueError(
                f"Fy column count {Fy.shape[1]} is not a multiple of n_x={n_x}"
            )

    def apply(self, w_hist: np.ndarray, y_hist: np.ndarray) -> np.ndarray:
        """Evaluate the policy on newest-first stacked histories."""
        return self.Fw @ np.asarray(w_hist).reshape(-1) + self.Fy @ np.asarray(
            y_hist
        ).reshape(-1)


CorrectionPolicy = ZeroPolicy | LuenbergerPolicy | MeasuredDataPolicy


def save_policy(policy: CorrectionPolicy, path: str | Path) -> None:
    doc: dict = {"v": 1, "kind": policy.kind}
    if isinstance(policy, LuenbergerPolicy):
        doc["L"] = policy.L.tolist()
    elif isinstance(policy, MeasuredDataPolicy):
        doc["Fw"] = policy.Fw.tolist()
        doc["Fy"] = policy.Fy.tolist()
        if policy.warmup is not None:
            doc["warmup_L"] = policy.warmup.L.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_policy(path: str | Path) -> CorrectionPolicy:
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "zero":
        return ZeroPolicy()
    if kind == "luenberger":
        return LuenbergerPolicy(L=np.asarray(doc["L"], dtype=float))
    if kind == "measured_data":
        warmup = None
        if doc.get("warmup_L") is not None:
            warmup = LuenbergerPolicy(L=np.asarray(doc["warmup_L"], dtype=float))
        return MeasuredDataPolicy(
            Fw=np.asarray(doc["Fw"], dtype=float),
            Fy=np.asarray(doc["Fy"], dtype=float),
            warmup=warmup,
        )
    raise ValueError(f"unknown policy kind {kind!r} in {path}")


# -- excitation -----------------------------------------------------------

@dataclass(frozen=True)
class ExcitationConfig:
    """Probing noise on the correction term plus an optional plant input.

    The seed fully determines both streams; amplitude 0 disables probing.
    input_signal is one of "zero", "sum_of_sinusoids" (with freqs/amps in
    rad per step), or "prbs" (seeded +/- amplitude switching).
    """

    noise_amplitude: float = 0.1
    distribution: str = "uniform"
    seed: int = 0
    input_signal: str = "zero"
    input_freqs: tuple[float, ...] = ()
    input_amps: tuple[float, ...] = ()
    input_amplitude: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.noise_amplitude) or self.noise_amplitude < 0:
            raise ValueError("noise amplitude must be finite and >= 0")
        if self.distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.input_signal not in ("zero", "sum_of_sinusoids", "prbs"):
            raise ValueError(f"unknown input signal {self.input_signal!r}")
        if self.input_signal == "sum_of_sinusoids" and len(self.input_freqs) != len(
            self.input_amps
        ):
            raise ValueError("input_freqs and input_amps must have equal length")

    def probing_noise(self, steps: int, n_w: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        if self.distribution == "uniform":
            noise = rng.uniform(-self.noise_amplitude, self.noise_amplitude,
                                size=(steps, n_w))
        else:
            noise = self.noise_amplitude * rng.standard_normal((steps, n_w))
        return noise

    def input_sequence(self, steps: int, n_u: int) -> np.ndarray:
        u = np.zeros((steps, n_u))
        if self.input_signal == "sum_of_sinusoids" and n_u > 0:
            k = np.arange(steps)
            sig = np.zeros(steps)
            for f, a in zip(self.input_freqs, self.input_amps):
                sig += a * np.sin(f * k)
            u[:, 0] = sig
        elif self.input_signal == "prbs" and n_u > 0:
            # separate stream so the probing noise draw is unaffected
            rng = np.random.default_rng((self.seed, 1))
            u[:, 0] = self.input_amplitude * (
                2.0 * rng.integers(0, 2, size=steps) - 1.0
            )
        return u


def save_excitation(exc: ExcitationConfig, path: str | Path) -> None:
    doc = {
        "v": 1,
        "noise_amplitude": exc.noise_amplitude,
        "distribution": exc.distribution,
        "seed": exc.seed,
        "input_signal": exc.input_signal,
        "input_freqs": list(exc.input_freqs),
        "input_amps": list(exc.input_amps),
        "input_amplitude": exc.input_amplitude,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_excitation(path: str | Path) -> ExcitationConfig:
    with open(path) as fh:
        doc = json.load(fh)
    return ExcitationConfig(
        noise_amplitude=float(doc.get("noise_amplitude", 0.1)),
        distribution=doc.get("distribution", "uniform"),
        seed=int(doc.get("seed", 0)),
        input_signal=doc.get("input_signal", "zero"),
        input_freqs=tuple(doc.get("input_freqs", ())),
        input_amps=tuple(doc.get("input_amps", ())),
        input_amplitude=float(doc.get("input_amplitude", 0.0)),
    )


# -- pendulum plant -------------------------------------------------------

@dataclass(frozen=True)
class PendulumParams:
    """Continuous-time pendulum th'' + damping*th' + gravity_term*sin(th) = u,
    sampled at sample_time with the chosen integrator."""

    damping: float = 0.1
    gravity_term: float = 10.0
    sample_time: float = 0.1
    integrator: str = "rk4"
    substeps: int = 10

    def __post_init__(self):
        if self.sample_time <= 0:
            raise ValueError("sample_time must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


# -- trajectories ---------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Per-step records of a simulation run.

    ``w`` is the applied correction (policy output plus probing noise
    ``n``).  ``plant_x`` holds the plant state; ``err_x`` (the estimation
    error in the design-model state space) is present only when the plant
    is the linear model, where it is exact ground truth.  For the
    nonlinear plant ``plant_x`` is diagnostic only - the learning path
    never reads it.
    """

    u: np.ndarray        # (T, n_u)
    y: np.ndarray        # (T, n_y)
    yhat: np.ndarray     # (T, n_y)
    ytilde: np.ndarray   # (T, n_y)
    w: np.ndarray        # (T, n_w) applied correction incl. probing noise
    n: np.ndarray        # (T, n_w) probing noise
    xhat: np.ndarray     # (T, n_x)
    plant_x: np.ndarray  # (T, n_plant)
    err_x: np.ndarray | None = None  # (T, n_x), linear plant only

    def __post_init__(self):
        T = self.u.shape[0]
        for name in ("y", "yhat", "ytilde", "w", "n", "xhat", "plant_x"):
            if getattr(self, name).shape[0] != T:
                raise ValueError(f"field {name} has inconsistent length")

    def __len__(self) -> int:
        return self.u.shape[0]

    @property
    def n_x(self) -> int:
        return self.xhat.shape[1]

    @property
    def n_y(self) -> int:
        return self.y.shape[1]

    @property
    def n_w(self) -> int:
        return self.w.shape[1]

    def to_csv(self, path: str | Path) -> None:
        """Write `k,u_*,y_*,yhat_*,ytilde_*,w_*,n_*,xhat_*` rows with
        17-significant-digit decimals (deterministic byte-for-byte)."""
        cols: list[tuple[str, np.ndarray]] = []
        for name in ("u", "y", "yhat", "ytilde", "w", "n", "xhat"):
            arr = getattr(self, name)
            for j in range(arr.shape[1]):
                cols.append((f"{name}_{j}", arr[:, j]))
        with open(path, "w", newline="\n") as fh:
            fh.write("k," + ",".join(name for name, _ in cols) + "\n")
            for k in range(len(self)):
                row = ",".join(FLOAT_FMT % col[k] for _, col in cols)
                fh.write(f"{k},{row}\n")


def _policy_arrays(policy: CorrectionPolicy, model: SystemModel):
    """Flatten a policy into the (kind, L, Fw, Fy, warm_kind, warm_L)
    encoding shared by both stepping backends."""
    n_x, n_y, n_w = model.n_x, model.n_y, model.n_w
    L = np.zeros((n_w, n_y))
    Fw = np.zeros((n_w, max(0, (n_x - 1) * n_w)))
    Fy = np.zeros((n_w, n_x * n_y))
    warm_L = np.zeros((n_w, n_y))
    warm_kind = 0
    if isinstance(policy, ZeroPolicy):
        kind = 0
    elif isinstance(policy, LuenbergerPolicy):
        kind = 1
        if policy.L.shape != (n_w, n_y):
            raise ValueError(
                f"gain must be {n_w}x{n_y}, got {policy.L.shape}"
            )
        L = policy.L
    elif isinstance(policy, MeasuredDataPolicy):
        kind = 2
        if policy.Fw.shape != Fw.shape or policy.Fy.shape != Fy.shape:
            raise ValueError(
                f"history gains must be {Fw.shape} and {Fy.shape}, got "
                f"{policy.Fw.shape} and {policy.Fy.shape}"
            )
        Fw, Fy = policy.Fw, policy.Fy
        if policy.warmup is not None:
            warm_kind = 1
            warm_L = policy.warmup.L
            if warm_L.shape != (n_w, n_y):
                raise ValueError(
                    f"warm-up gain must be {n_w}x{n_y}, got {warm_L.shape}"
                )
    else:
        raise TypeError(f"unknown policy type {type(policy)!r}")
    as_c = lambda M: np.ascontiguousarray(M, dtype=float)
    return kind, as_c(L), as_c(Fw), as_c(Fy), warm_kind, as_c(warm_L)


def _alloc(steps: int, model: SystemModel, n_plant: int):
    return (
        np.zeros((steps, n_plant)),
        np.zeros((steps, model.n_x)),
        np.zeros((steps, model.n_y)),
        np.zeros((steps, model.n_y)),
        np.zeros((steps, model.n_y)),
        np.zeros((steps, model.n_w)),
    )


def simulate_linear(
    model: SystemModel,
    policy: CorrectionPolicy,
    exc: ExcitationConfig,
    x0: np.ndarray,
    xhat0: np.ndarray,
    steps: int,
) -> Trajectory:
    """Run plant and observer on the same linear model for ``steps`` samples."""
    if steps < model.n_x + 1:
        raise ValueError(
            f"need at least n_x+1={model.n_x + 1} steps for downstream "
            f"windowing, got {steps}"
        )
    x0 = np.asarray(x0, dtype=float).reshape(model.n_x)
    xhat0 = np.asarray(xhat0, dtype=float).reshape(model.n_x)
    u = exc.input_sequence(steps, model.n_u)
    noise = exc.probing_noise(steps, model.n_w)
    x, xh, y, yh, yt, w = _alloc(steps, model, model.n_x)
    kind, L, Fw, Fy, warm_kind, warm_L = _policy_arrays(policy, model)
    status = _kernels.linear_loop(
        np.ascontiguousarray(model.A), np.ascontiguousarray(model.B),
        np.ascontiguousarray(model.C), u, noise,
        kind, L, Fw, Fy, warm_kind, warm_L, x0, xhat0,
        x, xh, y, yh, yt, w,
    )
    if status >= 0:
        raise SimulationDivergedError(status)
    return Trajectory(u=u, y=y, yhat=yh, ytilde=yt, w=w, n=noise, xhat=xh,
                      plant_x=x, err_x=x - xh)


def simulate_pendulum(
    params: PendulumParams,
    design_model: SystemModel,
    policy: CorrectionPolicy,
    exc: ExcitationConfig,
    x0: np.ndarray,
    xhat0: np.ndarray,
    steps: int,
) -> Trajectory:
    """Run the nonlinear pendulum plant with the linear-model observer."""
    if design_model.n_x != 2:
        raise ValueError("pendulum plant requires a 2-state design model")
    if steps < design_model.n_x + 1:
        raise ValueError(
            f"need at least n_x+1={design_model.n_x + 1} steps, got {steps}"
        )
    x0 = np.asarray(x0, dtype=float).reshape(2)
    xhat0 = np.asarray(xhat0, dtype=float).reshape(design_model.n_x)
    u = exc.input_sequence(steps, design_model.n_u)
    noise = exc.probing_noise(steps, design_model.n_w)
    x, xh, y, yh, yt, w = _alloc(steps, design_model, 2)
    kind, L, Fw, Fy, warm_kind, warm_L = _policy_arrays(policy, design_model)
    integrator = 0 if params.integrator == "rk4" else 1
    status = _kernels.pendulum_loop(
        params.damping, params.gravity_term, params.sample_time, params.substeps,
        integrator,
        np.ascontiguousarray(design_model.A), np.ascontiguousarray(design_model.B),
        np.ascontiguousarray(design_model.C), u, noise,
        kind, L, Fw, Fy, warm_kind, warm_L, x0, xhat0,
        x, xh, y, yh, yt, w,
    )
    if status >= 0:
        raise SimulationDivergedError(status)
    return Trajectory(u=u, y=y, yhat=yh, ytilde=yt, w=w, n=noise, xhat=xh,
                      plant_x=x, err_x=None)


def truncated_cost_to_go(
    traj: Trajectory, cost: CostConfig, start: int, horizon: int
) -> float:
    """Discounted stage-cost sum over [start, start+horizon), evaluated with
    the applied correction (probing noise included)."""
    if start < 0 or horizon < 0 or start + horizon > len(traj):
        raise ValueError(
            f"window [{start}, {start + horizon}) out of range for "
            f"trajectory of length {len(traj)}"
        )
    g = cost.gamma
    total = 0.0
    for i in range(horizon):
        yt = traj.ytilde[start + i]
        w = traj.w[start + i]
        total += g**i * (yt @ cost.Q @ yt + w @ cost.R @ w)
    return float(total)


def default_horizon(gamma: float, tail: float = 1e-8) -> int:
    """Smallest T with gamma^T below the tail weight (36 for gamma=0.6)."""
    if gamma == 0.0:
        return 1
    return int(np.ceil(np.log(tail) / np.log(gamma)))


@dataclass(frozen=True)
class Window:
    """One regression tuple: stacked history X_k, its one-step shift
    X_{k+1}, and the stage data (ytilde_k, w_k) at the pivot step."""

    k: int
    X: np.ndarray
    X_next: np.ndarray
    ytilde: np.ndarray
    w: np.ndarray


def _stack(traj: Trajectory, k: int, n_x: int) -> np.ndarray:
    """X_k = [w_{k-1}; ...; w_{k-n_x}; ytilde_{k-1}; ...; ytilde_{k-n_x}]."""
    w_part = traj.w[k - 1::-1][:n_x].reshape(-1)
    y_part = traj.ytilde[k - 1::-1][:n_x].reshape(-1)
    return np.concatenate([w_part, y_part])


def extract_windows(traj: Trajectory, n_x: int) -> list[Window]:
    """All regression tuples with full newest-first histories.

    Valid pivots run from k = n_x (first full history) to k = T-1 (X_{k+1}
    reaches exactly the end of the record)."""
    T = len(traj)
    if T < n_x + 1:
        raise ValueError(
            f"trajectory of length {T} too short for window size n_x={n_x}"
        )
    out = []
    for k in range(n_x, T):
        out.append(
            Window(
                k=k,
                X=_stack(traj, k, n_x),
                X_next=_stack(traj, k + 1, n_x),
                ytilde=traj.ytilde[k].copy(),
                w=traj.w[k].copy(),
            )
        )
    return out
