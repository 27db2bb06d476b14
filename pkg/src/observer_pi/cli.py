"""Command-line front end.

Four subcommands reproduce the headline experiments:

* ``riccati``      — closed-form value matrices for a linear model;
* ``linear-pi``    — multi-seed policy iteration on the linear plant with
                     convergence to the closed-form optimum;
* ``pendulum-pi``  — policy iteration on the nonlinear pendulum compared
                     against the linearization-based baseline policy;
* ``compare``      — side-by-side rollout of two saved policies.

Configs are JSON with a schema version field ("v": 1); paths inside a
config resolve relative to the config file.  CSV artifacts are canonical
(17-significant-digit decimals); SVGs are derived views.  Exit codes:
0 success, 2 input/solver error, 3 acceptance failure, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import (
    ObserverPiError,
    PolicyRolloutError,
    SimulationDivergedError,
)
from .model import (
    CostConfig,
    SystemModel,
    build_reconstruction,
    closed_form_value_matrix,
    load_cost,
    load_model,
    solve_discounted_riccati,
)
from .pi import (
    PiConfig,
    PiRun,
    improve_policy,
    load_pi_config,
    run_policy_iteration,
    sample_stabilizing_policy,
)
from .sim import (
    CorrectionPolicy,
    ExcitationConfig,
    PendulumParams,
    Trajectory,
    default_horizon,
    load_excitation,
    load_policy,
    simulate_linear,
    simulate_pendulum,
    truncated_cost_to_go,
)
from .svg import LineSeries, write_line_chart
from .value import ValueMatrix

log = logging.getLogger("observer_pi")

FLOAT_FMT = "%.17g"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ACCEPTANCE = 3
EXIT_DIVERGED = 4


# -- config plumbing ------------------------------------------------------

def _load_config(path: str | Path) -> tuple[dict, Path]:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("v") != 1:
        raise ValueError(f"unsupported config version {doc.get('v')!r} in {path}")
    return doc, path.parent


def _resolve(base: Path, name: str, doc: dict, required: bool = True) -> Path | None:
    if name not in doc:
        if required:
            raise ValueError(f"config is missing required field {name!r}")
        return None
    p = Path(doc[name])
    return p if p.is_absolute() else base / p


def _seeds(doc: dict, override: str | None) -> list[int]:
    if override:
        return [int(s) for s in override.split(",") if s.strip()]
    return [int(s) for s in doc.get("seeds", [0])]


def _out_dir(doc: dict, base: Path, override: str | None) -> Path:
    if override:
        out = Path(override)
    elif "out" in doc:
        out = _resolve(base, "out", doc)
    else:
        out = Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _vector(doc: dict, name: str, default: list[float]) -> np.ndarray:
    return np.asarray(doc.get(name, default), dtype=float)


# -- formatting -----------------------------------------------------------

def _table(M: np.ndarray, name: str) -> str:
    """Aligned human-readable matrix at 4 significant digits."""
    M = np.atleast_2d(M)
    cells = [[f"{v:.4g}" for v in row] for row in M]
    width = max(len(c) for row in cells for c in row)
    lines = [name + " ="]
    for row in cells:
        lines.append("  [ " + "  ".join(c.rjust(width) for c in row) + " ]")
    return "\n".join(lines)


def _json_float(v: float) -> str:
    return FLOAT_FMT % v


def _write_json_17(path: Path, doc) -> None:
    """JSON dump with every float rendered at 17 significant digits."""

    def render(obj, indent: int) -> str:
        pad = "  " * indent
        if isinstance(obj, dict):
            items = [
                f'{pad}  "{k}": {render(v, indent + 1).lstrip()}'
                for k, v in obj.items()
            ]
            return "{\n" + ",\n".join(items) + f"\n{pad}}}"
        if isinstance(obj, (list, tuple)):
            items = [f"{pad}  {render(v, indent + 1).lstrip()}" for v in obj]
            return "[\n" + ",\n".join(items) + f"\n{pad}]"
        if isinstance(obj, bool):
            return "true" if obj else "false"
        if isinstance(obj, float):
            return _json_float(obj)
        if isinstance(obj, (int, np.integer)):
            return str(int(obj))
        if obj is None:
            return "null"
        return json.dumps(obj)

    with open(path, "w", newline="\n") as fh:
        fh.write(render(doc, 0) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    FLOAT_FMT % v if isinstance(v, float) else str(v) for v in row
                )
                + "\n"
            )


# -- shared helpers -------------------------------------------------------

def _load_problem(doc: dict, base: Path):
    model = load_model(_resolve(base, "model", doc))
    cost = load_cost(_resolve(base, "cost", doc))
    pi_path = _resolve(base, "pi", doc, required=False)
    picfg = load_pi_config(pi_path) if pi_path is not None else PiConfig(
        gamma=cost.gamma
    )
    if picfg.gamma != cost.gamma:
        raise ValueError(
            f"discount mismatch: cost file has gamma={cost.gamma}, "
            f"run config has gamma={picfg.gamma}"
        )
    exc_path = _resolve(base, "excitation", doc, required=False)
    exc = load_excitation(exc_path) if exc_path is not None else ExcitationConfig()
    return model, cost, picfg, exc


def _closed_form(model: SystemModel, cost: CostConfig):
    rec = build_reconstruction(model)
    sol = solve_discounted_riccati(model, cost)
    H_star = closed_form_value_matrix(sol, rec)
    return rec, sol, H_star


def _pendulum_params(doc: dict) -> PendulumParams:
    p = doc.get("pendulum", {})
    return PendulumParams(
        damping=float(p.get("damping", 0.1)),
        gravity_term=float(p.get("gravity_term", 10.0)),
        sample_time=float(p.get("sample_time", 0.1)),
        integrator=p.get("integrator", "rk4"),
        substeps=int(p.get("substeps", 10)),
    )


def _quiet_rollout(
    plant, model: SystemModel, policy: CorrectionPolicy,
    x0: np.ndarray, xhat0: np.ndarray, steps: int,
) -> Trajectory:
    """Noise-free evaluation rollout shared by pendulum-pi and compare so
    their baseline series agree byte-for-byte."""
    quiet = ExcitationConfig(noise_amplitude=0.0, seed=0)
    if isinstance(plant, PendulumParams):
        return simulate_pendulum(plant, model, policy, quiet, x0, xhat0, steps)
    return simulate_linear(model, policy, quiet, x0, xhat0, steps)


# -- subcommands ----------------------------------------------------------

def cmd_riccati(args) -> int:
    doc, base = _load_config(args.config)
    out = _out_dir(doc, base, args.out)
    model = load_model(_resolve(base, "model", doc))
    cost = load_cost(_resolve(base, "cost", doc))
    rec, sol, H_star = _closed_form(model, cost)
    print(_table(sol.P, "P"))
    print(f"iterations = {sol.iterations}, residual = {sol.residual:.4g}")
    print(_table(H_star.H, "H_opt"))
    _write_json_17(
        out / "riccati.json",
        {
            "v": 1,
            "P": sol.P.tolist(),
            "iterations": sol.iterations,
            "residual": sol.residual,
            "M_w": rec.M_w.tolist(),
            "M_y": rec.M_y.tolist(),
            "H": H_star.H.tolist(),
        },
    )
    log.info("wrote %s", out / "riccati.json")
    return EXIT_OK


def _linear_pi_seed(payload) -> tuple[int, PiRun]:
    (model, cost, picfg, exc, seed, H_star, x0, steps) = payload
    initial = sample_stabilizing_policy(model, seed)
    exc_s = replace(exc, seed=seed)
    run = run_policy_iteration(
        model, model, initial, cost, picfg, exc_s,
        x0=x0, steps=steps, reference_H=H_star,
    )
    return seed, run


def cmd_linear_pi(args) -> int:
    doc, base = _load_config(args.config)
    out = _out_dir(doc, base, args.out)
    model, cost, picfg, exc = _load_problem(doc, base)
    _, _, H_star = _closed_form(model, cost)
    seeds = _seeds(doc, args.seeds)
    threshold = float(doc.get("threshold", 0.05))
    x0 = _vector(doc, "x0", [0.0] * model.n_x)
    steps = int(doc["steps"]) if "steps" in doc else None
    H_norm = float(np.linalg.norm(H_star.H, "fro"))

    payloads = [
        (model, cost, picfg, exc, s, H_star, x0, steps) for s in seeds
    ]
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_linear_pi_seed, payloads))
    else:
        results = [_linear_pi_seed(p) for p in payloads]
    results.sort(key=lambda sr: sr[0])

    rows: list[list] = []
    series: list[LineSeries] = []
    failed: list[int] = []
    for seed, run in results:
        run_dir = out / f"run_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        run.to_csv(run_dir / "iterations.csv")
        run.dump_iterations(run_dir)
        rel = [rec.distance_to_reference / H_norm for rec in run.records]
        for rec, r in zip(run.records, rel):
            rows.append([seed, rec.j, float(r)])
        series.append(
            LineSeries(
                x=np.array([rec.j for rec in run.records], dtype=float),
                y=np.array(rel), label=f"seed {seed}",
            )
        )
        if rel[-1] >= threshold:
            failed.append(seed)
        log.info("seed %d: final relative error %.3e in %d iterations",
                 seed, rel[-1], len(run.records))

    _write_csv(out / "convergence.csv", ["seed", "j", "rel_error"], rows)
    write_line_chart(
        out / "convergence.svg", series,
        title="Distance to the closed-form optimal value matrix",
        x_label="policy number j",
        y_label="relative Frobenius error", log_y=True,
    )
    if failed:
        print(
            f"FAIL: seeds {failed} ended above the {threshold:g} "
            f"relative-error threshold"
        )
        return EXIT_ACCEPTANCE
    print(
        f"OK: {len(seeds)} run(s) below relative error {threshold:g} "
        f"(artifacts in {out})"
    )
    return EXIT_OK


def cmd_pendulum_pi(args) -> int:
    doc, base = _load_config(args.config)
    out = _out_dir(doc, base, args.out)
    model, cost, picfg, exc = _load_problem(doc, base)
    params = _pendulum_params(doc)
    _, _, H_star = _closed_form(model, cost)
    baseline = improve_policy(H_star, cost)
    seeds = _seeds(doc, args.seeds)
    seed = seeds[0]
    x0 = _vector(doc, "x0", [3.0, 0.0])
    xhat0 = _vector(doc, "xhat0", [0.0] * model.n_x)
    steps = int(doc["steps"]) if "steps" in doc else None
    rollout_steps = int(doc.get("rollout_steps", 100))
    horizon = default_horizon(cost.gamma)

    initial = sample_stabilizing_policy(model, seed)
    run = run_policy_iteration(
        params, model, initial, cost, picfg, replace(exc, seed=seed),
        x0=x0, xhat0=xhat0, steps=steps, reference_H=H_star,
        cost_eval_x0=x0, cost_eval_xhat0=xhat0,
    )
    run_dir = out / f"run_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    run.to_csv(run_dir / "iterations.csv")
    run.dump_iterations(run_dir)

    base_traj = _quiet_rollout(params, model, baseline, x0, xhat0,
                               max(horizon, rollout_steps))
    baseline_cost = truncated_cost_to_go(base_traj, cost, 0, horizon)
    learned = run.final_policy
    learned_traj = _quiet_rollout(params, model, learned, x0, xhat0,
                                  max(horizon, rollout_steps))
    learned_cost = truncated_cost_to_go(learned_traj, cost, 0, horizon)

    _write_csv(
        out / "cost_to_go.csv",
        ["j", "learned", "baseline"],
        [[rec.j, rec.cost_to_go, baseline_cost] for rec in run.records],
    )
    js = np.array([rec.j for rec in run.records], dtype=float)
    write_line_chart(
        out / "cost_to_go.svg",
        [
            LineSeries(x=js,
                       y=np.array([r.cost_to_go for r in run.records]),
                       label="learned"),
            LineSeries(x=js, y=np.full(js.shape, baseline_cost),
                       label="baseline", dashed=True),
        ],
        title="Truncated cost-to-go from the initial condition",
        x_label="policy number j", y_label="cost-to-go",
    )

    ny = model.n_y
    header = (["k"]
              + [f"learned_ytilde_{i}" for i in range(ny)]
              + [f"baseline_ytilde_{i}" for i in range(ny)])
    err_rows = [
        [k] + [float(v) for v in learned_traj.ytilde[k]]
        + [float(v) for v in base_traj.ytilde[k]]
        for k in range(rollout_steps)
    ]
    _write_csv(out / "output_error.csv", header, err_rows)
    ks = np.arange(rollout_steps, dtype=float)
    write_line_chart(
        out / "output_error.svg",
        [
            LineSeries(
                x=ks,
                y=np.linalg.norm(learned_traj.ytilde[:rollout_steps], axis=1),
                label="learned",
            ),
            LineSeries(
                x=ks,
                y=np.linalg.norm(base_traj.ytilde[:rollout_steps], axis=1),
                label="baseline", dashed=True,
            ),
        ],
        title="Output-error magnitude under the final policies",
        x_label="step k", y_label="output-error norm",
    )

    print(f"learned cost-to-go  = {learned_cost:.4g}")
    print(f"baseline cost-to-go = {baseline_cost:.4g}")
    if learned_cost <= baseline_cost:
        print("OK: learned policy at or below the linearization baseline")
        return EXIT_OK
    print("FAIL: learned policy did not reach the baseline cost")
    return EXIT_ACCEPTANCE


def cmd_compare(args) -> int:
    doc, base = _load_config(args.config)
    out = _out_dir(doc, base, args.out)
    model = load_model(_resolve(base, "model", doc))
    cost = load_cost(_resolve(base, "cost", doc))
    plant_kind = doc.get("plant", "linear")
    if plant_kind not in ("linear", "pendulum"):
        raise ValueError(f"unknown plant {plant_kind!r}")
    plant = _pendulum_params(doc) if plant_kind == "pendulum" else model

    path_a = _resolve(base, "policy_a", doc)
    path_b = _resolve(base, "policy_b", doc)
    try:
        policy_a = load_policy(path_a)
        policy_b = load_policy(path_b)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed policy file: {exc}") from exc
    label_a = doc.get("label_a", "policy_a")
    label_b = doc.get("label_b", "policy_b")

    x0 = _vector(doc, "x0", [3.0, 0.0] if plant_kind == "pendulum"
                 else [0.0] * model.n_x)
    xhat0 = _vector(doc, "xhat0", [0.0] * model.n_x)
    steps = int(doc.get("steps", 100))

    traj_a = _quiet_rollout(plant, model, policy_a, x0, xhat0, steps)
    traj_b = _quiet_rollout(plant, model, policy_b, x0, xhat0, steps)

    g = cost.gamma
    rows = []
    for k in range(steps):
        row: list = [k]
        for t in (traj_a, traj_b):
            yt, w = t.ytilde[k], t.w[k]
            row.append(float(yt @ cost.Q @ yt + w @ cost.R @ w))
        rows.append(row)
    _write_csv(out / "costs.csv", ["k", "stage_cost_a", "stage_cost_b"], rows)

    ny = model.n_y
    header = (["k"]
              + [f"a_ytilde_{i}" for i in range(ny)]
              + [f"b_ytilde_{i}" for i in range(ny)])
    err_rows = [
        [k] + [float(v) for v in traj_a.ytilde[k]]
        + [float(v) for v in traj_b.ytilde[k]]
        for k in range(steps)
    ]
    _write_csv(out / "output_error.csv", header, err_rows)

    ks = np.arange(steps, dtype=float)
    write_line_chart(
        out / "compare.svg",
        [
            LineSeries(x=ks, y=np.linalg.norm(traj_a.ytilde, axis=1),
                       label=label_a),
            LineSeries(x=ks, y=np.linalg.norm(traj_b.ytilde, axis=1),
                       label=label_b, dashed=True),
        ],
        title="Output-error magnitude",
        x_label="step k", y_label="output-error norm",
    )
    horizon = min(default_horizon(g), steps)
    cost_a = truncated_cost_to_go(traj_a, cost, 0, horizon)
    cost_b = truncated_cost_to_go(traj_b, cost, 0, horizon)
    print(f"{label_a} cost-to-go = {cost_a:.4g}")
    print(f"{label_b} cost-to-go = {cost_b:.4g}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="observer-pi",
        description="Data-driven observer correction-term synthesis via "
        "policy iteration with a convex-trained quadratic value function.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("riccati", cmd_riccati,
         "Solve the discounted value-matrix equation in closed form."),
        ("linear-pi", cmd_linear_pi,
         "Multi-seed policy iteration on the linear plant."),
        ("pendulum-pi", cmd_pendulum_pi,
         "Policy iteration on the nonlinear pendulum vs. the baseline."),
        ("compare", cmd_compare,
         "Side-by-side rollout of two saved policies."),
    ]
    for name, fn, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seeds", default=None,
                       help="comma-separated seed list (overrides config)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker processes for multi-seed commands")
        p.set_defaults(fn=fn)
    return parser


def _configure_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(
        os.environ.get("OBSERVER_PI_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SimulationDivergedError, PolicyRolloutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, json.JSONDecodeError, KeyError, ValueError,
            ObserverPiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
