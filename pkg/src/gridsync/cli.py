"""Command-line driver.

Usage::

    gridsync simulate CONFIG [CONFIG ...] [--every N] [--output PATH] [--sweep]
    gridsync steady-state CONFIG [--output PATH]
    gridsync check-damping CONFIG [--law LAW] [--points N] [--d-scale S] [--require]
    gridsync translate-opf CONFIG [--output PATH]
    gridsync loops (--nodes N | CONFIG) [--search] [--multistarts K]
    gridsync landscape CONFIG [--field F] [--resolution R] [--output PATH]

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 damping
certificate fails (``check-damping --require``). Errors are written to
stderr as ``error[<category>]: <message>``.

The config is a JSON document; see ``configs/README.md`` for the schema.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import control, cycles, dynamics, network, opf, stability
from .errors import GridSyncError, NumericalError, SingularMatrixError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_CERTIFICATE = 4

NODE_KEYS = {
    "M": "m_kg_m2", "D": "d_n_m_s", "K_p": "k_p_n_m_s", "L_m": "l_m_henry", "i_r_star": "i_r_star_amp",
    "R_s": "r_s_ohm", "L_s": "l_s_henry", "G": "g_siemens", "C": "c_farad",
}
EDGE_KEYS = {"R_t": "r_t_ohm", "L_t": "l_t_henry"}


def _field_path(name: str) -> str:
    if name in NODE_KEYS:
        return f"network.nodes.{NODE_KEYS[name]}"
    if name in EDGE_KEYS:
        return f"network.edges.{EDGE_KEYS[name]}"
    return name


@dataclass
class Scenario:
    """Validated scenario: network, model, controller, initial state and run settings."""

    name: str
    topology: network.Topology
    params: network.GridParams
    model: str
    controller: Optional[control.ControllerSpec]
    initial: object
    t_end: float
    dt: float
    output: dict
    raw: dict

    def plant(self) -> dynamics.Plant:
        return dynamics.Plant(self.topology, self.params, self.model)


def _get(tree: dict, path: str, default=None, required: bool = False):
    cur = tree
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ValidationError(f"{path}: missing")
            return default
        cur = cur[part]
    return cur


def _vector(tree: dict, path: str, size: Optional[int] = None, default=None) -> np.ndarray:
    val = _get(tree, path, default, required=default is None)
    try:
        arr = np.atleast_1d(np.asarray(val, dtype=float))
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: expected a list of numbers") from None
    if arr.ndim != 1:
        raise ValidationError(f"{path}: expected a flat list")
    if size is not None and arr.size != size:
        raise ValidationError(f"{path}: expected {size} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{path}: entries must be finite")
    return arr


def _edge_pairs(tree: dict, path: str, n: int):
    pairs = _get(tree, path, required=True)
    try:
        pairs = [(int(a) - 1, int(b) - 1) for a, b in pairs]
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: expected [from, to] pairs of 1-based node numbers") from None
    for a, b in pairs:
        if not (0 <= a < n and 0 <= b < n):
            raise ValidationError(f"{path}: node numbers must lie in 1..{n}")
    return pairs


def parse_network(tree: dict):
    """Topology and parameters from the ``network`` section."""
    nodes = _get(tree, "network.nodes", required=True)
    if not isinstance(nodes, dict):
        raise ValidationError("network.nodes: expected an object")
    m_arr = _vector(tree, "network.nodes.m_kg_m2")
    n = m_arr.size
    values = {name: _vector(tree, f"network.nodes.{key}", n) for name, key in NODE_KEYS.items()}
    if _get(tree, "network.incidence") is not None:
        try:
            inc = np.asarray(_get(tree, "network.incidence"), dtype=float)
        except (TypeError, ValueError):
            raise ValidationError("network.incidence: expected a numeric matrix") from None
        if inc.ndim != 2 or inc.shape[0] != n:
            raise ValidationError(f"network.incidence: expected {n} rows")
    else:
        edges = _edge_pairs(tree, "network.edges.pairs", n)
        inc = network._incidence(n, edges)
    m = inc.shape[1]
    values["R_t"] = _vector(tree, "network.edges.r_t_ohm", m)
    values["L_t"] = _vector(tree, "network.edges.l_t_henry", m)
    comm = None
    weights = None
    if _get(tree, "network.comm_graph") is not None:
        comm_pairs = _edge_pairs(tree, "network.comm_graph.pairs", n)
        comm = network._incidence(n, comm_pairs)
        weights = _vector(tree, "network.comm_graph.weights", len(comm_pairs), default=[1.0] * len(comm_pairs))
    omega0 = float(_get(tree, "network.omega0_rad_s", 100.0 * np.pi))
    try:
        topology = network.Topology(inc, comm, weights)
    except ValidationError as exc:
        raise ValidationError(f"network.{exc}") from None
    try:
        params = network.GridParams(omega0=omega0, **values)
    except ValidationError as exc:
        msg = str(exc)
        name = msg.split(":", 1)[0]
        raise ValidationError(_field_path(name) + msg[len(name):]) from None
    return topology, params


def _angles(tree: dict, base: str, n: int, required: bool = True):
    if _get(tree, base + "_deg") is not None:
        return np.deg2rad(_vector(tree, base + "_deg", n))
    if _get(tree, base + "_rad") is not None:
        return _vector(tree, base + "_rad", n)
    if required:
        raise ValidationError(f"{base}_deg or {base}_rad: missing")
    return None


def parse_controller(tree: dict, n: int) -> Optional[control.ControllerSpec]:
    if _get(tree, "controller") is None:
        return None
    law = _get(tree, "controller.law", required=True)
    tau = _get(tree, "controller.tau_open_n_m")
    try:
        return control.ControllerSpec(
            law=law, theta_star=_angles(tree, "controller.theta_star", n),
            candidate=_get(tree, "controller.candidate", "S_bar"),
            approximate=bool(_get(tree, "controller.approximate", False)),
            tau_open=None if tau is None else _vector(tree, "controller.tau_open_n_m", n))
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"controller: {exc}") from None


def load_scenario(path) -> Scenario:
    """Read and validate a scenario config (cross-field checks included)."""
    path = Path(path)
    try:
        tree = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"config {path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON ({exc})") from None
    if not isinstance(tree, dict):
        raise ValidationError("config: top level must be an object")
    topology, params = parse_network(tree)
    model = _get(tree, "model", "full")
    if model not in dynamics.MODELS:
        raise ValidationError(f"model: expected one of {dynamics.MODELS}")
    spec = parse_controller(tree, params.n)
    t_end = float(_get(tree, "t_end_s", 1.0))
    dt = float(_get(tree, "dt_s", dynamics.DEFAULT_DT))
    if not (np.isfinite(dt) and dt > 0):
        raise ValidationError("dt_s: must be positive")
    if not (np.isfinite(t_end) and t_end >= dt):
        raise ValidationError("t_end_s: must be at least dt_s")
    initial = _get(tree, "initial", "equilibrium")
    output = _get(tree, "output", {}) or {}
    return Scenario(path.stem, topology, params, model, spec, initial, t_end, dt, output, tree)


def initial_state(sc: Scenario, plant: dynamics.Plant) -> dynamics.SimState:
    """Resolve the ``initial`` shorthand into a state."""
    theta_star = sc.controller.theta_star
    init = sc.initial
    if init == "equilibrium":
        return dynamics.equilibrium_state(plant, theta_star)
    if isinstance(init, dict) and "perturbed_equilibrium" in init:
        sub = init["perturbed_equilibrium"]
        try:
            seed, mag = int(sub["seed"]), float(sub["magnitude"])
        except (KeyError, TypeError, ValueError):
            raise ValidationError("initial.perturbed_equilibrium: needs integer seed and numeric magnitude") from None
        return dynamics.perturbed_state(plant, theta_star, seed, mag)
    if isinstance(init, dict):
        tree = {"initial": init}
        n = plant.n
        theta = _angles(tree, "initial.theta", n, required=False)
        if theta is None:
            off = _angles(tree, "initial.theta_offset", n, required=False)
            theta = theta_star + (np.zeros(n) if off is None else off)
        omega = _vector(tree, "initial.omega_tilde_rad_s", n, default=[0.0] * n)
        return dynamics.equilibrium_state(plant, theta, omega)
    raise ValidationError("initial: expected \"equilibrium\", {\"perturbed_equilibrium\": ...} or explicit offsets")


# --- verbs ----------------------------------------------------------------------------

def trajectory_table(traj: dynamics.Trajectory):
    """Header and rows of the trajectory output."""
    n = traj.n
    header = (["t"] + [f"theta_{k + 1}" for k in range(n)] + [f"omega_{k + 1}" for k in range(n)]
              + [c for k in range(n) for c in (f"v_d{k + 1}", f"v_q{k + 1}")]
              + ["H_tilde", "grad_norm"] + [f"tau_{k + 1}" for k in range(n)])
    data = np.column_stack([traj.times, traj.theta, traj.omega_tilde, traj.v,
                            traj.h_tilde, traj.grad_norm, traj.tau])
    return header, data


def write_table(path, header, data) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def _simulate_one(config: str, every: int, output: Optional[str]) -> str:
    sc = load_scenario(config)
    if sc.controller is None:
        raise ValidationError("controller: required for simulate")
    plant = sc.plant()
    state = initial_state(sc, plant)
    traj = dynamics.integrate(plant, sc.controller, state, sc.t_end, sc.dt, every=every)
    out = output or sc.output.get("trajectory") or f"{sc.name}.csv"
    header, data = trajectory_table(traj)
    write_table(out, header, data)
    return out


def _sweep_worker(job):
    config, every, output = job
    try:
        return config, _simulate_one(config, every, output), None
    except GridSyncError as exc:
        return config, None, (exc.category, str(exc))


def cmd_simulate(args) -> int:
    configs = args.config
    if args.output and len(configs) > 1:
        raise ValidationError("--output: only valid with a single config (use --output-dir)")
    if args.every < 1:
        raise ValidationError("--every: must be a positive integer")

    def out_for(cfg):
        if args.output:
            return args.output
        if args.output_dir:
            return str(Path(args.output_dir) / f"{Path(cfg).stem}.csv")
        if len(configs) > 1:
            return f"{Path(cfg).stem}.csv"
        return None

    outs = [out_for(c) for c in configs]
    named = [o for o in outs if o]
    if len(set(named)) != len(named):
        raise ValidationError("sweep outputs collide; give configs distinct names")
    jobs = [(c, args.every, o) for c, o in zip(configs, outs)]
    if args.sweep and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    worst = EXIT_OK
    for cfg, out, err in results:
        if err is None:
            print(f"{cfg}: wrote {out}")
        else:
            cat, msg = err
            print(f"error[{cat}]: {cfg}: {msg}", file=sys.stderr)
            worst = max(worst, EXIT_VALIDATION if cat == "validation" else EXIT_NUMERICAL)
    return worst


def _vec_list(x) -> list:
    return [float(v) for v in np.asarray(x).ravel()]


def cmd_steady_state(args) -> int:
    sc = load_scenario(args.config)
    if sc.controller is None:
        raise ValidationError("controller.theta_star: required for steady-state")
    plant = sc.plant()
    th = sc.controller.theta_star
    maps = plant.maps
    i_s, v, i_t = dynamics.steady_electrical(th, plant)
    refs = opf.references_from_angles(th, plant.params.i_r_star, plant)
    flows = opf.to_network(refs, plant)
    report = {
        "model": plant.model,
        "theta_star_rad": _vec_list(th),
        "xi_star": _vec_list(network.emf(th, plant.params)),
        "i_s_star": _vec_list(i_s),
        "v_star": _vec_list(v),
        "i_t_star": _vec_list(i_t),
        "v_mag": _vec_list(flows.v_mag),
        "p_node_w": _vec_list(flows.p_node),
        "q_node_var": _vec_list(flows.q_node),
        "p_edge_w": _vec_list(flows.p_edge),
        "q_edge_var": _vec_list(flows.q_edge),
        "mechanical_power_w": network.steady_state_power_balance(maps, plant.params, th),
        "dissipation_w": network.steady_state_dissipation(maps, plant.params, th),
        "d_prime": _vec_list(maps.d_prime),
        "line_ratio_uniform": plant.params.uniform_line_ratio(),
    }
    text = json.dumps(report, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_check_damping(args) -> int:
    sc = load_scenario(args.config)
    law = args.law or (sc.controller.law if sc.controller else None)
    if law == "full_decentralized_approx":
        law = "full_decentralized_exact"
    if law not in stability.Q_LAWS:
        raise ValidationError(f"check-damping: law must be one of {stability.Q_LAWS}")
    params = sc.params
    if args.d_scale != 1.0:
        params = params.with_updates(D=params.D * args.d_scale, K_p=params.K_p * args.d_scale)
    plant = dynamics.Plant(sc.topology, params, stability._Q_MODEL[law])
    cert = stability.damping_condition(law, plant, args.points)
    print(cert.report())
    if args.require and not cert.holds:
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_translate_opf(args) -> int:
    sc = load_scenario(args.config)
    plant = sc.plant()
    n = plant.n
    tree = sc.raw
    sp = opf.OpfSetpoint.from_params(
        _vector(tree, "opf.p_star_w", n), _vector(tree, "opf.q_star_var", n),
        _vector(tree, "opf.v_mag_star_volt", n), plant.params,
        float(_get(tree, "opf.eta", 1.0)), float(_get(tree, "opf.alpha", 10.0)))
    refs = opf.translate(sp, plant)
    out = {
        "model": refs.model,
        "i_r_star_amp": _vec_list(refs.i_r_star),
        "theta_star_rad": _vec_list(refs.theta_star),
        "theta_star_deg": _vec_list(np.rad2deg(refs.theta_star)),
        "xi_star": _vec_list(refs.xi_star),
        "v_star": _vec_list(refs.v_star),
        "i_t_star": _vec_list(refs.i_t_star),
        "i_s_star": _vec_list(refs.i_s_star),
    }
    text = json.dumps(out, indent=2)
    path = args.output or sc.output.get("references")
    if path:
        Path(path).write_text(text + "\n")
        print(f"wrote {path}")
    else:
        print(text)
    return EXIT_OK


def cmd_loops(args) -> int:
    if args.nodes is None and args.config is None:
        raise ValidationError("loops: give --nodes N or a config")
    if args.config is not None:
        sc = load_scenario(args.config)
        topology, params = sc.topology, sc.params
        n = topology.n
    else:
        n = args.nodes
        topology, params = None, None
    total, classes = cycles.count_loop_minima(n)
    print(f"nodes: {n}")
    print(f"loop classes N: {total}")
    for c in classes:
        print(f"k={c.k:+d} angle_sum={c.angle_sum:.6f} {'feasible' if c.stable else 'infeasible'}")
    if args.search:
        if topology is None:
            from .scenarios import uniform_ring_params
            topology = network.Topology.ring(n)
            params = uniform_ring_params(n)
        eq = cycles.find_equilibria("S_E", topology, params, multistarts=args.multistarts)
        for e in eq:
            print(f"{e.kind} winding={cycles.winding_number(e.theta):+d} value={e.value:.10g} "
                  f"grad={e.grad_norm:.3e} theta=" + " ".join(f"{x:.6f}" for x in e.theta))
        print(f"minima found: {len(cycles.minima(eq))}")
    return EXIT_OK


def cmd_landscape(args) -> int:
    sc = load_scenario(args.config)
    theta_star = sc.controller.theta_star if sc.controller else None
    grid = cycles.sample_landscape(args.field, sc.topology, sc.params, theta_star, args.resolution)
    header = [f"theta_{k + 1}" for k in grid.axes] + ["value"]
    out = args.output or sc.output.get("landscape") or f"{sc.name}_{args.field}.csv"
    write_table(out, header, grid.rows())
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsync", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="integrate a closed loop and write the trajectory")
    p.add_argument("config", nargs="+")
    p.add_argument("--every", type=int, default=10, help="store one sample per N steps")
    p.add_argument("--output")
    p.add_argument("--output-dir")
    p.add_argument("--sweep", action="store_true", help="run the configs in parallel processes")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("steady-state", help="report the steady state at theta*")
    p.add_argument("config")
    p.add_argument("--output")
    p.set_defaults(func=cmd_steady_state)

    p = sub.add_parser("check-damping", help="damping certificate over the angle torus")
    p.add_argument("config")
    p.add_argument("--law", choices=stability.Q_LAWS)
    p.add_argument("--points", type=int)
    p.add_argument("--d-scale", type=float, default=1.0, help="scale D and K_p before the sweep")
    p.add_argument("--require", action="store_true", help="exit 4 when the certificate fails")
    p.set_defaults(func=cmd_check_damping)

    p = sub.add_parser("translate-opf", help="power-flow set-points to local references")
    p.add_argument("config")
    p.add_argument("--output")
    p.set_defaults(func=cmd_translate_opf)

    p = sub.add_parser("loops", help="loop classes and, optionally, equilibria search")
    p.add_argument("config", nargs="?")
    p.add_argument("--nodes", type=int)
    p.add_argument("--search", action="store_true")
    p.add_argument("--multistarts", type=int, default=256)
    p.set_defaults(func=cmd_loops)

    p = sub.add_parser("landscape", help="sample an energy field on the torus")
    p.add_argument("config")
    p.add_argument("--field", choices=cycles.FIELDS, default="S_bar")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--output")
    p.set_defaults(func=cmd_landscape)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, SingularMatrixError) as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GridSyncError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
