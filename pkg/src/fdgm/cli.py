"""Scenario-driven command line: preset experiments, deterministic runs,
CSV metrics, and certification reports.

Exit codes: 0 success, 2 validation error, 3 oracle failure,
4 certification failure.
"""

from __future__ import annotations

import argparse
import configparser
import copy
import io
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, certify, graphs, oracle, solver
from .errors import (CertificationUnavailable, InfeasibleWindow,
                     InvalidConfig, OracleFailure)


@dataclass
class AlgorithmSpec:
    name: str
    kind: str                 # fdgm | subgrad | diging
    weights: str = ""         # fdgm: laplacian | metropolis
    delta_rule: str = ""      # fdgm: see solver.compute_delta
    step: object = "auto"     # fdgm: numeric alpha, or "auto" for 1/delta
    step_rule: str = "diminishing"   # baselines
    step_a: float = 1.0
    allow_unsafe: bool = False       # skip step admissibility (empirical runs)


@dataclass
class ScenarioConfig:
    name: str
    instance: dict = field(default_factory=dict)   # or {"file": path}
    graph: dict = field(default_factory=dict)      # or {"file": path}
    algorithms: list = field(default_factory=list)
    record_every: int = 10
    certify: bool = False
    init_kind: str = "zeros"
    init_seed: int = 0
    init_c: tuple = ()
    description: str = ""


def _fig1_algos(with_degree_rule=True):
    algos = [
        AlgorithmSpec("metropolis", "fdgm", "metropolis", "metropolis_two"),
        AlgorithmSpec("laplacian", "fdgm", "laplacian", "conservative_Lhn"),
        AlgorithmSpec("subgrad", "subgrad", step_rule="diminishing", step_a=1.0),
    ]
    if with_degree_rule:
        algos.insert(2, AlgorithmSpec("laplacian_degree", "fdgm", "laplacian",
                                      "laplacian_degree"))
    return algos


def _fig1(name, n, b, theta, with_degree_rule=True):
    return ScenarioConfig(
        name=name,
        instance={"n": n, "d": 5, "theta_lo": theta[0], "theta_hi": theta[1],
                  "gamma": 1.0 / n, "box_lo": 0.5, "box_hi": 1.5,
                  "b_lo": -1.0, "b_hi": 1.0, "seed": 42},
        graph={"kind": "windowed_tree", "B": b, "horizon": 10000, "seed": 43,
               "activation": 0.8, "extra_edges": n},
        algorithms=_fig1_algos(with_degree_rule),
        record_every=10, certify=False,
        description=f"constrained l1 problem, n={n}, B={b}, "
                    f"theta in ({theta[0]},{theta[1]})")


def _fig2(name, metropolis_step, description):
    return ScenarioConfig(
        name=name,
        instance={"n": 50, "d": 5, "theta_lo": 2.0, "theta_hi": 3.0,
                  "gamma": 0.0, "box_lo": None, "box_hi": None,
                  "b_lo": -1.0, "b_hi": 1.0, "seed": 42},
        graph={"kind": "windowed_tree", "B": 10, "horizon": 1000, "seed": 43},
        algorithms=[
            AlgorithmSpec("metropolis", "fdgm", "metropolis", "metropolis_two",
                          step=metropolis_step,
                          allow_unsafe=(metropolis_step != "auto"
                                        and metropolis_step >= 1.0)),
            AlgorithmSpec("laplacian", "fdgm", "laplacian", "conservative_Lhn"),
            AlgorithmSpec("diging", "diging", step_rule="constant", step_a=0.05),
        ],
        record_every=10, certify=False, description=description)


def build_presets():
    presets = {
        "fig1a": _fig1("fig1a", 50, 10, (2.0, 3.0)),
        "fig1b": _fig1("fig1b", 500, 10, (2.0, 3.0), with_degree_rule=False),
        "fig1c": _fig1("fig1c", 50, 10, (0.2, 0.4)),
        "fig1d": _fig1("fig1d", 50, 50, (2.0, 3.0)),
        "fig1e": _fig1("fig1e", 500, 50, (2.0, 3.0), with_degree_rule=False),
        "fig1f": _fig1("fig1f", 50, 10, (5.0, 10.0)),
        "fig2a": _fig2("fig2a", "auto",
                       "unconstrained quadratic, admissible step sizes"),
        "fig2b": _fig2("fig2b", 1.7,
                       "unconstrained quadratic, empirically tuned steps"),
        "reduced-cert": ScenarioConfig(
            name="reduced-cert",
            instance={"n": 20, "d": 5, "theta_lo": 2.0, "theta_hi": 3.0,
                      "gamma": 0.05, "box_lo": 0.5, "box_hi": 1.5,
                      "b_lo": -1.0, "b_hi": 1.0, "seed": 42},
            graph={"kind": "windowed_tree", "B": 5, "horizon": 2000,
                   "seed": 43},
            algorithms=[AlgorithmSpec("metropolis", "fdgm", "metropolis",
                                      "metropolis_two")],
            record_every=10, certify=True,
            description="small certification scenario (rate bounds checked)"),
        "gossip-demo": ScenarioConfig(
            name="gossip-demo",
            instance={"n": 10, "d": 3, "theta_lo": 2.0, "theta_hi": 3.0,
                      "gamma": 0.1, "box_lo": 0.5, "box_hi": 1.5,
                      "b_lo": -1.0, "b_hi": 1.0, "seed": 42},
            graph={"kind": "gossip", "B": 9, "horizon": 5000, "seed": 43},
            algorithms=[
                AlgorithmSpec("laplacian_gossip", "fdgm", "laplacian",
                              "spectral"),
                AlgorithmSpec("subgrad", "subgrad"),
            ],
            record_every=10, certify=False,
            description="one-edge-per-step gossip interactions"),
        "resource-allocation-demo": ScenarioConfig(
            name="resource-allocation-demo",
            instance={"n": 10, "d": 3, "theta_lo": 2.0, "theta_hi": 3.0,
                      "gamma": 0.0, "box_lo": 1.0, "box_hi": 2.0,
                      "b_lo": -1.0, "b_hi": 1.0, "seed": 42},
            graph={"kind": "windowed_tree", "B": 5, "horizon": 3000,
                   "seed": 43},
            algorithms=[AlgorithmSpec("metropolis", "fdgm", "metropolis",
                                      "metropolis_two")],
            record_every=10, certify=False,
            init_kind="random_sum_c", init_seed=7, init_c=(1.0, 0.0, 0.0),
            description="dual block sum pinned to a nonzero resource target"),
    }
    return presets


def load_config(path) -> ScenarioConfig:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise InvalidConfig(f"cannot read config file {path}")
    sc = ScenarioConfig(name=cp.get("scenario", "name", fallback="custom"))
    sc.record_every = cp.getint("scenario", "record_every", fallback=10)
    sc.certify = cp.getboolean("scenario", "certify", fallback=False)
    sc.init_kind = cp.get("scenario", "init_kind", fallback="zeros")
    sc.init_seed = cp.getint("scenario", "init_seed", fallback=0)
    if cp.has_option("scenario", "init_c"):
        sc.init_c = tuple(float(t) for t in
                          cp.get("scenario", "init_c").split(","))
    if cp.has_option("instance", "file"):
        sc.instance = {"file": cp.get("instance", "file")}
    else:
        g = cp.get("instance", "box_lo", fallback="none")
        sc.instance = {
            "n": cp.getint("instance", "n"),
            "d": cp.getint("instance", "d"),
            "theta_lo": cp.getfloat("instance", "theta_lo"),
            "theta_hi": cp.getfloat("instance", "theta_hi"),
            "gamma": cp.getfloat("instance", "gamma", fallback=0.0),
            "box_lo": None if g == "none" else float(g),
            "box_hi": None if g == "none" else cp.getfloat("instance", "box_hi"),
            "b_lo": cp.getfloat("instance", "b_lo", fallback=-1.0),
            "b_hi": cp.getfloat("instance", "b_hi", fallback=1.0),
            "seed": cp.getint("instance", "seed"),
        }
    if cp.has_option("graph", "file"):
        sc.graph = {"file": cp.get("graph", "file")}
    else:
        sc.graph = {
            "kind": cp.get("graph", "kind"),
            "B": cp.getint("graph", "B"),
            "horizon": cp.getint("graph", "horizon"),
            "seed": cp.getint("graph", "seed"),
        }
        if cp.has_option("graph", "activation"):
            sc.graph["activation"] = cp.getfloat("graph", "activation")
        if cp.has_option("graph", "extra_edges"):
            sc.graph["extra_edges"] = cp.getint("graph", "extra_edges")
    for section in cp.sections():
        if not section.startswith("algorithm."):
            continue
        name = section.split(".", 1)[1]
        step = cp.get(section, "step", fallback="auto")
        spec = AlgorithmSpec(
            name=name,
            kind=cp.get(section, "kind"),
            weights=cp.get(section, "weights", fallback=""),
            delta_rule=cp.get(section, "delta_rule", fallback=""),
            step="auto" if step == "auto" else float(step),
            step_rule=cp.get(section, "step_rule", fallback="diminishing"),
            step_a=cp.getfloat(section, "step_a", fallback=1.0),
            allow_unsafe=cp.getboolean(section, "allow_unsafe", fallback=False),
        )
        sc.algorithms.append(spec)
    if not sc.algorithms:
        raise InvalidConfig(f"{path}: no [algorithm.*] sections")
    return sc


def resolved_config_text(sc: ScenarioConfig) -> str:
    cp = configparser.ConfigParser()
    cp["scenario"] = {"name": sc.name, "record_every": str(sc.record_every),
                      "certify": str(sc.certify).lower(),
                      "init_kind": sc.init_kind,
                      "init_seed": str(sc.init_seed)}
    if sc.init_c:
        cp["scenario"]["init_c"] = ",".join(f"{v:.17g}" for v in sc.init_c)
    inst = {}
    for key, val in sc.instance.items():
        inst[key] = "none" if val is None else str(val)
    cp["instance"] = inst
    cp["graph"] = {k: str(v) for k, v in sc.graph.items()}
    for spec in sc.algorithms:
        sec = f"algorithm.{spec.name}"
        cp[sec] = {"kind": spec.kind}
        if spec.kind == "fdgm":
            cp[sec]["weights"] = spec.weights
            cp[sec]["delta_rule"] = spec.delta_rule
            cp[sec]["step"] = str(spec.step)
            cp[sec]["allow_unsafe"] = str(spec.allow_unsafe).lower()
        else:
            cp[sec]["step_rule"] = spec.step_rule
            cp[sec]["step_a"] = str(spec.step_a)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def validate_scenario(sc: ScenarioConfig):
    if "file" not in sc.instance:
        if sc.instance.get("n", 0) < 2:
            raise InvalidConfig("instance.n must be >= 2")
        if not (0 < sc.instance["theta_lo"] < sc.instance["theta_hi"]):
            raise InvalidConfig("instance.theta_lo/theta_hi must satisfy 0 < lo < hi")
    if "file" not in sc.graph:
        if sc.graph.get("B", 0) < 1:
            raise InvalidConfig("graph.B must be >= 1")
        if sc.graph.get("horizon", 0) < 1:
            raise InvalidConfig("graph.horizon must be >= 1")
    if sc.record_every < 1:
        raise InvalidConfig("scenario.record_every must be >= 1")
    for spec in sc.algorithms:
        if spec.kind not in ("fdgm", "subgrad", "diging"):
            raise InvalidConfig(f"algorithm.{spec.name}.kind unknown: {spec.kind}")
        if spec.kind == "fdgm":
            if spec.weights not in ("laplacian", "metropolis"):
                raise InvalidConfig(
                    f"algorithm.{spec.name}.weights must be laplacian|metropolis")
            if spec.delta_rule not in solver.DELTA_RULES:
                raise InvalidConfig(
                    f"algorithm.{spec.name}.delta_rule unknown: {spec.delta_rule}")


def build_instance(sc: ScenarioConfig) -> oracle.ProblemInstance:
    if "file" in sc.instance:
        return oracle.read_instance(sc.instance["file"])
    p = sc.instance
    box = None if p["box_lo"] is None else (p["box_lo"], p["box_hi"])
    return oracle.generate_instance(p["n"], p["d"], (p["theta_lo"], p["theta_hi"]),
                                    box_range=box, b_range=(p["b_lo"], p["b_hi"]),
                                    gamma=p["gamma"], seed=p["seed"])


def build_sequence(sc: ScenarioConfig, n) -> graphs.GraphSequence:
    if "file" in sc.graph:
        return graphs.read_sequence(sc.graph["file"])
    g = sc.graph
    kwargs = {}
    if "activation" in g:
        kwargs["activation_prob"] = g["activation"]
    if "extra_edges" in g:
        kwargs["extra_edges"] = g["extra_edges"]
    return graphs.generate_sequence(g["kind"], n, g["B"], g["horizon"],
                                    g["seed"], **kwargs)


def make_policy(spec: AlgorithmSpec, instance, seq) -> solver.StepSizePolicy:
    delta = solver.compute_delta(spec.delta_rule, instance, seq, spec.weights)
    alpha = 1.0 / delta if spec.step == "auto" else float(spec.step)
    return solver.constant_policy(delta, alpha, spec.delta_rule,
                                  enforce=not spec.allow_unsafe)


def _atomic_write(path, payload):
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp_out_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def execute(sc: ScenarioConfig, out_dir, horizon=None, record_every=None,
            seed=None, force_certify=False, log=print):
    """Run every algorithm spec of a scenario; returns (exit_code, outputs)."""
    sc = copy.deepcopy(sc)
    if seed is not None:
        if "file" not in sc.instance:
            sc.instance = dict(sc.instance, seed=seed)
        if "file" not in sc.graph:
            sc.graph = dict(sc.graph, seed=seed + 1)
        sc.init_seed = seed + 2
    if record_every is not None:
        sc.record_every = record_every
    if horizon is not None and "file" not in sc.graph:
        sc.graph = dict(sc.graph, horizon=horizon)
    if force_certify:
        sc.certify = True
    validate_scenario(sc)
    if sc.certify and sc.init_c:
        raise InvalidConfig("certification is unavailable with a nonzero "
                            "resource target (scenario.init_c)")

    os.makedirs(out_dir, exist_ok=True)
    instance = build_instance(sc)
    seq = build_sequence(sc, instance.n)
    run_horizon = horizon if horizon is not None else len(seq)
    if run_horizon > len(seq):
        raise InvalidConfig("horizon exceeds the materialized graph sequence")
    b = seq.window
    check_h = run_horizon - run_horizon % b
    if check_h >= b and not graphs.verify_b_connectivity(seq, b, check_h):
        raise InvalidConfig("graph sequence is not B-connected over the horizon")

    # centralized gaps do not apply in resource-allocation mode
    reference = None if sc.init_c else certify.solve_centralized(instance)

    _atomic_write(os.path.join(out_dir, "config.resolved"),
                  resolved_config_text(sc))

    outputs = []
    fdgm_results = []
    target = np.array(sc.init_c) if sc.init_c else None
    for spec in sc.algorithms:
        csv_path = os.path.join(out_dir, f"{sc.name}_{spec.name}.csv")
        if spec.kind == "fdgm":
            policy = make_policy(spec, instance, seq)
            result = solver.run(instance, seq, spec.weights, policy,
                                init=sc.init_kind, horizon=run_horizon,
                                record_every=sc.record_every,
                                reference=reference, init_seed=sc.init_seed,
                                resource_target=target)
            fdgm_results.append((spec, policy, result))
        else:
            cfg = baselines.BaselineConfig(
                "subgrad_projection" if spec.kind == "subgrad" else "diging",
                spec.step_rule, spec.step_a)
            result = baselines.run(instance, seq, cfg, horizon=run_horizon,
                                   record_every=sc.record_every,
                                   reference=reference)
        solver.write_csv(result.records, csv_path)
        outputs.append(csv_path)
        log(f"wrote {csv_path}")

    if sc.certify:
        if not fdgm_results:
            raise InvalidConfig("certification requires at least one fdgm run")
        lines = []
        ok = True
        for spec, policy, result in fdgm_results:
            if not policy.enforce:
                continue    # empirical step sizes are outside the guarantees
            w_star = certify.estimate_dual_optimum(
                instance, seq, spec.weights, policy, steps=10 * run_horizon)
            ref = replace(reference, w_star_estimate=w_star)
            constants = certify.theory_constants(policy, seq, instance,
                                                 result, ref)
            report = certify.check_rate_bounds(result, constants, ref, instance)
            lines.append(f"[{spec.name}]")
            lines.append(report.format())
            ok = ok and report.passed
        report_path = os.path.join(out_dir, "certification.txt")
        _atomic_write(report_path, "\n".join(lines))
        outputs.append(report_path)
        log(f"wrote {report_path}")
        if not ok:
            return 4, outputs
    return 0, outputs


def cmd_scenarios(presets):
    for name, sc in sorted(presets.items()):
        print(f"{name:<26s} {sc.description}")
    return 0


def _scenario_from_args(args, presets):
    if args.preset:
        if args.preset not in presets:
            raise InvalidConfig(f"unknown preset {args.preset!r} "
                                f"(see `fdgm scenarios`)")
        return presets[args.preset]
    if args.config:
        return load_config(args.config)
    raise InvalidConfig("one of --preset or --config is required")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fdgm",
        description="distributed dual gradient simulator and certifier")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run", "verify"):
        p = sub.add_parser(cmd)
        p.add_argument("--preset", default=None)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--record-every", type=int, default=None)
    sub.add_parser("scenarios")
    args = parser.parse_args(argv)

    presets = build_presets()
    if args.command == "scenarios":
        return cmd_scenarios(presets)
    try:
        sc = _scenario_from_args(args, presets)
        code, _ = execute(sc, args.out, horizon=args.horizon,
                          record_every=args.record_every, seed=args.seed,
                          force_certify=(args.command == "verify"))
        return code
    except (InvalidConfig, InfeasibleWindow, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OracleFailure as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return 3
    except CertificationUnavailable as exc:
        print(f"certification unavailable: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
