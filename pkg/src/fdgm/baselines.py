"""Comparison methods sharing the graph sequence and metrics pipeline:
consensus-based subgradient projection and gradient tracking (DIGing)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle, solver
from .errors import InvalidConfig


@dataclass
class BaselineConfig:
    """kind: 'subgrad_projection' (diminishing a/k or constant a steps)
    or 'diging' (constant step; needs an unconstrained smooth instance)."""

    kind: str
    step_rule: str = "diminishing"   # diminishing -> a/(k+1), constant -> a
    step_a: float = 1.0

    def validate(self, instance):
        if self.kind not in ("subgrad_projection", "diging"):
            raise InvalidConfig(f"unknown baseline kind {self.kind!r}")
        if self.step_rule not in ("diminishing", "constant"):
            raise InvalidConfig(f"unknown step rule {self.step_rule!r}")
        if self.step_a <= 0:
            raise InvalidConfig("step_a must be positive")
        if self.kind == "diging":
            if self.step_rule != "constant":
                raise InvalidConfig("diging uses a constant step size")
            if any(lp.l1_weight != 0 for lp in instance.locals):
                raise InvalidConfig("diging requires a smooth instance (no l1 term)")
            if not instance.is_unconstrained:
                raise InvalidConfig("diging requires an unconstrained instance")

    def alpha(self, k):
        if self.step_rule == "constant":
            return self.step_a
        return self.step_a / (k + 1)


def mixing_matrix(snapshot) -> np.ndarray:
    """Symmetric doubly stochastic Metropolis-Hastings weights:
    1/(1 + max(deg_i, deg_j)) on edges, diagonal absorbs the remainder."""
    n = snapshot.n
    deg = snapshot.degrees()
    w = np.zeros((n, n))
    for i, j in snapshot.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def subgrad_step(x, snapshot, alpha_k, instance) -> np.ndarray:
    """Local unweighted averaging followed by a projected subgradient move."""
    n = snapshot.n
    v = x.copy()
    for i in range(n):
        nbrs = snapshot.neighbors(i)
        if nbrs:
            v[i] = (x[i] + x[list(nbrs)].sum(axis=0)) / (len(nbrs) + 1)
    g = oracle.batch_subgradient(instance, v)
    s = instance.stacked()
    return np.clip(v - alpha_k * g, s["lower"], s["upper"])


def diging_step(x, y, snapshot, alpha, instance):
    """One gradient-tracking iteration: x' = Wx - alpha*y,
    y' = Wy + grad(x') - grad(x)."""
    w = mixing_matrix(snapshot)
    x_new = w @ x - alpha * y
    y_new = w @ y + oracle.batch_smooth_gradient(instance, x_new) \
        - oracle.batch_smooth_gradient(instance, x)
    return x_new, y_new


def run(instance, seq, config: BaselineConfig, horizon=None, record_every=1,
        reference=None, x0=None) -> solver.RunResult:
    """Run a baseline over the sequence with the shared metrics schema.

    Baselines carry no dual iterates: the D and dual_gap columns are NaN.
    ``x0`` defaults to the same initial primal iterate as the dual method
    (the conjugate argmax at w = 0).
    """
    config.validate(instance)
    if horizon is None:
        horizon = len(seq)
    if horizon > len(seq):
        raise InvalidConfig("horizon exceeds materialized sequence length")
    n, d = instance.n, instance.dim
    x = np.array(x0, dtype=float) if x0 is not None else \
        oracle.batch_conjugate_argmax(instance, np.zeros((n, d)))
    y = oracle.batch_smooth_gradient(instance, x) if config.kind == "diging" \
        else None

    raw = []
    for k in range(horizon + 1):
        if k % record_every == 0 or k == horizon:
            raw.append((k, x.copy()))
        if k == horizon:
            break
        if config.kind == "subgrad_projection":
            x = subgrad_step(x, seq[k], config.alpha(k), instance)
        else:
            x, y = diging_step(x, y, seq[k], config.alpha(k), instance)

    if reference is not None:
        x_star, f_star = reference.x_star, reference.f_star
    else:
        x_star = raw[-1][1].mean(axis=0)
        f_star = min(oracle.total_objective(instance, xx) for _, xx in raw)
    records = []
    for k, xx in raw:
        diff = xx - x_star[None, :]
        records.append(solver.MetricsRecord(
            k=k, dual_value=float("nan"), dual_gap=float("nan"),
            primal_error=float(np.linalg.norm(diff)),
            primal_error_avg=float(np.linalg.norm(diff, axis=1).mean()),
            feasibility_gap=solver.feasibility_gap(xx),
            objective_gap=oracle.total_objective(instance, xx) - f_star,
        ))
    final_snap = seq[horizon] if len(seq) > horizon else seq[horizon - 1]
    state = solver.SolverState(horizon, np.zeros((n, d)), x, np.zeros(d))
    diagnostics = {
        "final_edge_disagreement": solver.edge_disagreement(x, final_snap)}
    meta = {"baseline": config.kind, "horizon": horizon,
            "record_every": record_every, "step_rule": config.step_rule,
            "step_a": config.step_a}
    return solver.RunResult(records, state, [float("nan")] * len(records),
                            {}, diagnostics, meta)
