"""Dual gradient engine over a time-varying graph sequence.

Each step moves the stacked dual block by a weighted disagreement of the
current conjugate maximizers,

    w_i <- w_i - alpha_k * sum_{j in N_i} h_ij (x_i - x_j),

then refreshes x_i as the conjugate argmax at the new w_i; nodes without
neighbors take no action. The block sum of w is invariant, so an
initialization with sum w_i = c keeps every iterate on that affine set.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import graphs, oracle
from .errors import InvalidConfig

CSV_HEADER = "k,D,dual_gap,primal_err,feas_gap,F_gap"

DELTA_RULES = ("spectral", "conservative_Lhn", "laplacian_degree",
               "metropolis_two", "manual")


def _weight_builder(weights_kind, instance):
    if weights_kind == "laplacian":
        return graphs.laplacian_weights
    if weights_kind == "metropolis":
        lips = instance.lipschitz_per_node
        return lambda g: graphs.metropolis_weights(g, lips)
    raise InvalidConfig(f"unknown weights kind {weights_kind!r}")


def compute_delta(rule, instance, seq=None, weights_kind="laplacian",
                  manual=None) -> float:
    """Curvature bound delta for the step-size interval (0, 2/delta).

    spectral          L * sup_k (largest eigenvalue of the weight matrix)
    conservative_Lhn  L * h_upper * n
    laplacian_degree  min(L * sup_k lam_max(Laplacian),
                          2 * sup_k max_i deg_i L_i)   [Laplacian weights only]
    metropolis_two    2                                [Metropolis weights only]
    manual            caller-provided value
    """
    big_l = instance.lipschitz
    if rule == "manual":
        if manual is None or manual <= 0:
            raise InvalidConfig("manual delta rule requires a positive value")
        return float(manual)
    if rule == "metropolis_two":
        if weights_kind != "metropolis":
            raise InvalidConfig("metropolis_two requires Metropolis weights")
        return 2.0
    if seq is None:
        raise InvalidConfig(f"delta rule {rule!r} requires a graph sequence")
    build = _weight_builder(weights_kind, instance)
    if rule == "conservative_Lhn":
        h_upper = max(build(g).h_upper for g in _distinct(seq))
        return float(big_l * h_upper * seq.n)
    if rule == "spectral":
        lam = max(graphs.spectral_radius(build(g)) for g in _distinct(seq))
        return float(big_l * lam)
    if rule == "laplacian_degree":
        if weights_kind != "laplacian":
            raise InvalidConfig("laplacian_degree requires Laplacian weights")
        lips = instance.lipschitz_per_node
        lam = 0.0
        deg_term = 0.0
        for g in _distinct(seq):
            lam = max(lam, graphs.spectral_radius(graphs.laplacian_weights(g)))
            deg_term = max(deg_term, float(np.max(g.degrees() * lips)))
        return float(min(big_l * lam, 2.0 * deg_term))
    raise InvalidConfig(f"unknown delta rule {rule!r}")


def _distinct(seq):
    seen = set()
    for g in seq.snapshots:
        if g.edges not in seen:
            seen.add(g.edges)
            yield g


@dataclass
class StepSizePolicy:
    """Admissible step-size schedule: every emitted alpha_k lies in
    [alpha_min, alpha_max], a subset of (0, 2/delta).

    ``schedule`` is either ("constant", c) emitting alpha_max*c with
    c in (0, 1], or ("sequence", array) with the per-step values.
    ``enforce=False`` skips the admissibility checks (used only to
    reproduce empirically tuned, out-of-theory step sizes).
    """

    delta: float
    alpha_min: float
    alpha_max: float
    schedule: tuple = ("constant", 1.0)
    delta_rule: str = "manual"
    enforce: bool = True

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidConfig("delta must be positive")
        if not (0 < self.alpha_min <= self.alpha_max):
            raise InvalidConfig("need 0 < alpha_min <= alpha_max")
        if self.enforce and self.alpha_max >= 2.0 / self.delta:
            raise InvalidConfig(
                f"alpha_max={self.alpha_max} violates the (0, 2/delta) bound "
                f"with delta={self.delta}")
        kind = self.schedule[0]
        if kind == "constant":
            c = self.schedule[1]
            if not (0 < c <= 1):
                raise InvalidConfig("constant schedule factor must be in (0, 1]")
            if self.alpha_max * c < self.alpha_min - 1e-15:
                raise InvalidConfig("constant step falls below alpha_min")
        elif kind == "sequence":
            arr = np.asarray(self.schedule[1], dtype=float)
            if self.enforce and (np.any(arr < self.alpha_min - 1e-15)
                                 or np.any(arr > self.alpha_max + 1e-15)):
                raise InvalidConfig("sequence leaves [alpha_min, alpha_max]")
        else:
            raise InvalidConfig(f"unknown schedule kind {kind!r}")

    def alpha(self, k) -> float:
        kind, val = self.schedule
        if kind == "constant":
            return self.alpha_max * val
        if k >= len(val):
            raise InvalidConfig(f"step schedule exhausted at k={k}")
        return float(val[k])

    @property
    def rho(self) -> float:
        """Per-step descent coefficient min over the interval endpoints of
        alpha - alpha^2 delta / 2."""
        lo, hi = self.alpha_min, self.alpha_max
        return min(lo - lo * lo * self.delta / 2.0,
                   hi - hi * hi * self.delta / 2.0)

    def validate(self, instance, seq, weights_kind, max_checks=None):
        """Check the curvature condition (weight matrix <= delta * inv(L) diag)
        on the sequence's distinct snapshots by a minimum-eigenvalue test.

        Analytic rules (metropolis_two, conservative_Lhn, laplacian_degree,
        spectral-from-this-sequence) guarantee it; the numeric check guards
        manual deltas and mismatched sequences. ``max_checks`` caps the
        work for very large n (default: unlimited for n <= 100, else 100).
        """
        if not self.enforce:
            return
        if max_checks is None:
            max_checks = None if seq.n <= 100 else 100
        build = _weight_builder(weights_kind, instance)
        inv_lam = np.diag(1.0 / instance.lipschitz_per_node)
        checked = 0
        for g in _distinct(seq):
            gap = self.delta * inv_lam - build(g).matrix
            if np.linalg.eigvalsh(gap)[0] < -graphs.PSD_TOL:
                raise InvalidConfig(
                    f"delta={self.delta} violates the curvature bound on a "
                    f"snapshot with edges {g.edges[:4]}...")
            checked += 1
            if max_checks is not None and checked >= max_checks:
                break


def constant_policy(delta, alpha, delta_rule="manual", enforce=True):
    """Policy emitting one fixed step size."""
    return StepSizePolicy(delta, alpha, alpha, ("constant", 1.0),
                          delta_rule, enforce)


def default_policy(weights_kind, instance, seq) -> StepSizePolicy:
    """The descent-optimal constant step 1/delta for the standard rules:
    Metropolis -> delta=2, alpha=1/2; Laplacian -> delta=L*n, alpha=1/(Ln)."""
    if weights_kind == "metropolis":
        delta = compute_delta("metropolis_two", instance,
                              weights_kind="metropolis")
        rule = "metropolis_two"
    else:
        delta = compute_delta("conservative_Lhn", instance, seq, "laplacian")
        rule = "conservative_Lhn"
    return constant_policy(delta, 1.0 / delta, rule)


@dataclass
class SolverState:
    """Dual and primal blocks for all agents at step k."""

    k: int
    w: np.ndarray
    x: np.ndarray
    resource_target: np.ndarray

    def dual_feasibility_violation(self) -> float:
        """|| sum_i w_i - c || / (1 + max_i ||w_i||)."""
        drift = np.linalg.norm(self.w.sum(axis=0) - self.resource_target)
        return float(drift / (1.0 + np.max(np.linalg.norm(self.w, axis=1))))


def init_state(instance, kind="zeros", seed=None, target=None,
               tol=oracle.DEFAULT_TOL) -> SolverState:
    """Initial state with block sum of w equal to the resource target
    (zero unless ``kind='random_sum_c'`` supplies ``target``)."""
    n, d = instance.n, instance.dim
    c = np.zeros(d) if target is None else np.asarray(target, dtype=float)
    if kind == "zeros":
        if np.any(c != 0):
            raise InvalidConfig("zeros init requires a zero resource target")
        w = np.zeros((n, d))
    elif kind == "random_sum_c":
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((n, d))
        w -= w.mean(axis=0)
        w += c / n
    else:
        raise InvalidConfig(f"unknown init kind {kind!r}")
    x = oracle.batch_conjugate_argmax(instance, w, tol)
    return SolverState(0, w, x, c)


def step(state: SolverState, snapshot, wm, alpha, instance,
         tol=oracle.DEFAULT_TOL) -> SolverState:
    """One dual update w -= alpha * H x followed by the conjugate refresh;
    nodes with no current neighbors keep both iterates."""
    if state.x.shape != (instance.n, instance.dim):
        raise ValueError("state/instance dimension mismatch")
    h = wm.matrix
    w_new = state.w - alpha * (h @ state.x)
    active = snapshot.degrees() > 0
    x_new = oracle.batch_conjugate_argmax(instance, w_new, tol,
                                          x0=state.x, active=active)
    return SolverState(state.k + 1, w_new, x_new, state.resource_target)


@dataclass
class MetricsRecord:
    k: int
    dual_value: float
    dual_gap: float
    primal_error: float       # stacked ||x - x_star||
    primal_error_avg: float   # (1/n) sum_i ||x_i - x_star||
    feasibility_gap: float
    objective_gap: float


@dataclass
class RunResult:
    records: list
    state: SolverState
    w_norms: list                 # stacked ||w|| per record
    checkpoints: dict             # k -> w copy at window boundaries
    diagnostics: dict
    meta: dict = field(default_factory=dict)


def dual_value(instance, w, tol=oracle.DEFAULT_TOL) -> float:
    """D(w) = sum_i d_i(w_i) via fresh conjugate oracle calls."""
    w = np.asarray(w, dtype=float)
    x = oracle.batch_conjugate_argmax(instance, w, tol)
    return float(np.einsum("ij,ij->", w, x)
                 - np.sum(oracle.batch_objective(instance, x)))


def consensus_projection(x):
    """Deviation of each block from the across-node mean, stacked (n, d)."""
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=0)


def feasibility_gap(x) -> float:
    """|| P_{S_perp}(x) || = sqrt(sum_i ||x_i - mean||^2)."""
    return float(np.linalg.norm(consensus_projection(x)))


def edge_disagreement(x, snapshot) -> float:
    return max(float(np.linalg.norm(x[i] - x[j])) for i, j in snapshot.edges)


def run(instance, seq, weights_kind, policy, init="zeros", horizon=None,
        record_every=1, reference=None, oracle_tol=oracle.DEFAULT_TOL,
        init_seed=None, resource_target=None, check_descent=False,
        descent_slack=1e-8) -> RunResult:
    """Run the dual gradient method for ``horizon`` steps over ``seq``.

    Records metrics at k=0, every ``record_every`` steps, and the final
    step. With a ``reference`` (from the certification layer) gaps are
    against x_star / F_star / D_star; otherwise the dual gap is against
    the best dual value seen over the whole run and primal errors are
    against the block mean of the final iterate (fallback only, noted in
    the result meta).

    Dual iterates are checkpointed at every multiple of the sequence
    window for rate certification. Diagnostics track the worst dual
    feasibility drift, descent slack, and the final edge disagreement.
    """
    if horizon is None:
        horizon = len(seq)
    if horizon > len(seq):
        raise InvalidConfig("horizon exceeds materialized sequence length")
    policy.validate(instance, seq, weights_kind)
    build = _weight_builder(weights_kind, instance)
    wm_cache = {}

    state = init_state(instance, init, seed=init_seed, target=resource_target,
                       tol=oracle_tol)
    window = seq.window
    rho = policy.rho

    rec_ks = []
    raw = []          # (k, D, x, w_norm, feas) snapshots for recorded steps
    checkpoints = {}
    worst_feas_drift = 0.0
    worst_descent = -np.inf
    worst_monotone = -np.inf
    d_prev = None
    quad_prev = None

    def dual_of(state):
        return float(np.einsum("ij,ij->", state.w, state.x)
                     - np.sum(oracle.batch_objective(instance, state.x)))

    for k in range(horizon + 1):
        d_now = dual_of(state)
        worst_feas_drift = max(worst_feas_drift,
                               state.dual_feasibility_violation())
        if d_prev is not None:
            worst_monotone = max(worst_monotone, d_now - d_prev)
            worst_descent = max(worst_descent,
                                d_now - d_prev + rho * quad_prev)
            if check_descent and d_now - d_prev + rho * quad_prev > descent_slack:
                raise AssertionError(
                    f"descent violated at k={k}: "
                    f"{d_now - d_prev + rho * quad_prev:.3e}")
        if k % window == 0:
            checkpoints[k] = state.w.copy()
        if k % record_every == 0 or k == horizon:
            rec_ks.append(k)
            raw.append((k, d_now, state.x.copy(),
                        float(np.linalg.norm(state.w)),
                        feasibility_gap(state.x)))
        if k == horizon:
            break
        g = seq[k]
        wm = wm_cache.get(g.edges)
        if wm is None:
            wm = build(g)
            wm_cache[g.edges] = wm
        quad_prev = float(np.einsum("ij,ij->", wm.matrix @ state.x, state.x))
        d_prev = d_now
        state = step(state, g, wm, policy.alpha(k), instance, tol=oracle_tol)

    checkpoints[horizon] = state.w.copy()
    records, w_norms = _build_records(instance, raw, reference)
    final_snap = seq[horizon] if len(seq) > horizon else seq[horizon - 1]
    diagnostics = {
        "max_dual_feasibility_violation": worst_feas_drift,
        "worst_descent_slack": worst_descent,
        "worst_monotonicity": worst_monotone,
        "final_edge_disagreement": edge_disagreement(state.x, final_snap),
        "rho": rho,
    }
    meta = {"weights_kind": weights_kind, "horizon": horizon,
            "record_every": record_every, "window": window,
            "has_reference": reference is not None,
            "alpha_min": policy.alpha_min, "alpha_max": policy.alpha_max,
            "delta": policy.delta, "oracle_tol": oracle_tol}
    return RunResult(records, state, w_norms, checkpoints, diagnostics, meta)


def _build_records(instance, raw, reference):
    n = instance.n
    if reference is not None:
        x_star = reference.x_star
        d_star = reference.d_star
        f_star = reference.f_star
    else:
        x_star = raw[-1][2].mean(axis=0)
        d_star = min(r[1] for r in raw)
        f_star = min(oracle.total_objective(instance, r[2]) for r in raw)
    records = []
    w_norms = []
    for k, d_now, x, w_norm, feas in raw:
        diff = x - x_star[None, :]
        per_node = np.linalg.norm(diff, axis=1)
        records.append(MetricsRecord(
            k=k,
            dual_value=d_now,
            dual_gap=d_now - d_star,
            primal_error=float(np.linalg.norm(diff)),
            primal_error_avg=float(per_node.mean()),
            feasibility_gap=feas,
            objective_gap=oracle.total_objective(instance, x) - f_star,
        ))
        w_norms.append(w_norm)
    return records, w_norms


def write_csv(records, path):
    """Atomic CSV emission, one row per record, 17-significant-digit
    decimals. The primal_err column reports the network-average error
    (mean over nodes of ||x_i - x_star||)."""
    g = lambda v: f"{v:.17g}"
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([str(r.k), g(r.dual_value), g(r.dual_gap),
                               g(r.primal_error_avg), g(r.feasibility_gap),
                               g(r.objective_gap)]))
    payload = "\n".join(lines) + "\n"
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp_csv_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path):
    """Parse a metrics CSV back into (k, D, dual_gap, primal_err, feas_gap,
    F_gap) float tuples."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    out = []
    for ln in lines[1:]:
        toks = ln.split(",")
        out.append((int(toks[0]),) + tuple(float(t) for t in toks[1:]))
    return out
