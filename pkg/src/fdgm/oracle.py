"""Per-agent objectives and their constrained Fenchel conjugate oracle.

Each agent holds a box-constrained quadratic-plus-l1 objective

    f(x) = x'Ax + b'x + gamma*||x||_1   over   [lower, upper],

with A symmetric positive definite. The conjugate oracle evaluates

    argmax_{x in box} w'x - f(x)

by an accelerated proximal gradient method on the equivalent composite
minimization; the prox of the l1-plus-box part is soft-threshold-then-clip,
which is exact because each coordinate problem is convex over an interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OracleFailure

DEFAULT_TOL = 1e-10
MAX_ITER = 100_000

# boxes at or beyond this magnitude are treated as "no constraint" by
# algorithms that require an unconstrained instance (e.g. gradient tracking)
UNCONSTRAINED_BOUND = 1e9


@dataclass(frozen=True)
class LocalProblem:
    """One agent's objective and box constraint.

    ``theta`` (strong-convexity modulus, taken as the smallest eigenvalue
    of ``quad``) and ``lipschitz`` (= 1/theta, the conjugate's gradient
    Lipschitz constant) are derived, not user-supplied.
    """

    quad: np.ndarray
    linear: np.ndarray
    l1_weight: float
    lower: np.ndarray
    upper: np.ndarray
    theta: float = field(init=False)
    lipschitz: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.quad, dtype=float)
        b = np.asarray(self.linear, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("quad must be a square matrix")
        d = a.shape[0]
        if b.shape != (d,) or lo.shape != (d,) or hi.shape != (d,):
            raise ValueError("linear/lower/upper must be d-vectors")
        if np.max(np.abs(a - a.T)) > 1e-12:
            raise ValueError("quad must be symmetric")
        a = 0.5 * (a + a.T)
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be nonnegative")
        if not (np.all(lo < 0) and np.all(hi > 0)):
            raise ValueError("box must contain 0 in its interior (lower < 0 < upper)")
        eigs = np.linalg.eigvalsh(a)
        if eigs[0] <= 0:
            raise ValueError("quad must be positive definite")
        object.__setattr__(self, "quad", a)
        object.__setattr__(self, "linear", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "theta", float(eigs[0]))
        object.__setattr__(self, "lipschitz", 1.0 / float(eigs[0]))

    @property
    def dim(self):
        return self.quad.shape[0]

    @property
    def is_unconstrained(self):
        return bool(np.all(self.lower <= -UNCONSTRAINED_BOUND)
                    and np.all(self.upper >= UNCONSTRAINED_BOUND))


@dataclass
class ProblemInstance:
    """A network of agents sharing one decision dimension."""

    locals: list

    def __post_init__(self):
        if len(self.locals) < 2:
            raise ValueError("need at least 2 agents")
        d = self.locals[0].dim
        if any(lp.dim != d for lp in self.locals):
            raise ValueError("all agents must share the decision dimension")
        self._stack = None

    @property
    def n(self):
        return len(self.locals)

    @property
    def dim(self):
        return self.locals[0].dim

    @property
    def theta_min(self):
        return min(lp.theta for lp in self.locals)

    @property
    def lipschitz(self):
        """Lipschitz constant of the full dual gradient: 1/theta_min."""
        return 1.0 / self.theta_min

    @property
    def lipschitz_per_node(self):
        return np.array([lp.lipschitz for lp in self.locals])

    @property
    def is_unconstrained(self):
        return all(lp.is_unconstrained for lp in self.locals)

    def stacked(self):
        """Batched views (quad doubled to the smooth Hessian) used by the
        vectorized oracle; built once."""
        if self._stack is None:
            a2 = np.stack([2.0 * lp.quad for lp in self.locals])
            lam_max = np.array([np.linalg.eigvalsh(lp.quad)[-1] for lp in self.locals])
            self._stack = {
                "a2": a2,
                "b": np.stack([lp.linear for lp in self.locals]),
                "gamma": np.array([lp.l1_weight for lp in self.locals]),
                "lower": np.stack([lp.lower for lp in self.locals]),
                "upper": np.stack([lp.upper for lp in self.locals]),
                "step": 1.0 / (2.0 * lam_max),
                "lam_max": lam_max,
            }
        return self._stack


def objective_value(lp: LocalProblem, x) -> float:
    """f(x) = x'Ax + b'x + gamma*||x||_1, defined on all of R^d."""
    x = np.asarray(x, dtype=float)
    return float(x @ lp.quad @ x + lp.linear @ x
                 + lp.l1_weight * np.sum(np.abs(x)))


def smooth_gradient(lp: LocalProblem, x):
    """Gradient of the smooth part: 2Ax + b."""
    return 2.0 * (lp.quad @ x) + lp.linear


def l1_subgradient(lp: LocalProblem, x):
    """A subgradient of f at x (l1 part contributes sign, 0 at 0)."""
    return smooth_gradient(lp, x) + lp.l1_weight * np.sign(x)


def _prox(v, thresh, lower, upper):
    # soft-threshold then clip; exact prox of gamma*|.|_1 + box indicator
    return np.clip(np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0), lower, upper)


def _solve_composite(a2, lin, gamma, lower, upper, step, tol, x0=None,
                     max_iter=MAX_ITER):
    """Batched accelerated proximal gradient for

        min_x 0.5 x'(a2)x + lin'x + gamma*||x||_1   s.t.  lower <= x <= upper

    over m independent problems. Shapes: a2 (m,d,d); lin, lower, upper,
    x0 (m,d); gamma, step (m,). Stops each problem at the first iterate
    whose projected gradient map has norm <= tol. Returns (x, residuals).
    """
    m, d = lin.shape
    t = step[:, None]
    gt = (gamma * step)[:, None]
    out = np.zeros((m, d))
    res = np.full(m, np.inf)
    finished = np.zeros(m, dtype=bool)

    # closed-form fast path: smooth minimizer inside the box when gamma == 0
    smooth_rows = gamma == 0.0
    if np.any(smooth_rows):
        xu = np.linalg.solve(a2[smooth_rows],
                             -lin[smooth_rows][..., None])[..., 0]
        inside = (np.all(xu >= lower[smooth_rows], axis=1)
                  & np.all(xu <= upper[smooth_rows], axis=1))
        idx = np.flatnonzero(smooth_rows)[inside]
        out[idx] = xu[inside]
        res[idx] = 0.0
        finished[idx] = True
        if np.all(finished):
            return out, res

    x = np.clip(x0, lower, upper) if x0 is not None else np.zeros((m, d))
    y = x.copy()
    x_prev = x.copy()
    theta_prev = 1.0
    for _ in range(max_iter):
        grad_y = np.einsum("mij,mj->mi", a2, y) + lin
        x = _prox(y - t * grad_y, gt, lower, upper)
        grad_x = np.einsum("mij,mj->mi", a2, x) + lin
        gmap = (x - _prox(x - t * grad_x, gt, lower, upper)) / t
        r = np.linalg.norm(gmap, axis=1)
        newly = (r <= tol) & ~finished
        if np.any(newly):
            out[newly] = x[newly]
            res[newly] = r[newly]
            finished |= newly
            if np.all(finished):
                return out, res
        theta = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta_prev ** 2))
        y = x + ((theta_prev - 1.0) / theta) * (x - x_prev)
        x_prev = x
        theta_prev = theta
    worst = float(np.max(res[~finished] if np.any(~finished) else res))
    raise OracleFailure("conjugate oracle did not converge", worst)


def conjugate_argmax(lp: LocalProblem, w, tol=DEFAULT_TOL):
    """The conjugate maximizer argmax_{x in box} w'x - f(x).

    Unique by strong convexity; returned with projected-gradient-map
    norm <= tol. Raises OracleFailure (carrying the residual) if the
    iteration cap is hit.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.asarray(w, dtype=float)
    a2 = (2.0 * lp.quad)[None]
    lam_max = np.linalg.eigvalsh(lp.quad)[-1]
    x, _ = _solve_composite(
        a2, (lp.linear - w)[None], np.array([lp.l1_weight]),
        lp.lower[None], lp.upper[None],
        np.array([1.0 / (2.0 * lam_max)]), tol)
    return x[0]


def conjugate_value(lp: LocalProblem, w, tol=DEFAULT_TOL) -> float:
    """d(w) = max_{x in box} w'x - f(x), evaluated at the oracle argmax."""
    w = np.asarray(w, dtype=float)
    x = conjugate_argmax(lp, w, tol)
    return float(w @ x - objective_value(lp, x))


def batch_conjugate_argmax(instance: ProblemInstance, w, tol=DEFAULT_TOL,
                           x0=None, active=None):
    """Conjugate maximizers for all agents at the stacked dual block
    ``w`` (n, d). ``active`` optionally restricts the solve to a boolean
    node mask (other rows are copied from ``x0``, which must then be given).
    """
    s = instance.stacked()
    w = np.asarray(w, dtype=float)
    if active is None:
        x, _ = _solve_composite(s["a2"], s["b"] - w, s["gamma"], s["lower"],
                                s["upper"], s["step"], tol, x0=x0)
        return x
    if x0 is None:
        raise ValueError("active mask requires x0 for the inactive rows")
    out = np.array(x0, dtype=float, copy=True)
    if np.any(active):
        sub, _ = _solve_composite(
            s["a2"][active], (s["b"] - w)[active], s["gamma"][active],
            s["lower"][active], s["upper"][active], s["step"][active], tol,
            x0=x0[active])
        out[active] = sub
    return out


def batch_objective(instance: ProblemInstance, x):
    """Per-agent objective values f_i(x_i) for a stacked block (n, d)."""
    s = instance.stacked()
    quad = 0.5 * np.einsum("mi,mij,mj->m", x, s["a2"], x)
    return quad + np.einsum("mi,mi->m", s["b"], x) \
        + s["gamma"] * np.sum(np.abs(x), axis=1)


def batch_smooth_gradient(instance: ProblemInstance, x):
    s = instance.stacked()
    return np.einsum("mij,mj->mi", s["a2"], x) + s["b"]


def batch_subgradient(instance: ProblemInstance, x):
    s = instance.stacked()
    return batch_smooth_gradient(instance, x) + s["gamma"][:, None] * np.sign(x)


def total_objective(instance: ProblemInstance, x) -> float:
    """F(x) = sum_i f_i(x_i) for a stacked block (n, d)."""
    return float(np.sum(batch_objective(instance, x)))


def generate_instance(n, d, theta_range, box_range=(0.5, 1.5),
                      b_range=(-1.0, 1.0), gamma=0.0, seed=0) -> ProblemInstance:
    """Random instance with per-agent eigenvalues drawn in ``theta_range``.

    Every A_i is Q diag(lam) Q' with Q a seeded random orthogonal matrix
    and lam uniform in [lo, hi], so the smallest eigenvalue lies in the
    requested range. ``box_range=None`` produces effectively unconstrained
    agents (boxes at +-1e9).
    """
    lo, hi = theta_range
    if not (0 < lo < hi):
        raise ValueError("theta_range must satisfy 0 < lo < hi")
    if box_range is not None:
        blo, bhi = box_range
        if not (0 < blo <= bhi):
            raise ValueError("box_range must satisfy 0 < lo <= hi")
    if b_range[0] >= b_range[1]:
        raise ValueError("b_range must satisfy lo < hi")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    rng = np.random.default_rng(seed)
    locals_ = []
    for _ in range(n):
        lam = rng.uniform(lo, hi, size=d)
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        q = q * np.sign(np.diag(r))
        a = (q * lam) @ q.T
        a = 0.5 * (a + a.T)
        b = rng.uniform(b_range[0], b_range[1], size=d)
        if box_range is None:
            p = np.full(d, -UNCONSTRAINED_BOUND)
            qq = np.full(d, UNCONSTRAINED_BOUND)
        else:
            p = -rng.uniform(blo, bhi, size=d)
            qq = rng.uniform(blo, bhi, size=d)
        locals_.append(LocalProblem(a, b, float(gamma), p, qq))
    return ProblemInstance(locals_)


def write_instance(instance: ProblemInstance, path):
    """Self-describing text serialization, 17-significant-digit decimals."""
    g = lambda v: f"{v:.17g}"
    lines = [f"problem-instance n={instance.n} d={instance.dim}"]
    for idx, lp in enumerate(instance.locals, start=1):
        lines.append(f"local {idx}")
        lines.append("gamma " + g(lp.l1_weight))
        lines.append("A " + " ".join(g(v) for v in lp.quad.ravel()))
        lines.append("b " + " ".join(g(v) for v in lp.linear))
        lines.append("p " + " ".join(g(v) for v in lp.lower))
        lines.append("q " + " ".join(g(v) for v in lp.upper))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path) -> ProblemInstance:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "problem-instance":
        raise ValueError(f"{path}: not an instance file")
    n = int(head[1].split("=")[1])
    d = int(head[2].split("=")[1])
    locals_ = []
    i = 1
    for _ in range(n):
        assert lines[i].startswith("local ")
        gamma = float(lines[i + 1].split()[1])
        vals = lambda ln: np.array([float(t) for t in ln.split()[1:]])
        a = vals(lines[i + 2]).reshape(d, d)
        locals_.append(LocalProblem(a, vals(lines[i + 3]), gamma,
                                    vals(lines[i + 4]), vals(lines[i + 5])))
        i += 6
    return ProblemInstance(locals_)
