"""Cost-function learning from a single finite action window.

Given a fitted diffusion model and an observed trajectory of human opinions
x and target actions u, this module treats the targets' joint behavior as
locally optimal for an unknown cost r(u) = sum_i a_i * sum_q theta_iq * c_q,
where the c_q come from a small basis library:

    1: sum over the window of (1 - x_j(t))^2   (distance from +1)
    2: sum over the window of (1 + x_j(t))^2   (distance from -1)
    3: sum over the window of x_j(t)^2         (distance from neutral)
    4: sum of squared consecutive action changes of the target itself

The likelihood of the observed actions uses a quadratic expansion of r
around u (gradient h, Hessian H through the simulation Jacobian, with the
Jacobian treated as constant) and integrates each coordinate over the
bounded action box, giving per-coordinate terms log(w / (e^w - e^-w)) at
w = h - H u.  Learning maximizes that likelihood over theta (per-target,
unit L1 norm) and the importance weights a (probability simplex) by
multi-start projected gradient ascent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory, simulate

ALL_BASES = (1, 2, 3, 4)
THETA_L1_TOL = 1e-6
IMPORTANCE_TOL = 1e-8
ZERO_SNAP = 1e-10
SMALL_W = 1e-6  # series switch for the bounded-integral log term


# ===================================================================
# stacking
# ===================================================================

@dataclass
class StackedSample:
    """Time-major concatenation of a trajectory's responses and actions.

    x holds the generated opinion rows (times start+1 .. start+window);
    u holds the action rows (times start .. start+window-1); initial_x is
    the opinion row at the window start.
    """

    x: np.ndarray
    u: np.ndarray
    initial_x: np.ndarray
    n_humans: int
    n_targets: int
    start_time: int = 0

    @property
    def window(self):
        return self.u.size // self.n_targets if self.n_targets else 0


def stack(traj):
    """Flatten a trajectory into stacked response/action vectors."""
    if traj.window < 1:
        raise ValueError("cannot stack an empty trajectory")
    acts = traj.actions()
    return StackedSample(
        x=traj.x[1:].reshape(-1).copy(),
        u=acts.reshape(-1).copy(),
        initial_x=traj.x[0].copy(),
        n_humans=traj.n_humans,
        n_targets=traj.n_targets,
        start_time=traj.start_time,
    )


def unstack(sample):
    """Rebuild the trajectory a stack() call came from."""
    window = sample.window
    x = np.vstack(
        [sample.initial_x, sample.x.reshape(window, sample.n_humans)]
    )
    u = sample.u.reshape(window, sample.n_targets)
    return Trajectory(x=x, u=u, start_time=sample.start_time)


# ===================================================================
# basis costs
# ===================================================================

def basis_cost(basis_id, traj, target=None):
    """Evaluate one basis on a trajectory.

    Steering bases (1..3) sum over the window's first `window` opinion rows
    (the final response row is excluded).  The stubbornness basis (4)
    requires `target`, a 0-based action column, and sums that target's
    squared consecutive action changes.
    """
    if basis_id in (1, 2, 3):
        rows = traj.x[:-1]
        if basis_id == 1:
            return float(np.sum((1.0 - rows) ** 2))
        if basis_id == 2:
            return float(np.sum((1.0 + rows) ** 2))
        return float(np.sum(rows ** 2))
    if basis_id == 4:
        if target is None:
            raise ValueError("stubbornness basis needs a target column")
        acts = traj.actions()
        if not (0 <= target < acts.shape[1]):
            raise ValueError(f"target column {target} outside 0..{acts.shape[1] - 1}")
        return float(np.sum(np.diff(acts[:, target]) ** 2))
    raise ValueError(f"unknown basis id {basis_id}")


def basis_partials(basis_id, traj, target=None):
    """Analytic first/second partials of one basis in the stacked variables.

    Returns a dict with grad_x, grad_u, hess_xx, hess_uu, hess_xu.  The
    stacked x covers times start+1 .. start+window, so every steering basis
    has a zero final time-block (its sums stop one step earlier) and the
    initial row contributes nothing.  Cross partials are identically zero:
    each basis depends on x alone or on u alone.
    """
    window = traj.window
    nh, nt = traj.n_humans, traj.n_targets
    nx, nu = window * nh, window * nt
    grad_x = np.zeros(nx)
    grad_u = np.zeros(nu)
    hess_xx = np.zeros((nx, nx))
    hess_uu = np.zeros((nu, nu))
    if basis_id in (1, 2, 3):
        for b in range(window - 1):  # final block stays zero
            xs = traj.x[1 + b]
            sl = slice(b * nh, (b + 1) * nh)
            if basis_id == 1:
                grad_x[sl] = -2.0 * (1.0 - xs)
            elif basis_id == 2:
                grad_x[sl] = 2.0 * (1.0 + xs)
            else:
                grad_x[sl] = 2.0 * xs
            hess_xx[sl, sl] = np.eye(nh) * 2.0
    elif basis_id == 4:
        if target is None:
            raise ValueError("stubbornness basis needs a target column")
        acts = traj.actions()
        coords = np.arange(window) * nt + target
        v = acts[:, target]
        d = np.diff(v)
        g = np.zeros(window)
        g[:-1] -= 2.0 * d
        g[1:] += 2.0 * d
        grad_u[coords] = g
        lap = np.zeros((window, window))
        for s in range(window - 1):
            lap[s, s] += 2.0
            lap[s + 1, s + 1] += 2.0
            lap[s, s + 1] -= 2.0
            lap[s + 1, s] -= 2.0
        hess_uu[np.ix_(coords, coords)] = lap
    else:
        raise ValueError(f"unknown basis id {basis_id}")
    return {
        "grad_x": grad_x,
        "grad_u": grad_u,
        "hess_xx": hess_xx,
        "hess_uu": hess_uu,
        "hess_xu": np.zeros((nx, nu)),
    }


# ===================================================================
# cost specification
# ===================================================================

@dataclass
class CostSpec:
    """Per-target basis coefficients plus importance weights.

    theta rows must have unit L1 norm; importance must lie on the
    probability simplex.  Column q of theta multiplies basis_ids[q].
    """

    basis_ids: tuple
    theta: np.ndarray
    importance: np.ndarray

    def __post_init__(self):
        self.basis_ids = tuple(int(b) for b in self.basis_ids)
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.importance = np.asarray(self.importance, dtype=float).reshape(-1)
        nt, p = self.theta.shape
        if p != len(self.basis_ids):
            raise ValueError(
                f"theta has {p} columns but {len(self.basis_ids)} basis ids"
            )
        if self.importance.size != nt:
            raise ValueError(
                f"importance needs {nt} entries, got {self.importance.size}"
            )
        bad = [b for b in self.basis_ids if b not in ALL_BASES]
        if bad:
            raise ValueError(f"unknown basis ids {bad}")
        l1 = np.abs(self.theta).sum(axis=1)
        if np.any(np.abs(l1 - 1.0) > THETA_L1_TOL):
            raise ValueError(f"theta rows must have unit L1 norm, got {l1}")
        if np.any(self.importance < -IMPORTANCE_TOL) or abs(
            self.importance.sum() - 1.0
        ) > IMPORTANCE_TOL:
            raise ValueError(f"importance must lie on the simplex, got {self.importance}")

    @property
    def n_targets(self):
        return self.theta.shape[0]


def joint_cost(spec, traj):
    """sum_i a_i sum_q theta_iq c_q, with basis 4 bound to each target."""
    total = 0.0
    for i in range(spec.n_targets):
        for q, b in enumerate(spec.basis_ids):
            coef = spec.importance[i] * spec.theta[i, q]
            if coef == 0.0:
                continue
            total += coef * basis_cost(b, traj, target=i if b == 4 else None)
    return float(total)


def cost_partials(spec, traj):
    """Combined partials of each target's cost r_i in the stacked variables."""
    out = []
    for i in range(spec.n_targets):
        acc = None
        for q, b in enumerate(spec.basis_ids):
            parts = basis_partials(b, traj, target=i if b == 4 else None)
            w = spec.theta[i, q]
            if acc is None:
                acc = {k: w * v for k, v in parts.items()}
            else:
                for k, v in parts.items():
                    acc[k] = acc[k] + w * v
        out.append(acc)
    return out


# ===================================================================
# simulation Jacobian
# ===================================================================

def make_simulator(params, initial_history):
    """Closure mapping an action matrix to the generated opinion rows."""
    hist = np.atleast_2d(np.asarray(initial_history, dtype=float)).copy()

    def run(u_matrix):
        return simulate(params, hist, u_matrix).x[1:]

    return run


def jacobian_x_u(params, traj, step=1e-5, simulate_fn=None):
    """Sensitivity of stacked responses to stacked actions by central
    differences, one action coordinate at a time.  Stencil points are kept
    inside the action box (one-sided at the boundary) and entries where a
    later action would affect an earlier response are exactly zero.
    """
    if simulate_fn is None:
        simulate_fn = make_simulator(params, traj.x[:1])
    u0 = np.asarray(traj.actions(), dtype=float)
    window, nt = u0.shape
    nh = traj.n_humans
    J = np.zeros((window * nh, window * nt))
    for s in range(window):
        for j in range(nt):
            up = u0.copy()
            dn = u0.copy()
            up[s, j] = min(u0[s, j] + step, 1.0)
            dn[s, j] = max(u0[s, j] - step, -1.0)
            spread = up[s, j] - dn[s, j]
            xs_up = np.asarray(simulate_fn(up), dtype=float).reshape(-1)
            xs_dn = np.asarray(simulate_fn(dn), dtype=float).reshape(-1)
            col = (xs_up - xs_dn) / spread
            col[: s * nh] = 0.0  # causality: no effect before the action
            J[:, s * nt + j] = col
    return J


# ===================================================================
# likelihood assembly
# ===================================================================

@dataclass
class LikelihoodParts:
    h: np.ndarray
    H: np.ndarray
    varpi: np.ndarray = field(default=None)
    jac: np.ndarray = field(default=None)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        self.H = np.asarray(self.H, dtype=float)
        if self.H.shape != (self.h.size, self.h.size):
            raise ValueError("H must be square and match h")
        if np.abs(self.H - self.H.T).max() > 1e-8:
            raise ValueError("H must be symmetric")


def _unit_parts(basis_ids, traj, jac):
    """Per (target, basis) gradient/Hessian building blocks in u."""
    nt = traj.n_targets
    p = len(basis_ids)
    m = traj.window * nt
    h_units = np.zeros((nt, p, m))
    H_units = np.zeros((nt, p, m, m))
    for q, b in enumerate(basis_ids):
        if b == 4:
            for i in range(nt):
                parts = basis_partials(b, traj, target=i)
                h_units[i, q] = parts["grad_u"] + jac.T.dot(parts["grad_x"])
                Hq = parts["hess_uu"] + jac.T.dot(parts["hess_xx"]).dot(jac)
                H_units[i, q] = (Hq + Hq.T) / 2.0
        else:
            parts = basis_partials(b, traj)
            hu = parts["grad_u"] + jac.T.dot(parts["grad_x"])
            Hq = parts["hess_uu"] + jac.T.dot(parts["hess_xx"]).dot(jac)
            Hq = (Hq + Hq.T) / 2.0
            for i in range(nt):
                h_units[i, q] = hu
                H_units[i, q] = Hq
    return h_units, H_units


def gradient_and_hessian(spec, params, traj, step=1e-5, jac=None, simulate_fn=None):
    """Assemble the action-gradient h and Hessian H of the joint cost,
    propagating opinion derivatives through the simulation Jacobian (held
    constant), then symmetrizing H."""
    if jac is None:
        jac = jacobian_x_u(params, traj, step=step, simulate_fn=simulate_fn)
    h_units, H_units = _unit_parts(spec.basis_ids, traj, jac)
    beta = spec.importance[:, None] * spec.theta  # (nt, p)
    h = np.einsum("iq,iqm->m", beta, h_units)
    H = np.einsum("iq,iqmn->mn", beta, H_units)
    H = (H + H.T) / 2.0
    u_vec = stack(traj).u
    return LikelihoodParts(h=h, H=H, varpi=h - H.dot(u_vec), jac=jac)


def bounded_log_weight(w):
    """log(w / (e^w - e^-w)) elementwise, stable over the whole real line.

    Even in w; near zero it tends to log(1/2) - w^2/6.  This is the log of
    the reciprocal normalizing integral of e^(w*v) for v in [-1, 1].
    """
    w = np.asarray(w, dtype=float)
    a = np.abs(w)
    small = a < SMALL_W
    safe = np.where(small, 1.0, a)
    main = np.log(safe) - safe - np.log1p(-np.exp(-2.0 * safe))
    series = np.log(0.5) - w * w / 6.0
    return np.where(small, series, main)


def _bounded_log_weight_grad(w):
    """d/dw of bounded_log_weight: 1/w - coth(w), odd, in (-1, 1)."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-4
    safe = np.where(small, 1.0, w)
    main = 1.0 / safe - 1.0 / np.tanh(safe)
    series = -w / 3.0 + w ** 3 / 45.0
    return np.where(small, series, main)


def log_likelihood_from_parts(parts, u_vec):
    """Quadratic model plus the bounded-box normalization terms."""
    u_vec = np.asarray(u_vec, dtype=float).reshape(-1)
    w = parts.h - parts.H.dot(u_vec)
    return float(
        -0.5 * u_vec.dot(parts.H).dot(u_vec)
        + u_vec.dot(parts.h)
        + bounded_log_weight(w).sum()
    )


def log_likelihood(spec, params, traj, step=1e-5, jac=None, simulate_fn=None):
    parts = gradient_and_hessian(
        spec, params, traj, step=step, jac=jac, simulate_fn=simulate_fn
    )
    return log_likelihood_from_parts(parts, stack(traj).u)


# ===================================================================
# constrained learning
# ===================================================================

@dataclass
class LearnConfig:
    seed: int = 0
    restarts: int = 32
    max_iters: int = 5000
    rel_tol: float = 1e-9
    jac_step: float = 1e-5
    init_step: float = 1.0
    min_step: float = 1e-14


@dataclass
class LearnResult:
    basis_ids: tuple
    theta: np.ndarray
    importance: np.ndarray
    final_loglik: float
    restart_logliks: list
    best_restart: int
    iterations: int
    converged: bool

    def spec(self):
        return CostSpec(
            basis_ids=self.basis_ids, theta=self.theta, importance=self.importance
        )


def _project_simplex(v):
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    srt = np.sort(v)[::-1]
    css = np.cumsum(srt) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = srt - css / idx > 0
    rho = idx[cond][-1]
    lam = css[cond][-1] / rho
    return np.maximum(v - lam, 0.0)


def _project_theta_rows(theta):
    """Rescale each row to the L1 unit sphere, snapping tiny coordinates."""
    out = theta.copy()
    for i in range(out.shape[0]):
        row = out[i]
        n = np.abs(row).sum()
        if n < 1e-12:
            row = np.full(row.size, 1.0 / row.size)
            n = 1.0
        row = row / n
        row[np.abs(row) < ZERO_SNAP] = 0.0
        n2 = np.abs(row).sum()
        if n2 < 1e-12:
            row = np.full(row.size, 1.0 / row.size)
            n2 = 1.0
        out[i] = row / n2
    return out


def learn(traj, params, basis_ids=ALL_BASES, config=None, simulate_fn=None):
    """Maximize the bounded-box action likelihood over (theta, importance).

    Multi-start projected gradient ascent; the likelihood is evaluated from
    per-(target, basis) building blocks precomputed once, so iterations are
    pure linear algebra.  Returns the best feasible point over all restarts.
    """
    if config is None:
        config = LearnConfig()
    basis_ids = tuple(int(b) for b in basis_ids)
    if traj.window < 2:
        raise ValueError(
            "learning needs an action window of at least 2 steps "
            "(consecutive actions feed the stubbornness basis)"
        )
    sample = stack(traj)
    nt, p = traj.n_targets, len(basis_ids)
    if nt < 1:
        raise ValueError("no targets to learn costs for")
    u_vec = sample.u
    jac = jacobian_x_u(params, traj, step=config.jac_step, simulate_fn=simulate_fn)
    h_units, H_units = _unit_parts(basis_ids, traj, jac)

    # beta = importance * theta enters everything linearly:
    # lin[i,q] = u.h_unit - u.H_unit.u / 2,  w_units[i,q] = h_unit - H_unit.u
    lin = np.einsum("iqm,m->iq", h_units, u_vec) - 0.5 * np.einsum(
        "m,iqmn,n->iq", u_vec, H_units, u_vec
    )
    w_units = h_units - np.einsum("iqmn,n->iqm", H_units, u_vec)

    def loglik(theta, a):
        beta = a[:, None] * theta
        w = np.einsum("iq,iqm->m", beta, w_units)
        return float(np.sum(beta * lin) + bounded_log_weight(w).sum())

    def grad_beta(theta, a):
        beta = a[:, None] * theta
        w = np.einsum("iq,iqm->m", beta, w_units)
        gw = _bounded_log_weight_grad(w)
        return lin + np.einsum("m,iqm->iq", gw, w_units)

    ss = np.random.SeedSequence(config.seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(config.restarts)]
    best = None
    restart_logliks = []
    for r, rng in enumerate(streams):
        theta = rng.dirichlet(np.ones(p), size=nt) * rng.choice(
            np.array([-1.0, 1.0]), size=(nt, p)
        )
        theta = _project_theta_rows(theta)
        a = rng.dirichlet(np.ones(nt))
        cur = loglik(theta, a)
        eta = config.init_step
        iters = 0
        converged = False
        stalled = 0
        while iters < config.max_iters:
            iters += 1
            gb = grad_beta(theta, a)
            g_theta = a[:, None] * gb
            g_a = np.sum(theta * gb, axis=1)
            improved = False
            while eta >= config.min_step:
                cand_theta = _project_theta_rows(theta + eta * g_theta)
                cand_a = _project_simplex(a + eta * g_a)
                val = loglik(cand_theta, cand_a)
                if val > cur:
                    improved = True
                    break
                eta /= 2.0
            if not improved:
                converged = True
                break
            gain = val - cur
            theta, a, cur = cand_theta, cand_a, val
            eta = min(eta * 1.5, 1e3)
            # sustained stagnation, not one pinched step at an L1 kink
            stalled = stalled + 1 if gain <= config.rel_tol * (1.0 + abs(cur)) else 0
            if stalled >= 3:
                converged = True
                break
        restart_logliks.append(cur)
        if best is None or cur > best[0]:
            best = (cur, theta, a, r, iters, converged)
    cur, theta, a, r, iters, converged = best
    return LearnResult(
        basis_ids=basis_ids,
        theta=theta,
        importance=a,
        final_loglik=cur,
        restart_logliks=restart_logliks,
        best_restart=r,
        iterations=iters,
        converged=converged,
    )


# ===================================================================
# reporting
# ===================================================================

_BASIS_TEXT = {
    1: "sum((1 - x_j(t))^2)",
    2: "sum((1 + x_j(t))^2)",
    3: "sum(x_j(t)^2)",
    4: "sum((u(t) - u(t-1))^2)",
}


def render_cost_formula(basis_ids, theta_row, label="target"):
    """Human-readable weighted-basis formula for one target's cost."""
    terms = []
    for q, b in enumerate(basis_ids):
        c = float(theta_row[q])
        if c == 0.0:
            continue
        sign = "-" if c < 0 else "+"
        terms.append(f"{sign} {abs(c):.4f}*{_BASIS_TEXT[b]}")
    if not terms:
        return f"r({label}) = 0"
    body = " ".join(terms)
    if body.startswith("+ "):
        body = body[2:]
    return f"r({label}) = {body}"
