"""Memorized opinion-diffusion dynamics.

Each human i updates by a convex combination of an innate anchor and the
current opinions (or broadcast actions) of in-neighbors:

    x_i(k+1) = rho_i * s_i + sum_j c_ij * z_j(k)

where the weights c_ij come from the confirmation kernel evaluated at the
human's memory-weighted self-expectation plus the novelty kernel evaluated at
her memory-weighted surrounding expectation, normalized by one shared
denominator so that rho_i + sum_j c_ij = 1 exactly.

The surrounding expectation averages PAST weighted neighbor sums; those are
stored in a StepCache when each step executes and are never recomputed, which
breaks the self-reference that a same-step definition would create.  On the
first step (empty cache) the surround falls back to a uniform average of the
in-neighbors' current values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bias import BiasModel, tanh_power_model
from .graph import SocialGraph

BOX_TOL = 1e-9  # admissible float fuzz outside [-1, 1] on inputs


# ===================================================================
# memory kernel
# ===================================================================

@dataclass(frozen=True)
class MemoryKernel:
    """Decaying activation over remembered samples: m(age) = log(age^-d + 1)."""

    d: float
    tau: int

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"decay must be > 0, got d={self.d}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError(f"horizon must be an integer >= 1, got tau={self.tau}")


def memory_weight(kernel, age):
    """Activation of a sample `age` steps back (age 1 = most recent)."""
    if int(age) != age or not (1 <= age <= kernel.tau + 1):
        raise ValueError(
            f"age {age} outside the horizon window 1..{kernel.tau + 1}"
        )
    return float(np.log(np.power(float(age), -kernel.d) + 1.0))


def _memory_matrix(ages, ds):
    """m(age) for each (age, individual) pair; shape (len(ages), len(ds))."""
    return np.log(np.power(ages[:, None], -ds[None, :]) + 1.0)


# ===================================================================
# parameters
# ===================================================================

@dataclass(frozen=True, eq=False)
class DiffusionParams:
    """Everything the update rule needs, validated once.

    bias and memory are per-human tuples; innate is the anchor vector s
    (zeros when omitted).  use_innate=False assigns the whole weight row to
    neighbors (rho = 0), which requires every human to have an in-neighbor.
    surround_override, when set, replaces the computed surrounding
    expectation by a constant for every human.  include_current controls
    whether the newest own sample joins the self-memory window.
    """

    graph: SocialGraph
    bias: tuple
    memory: tuple
    innate: tuple = None
    use_innate: bool = False
    surround_override: float = None
    include_current: bool = True

    def __post_init__(self):
        g = self.graph
        nh = g.n_humans
        if len(self.bias) != nh:
            raise ValueError(f"need {nh} bias models, got {len(self.bias)}")
        if len(self.memory) != nh:
            raise ValueError(f"need {nh} memory kernels, got {len(self.memory)}")
        innate = self.innate
        if innate is None:
            innate = tuple(0.0 for _ in range(nh))
            object.__setattr__(self, "innate", innate)
        if len(innate) != nh:
            raise ValueError(f"innate vector needs {nh} entries, got {len(innate)}")
        if any(abs(v) > 1 + BOX_TOL for v in innate):
            raise ValueError("innate opinions must lie in [-1, 1]")
        if self.surround_override is not None and abs(self.surround_override) > 1:
            raise ValueError("surround override must lie in [-1, 1]")
        nbrs = tuple(
            np.array(g.in_neighbors(i), dtype=int) - 1 for i in range(1, nh + 1)
        )
        if not self.use_innate:
            lonely = [i + 1 for i, idx in enumerate(nbrs) if idx.size == 0]
            if lonely:
                raise ValueError(
                    f"humans {lonely} have no in-neighbors; an empty influence row "
                    "cannot be normalized unless innate anchoring is enabled"
                )
        # derived arrays (not dataclass fields; set once, reused every step)
        object.__setattr__(self, "_nbrs", nbrs)
        object.__setattr__(
            self, "_ds", np.array([m.d for m in self.memory], dtype=float)
        )
        object.__setattr__(
            self, "_taus", np.array([m.tau for m in self.memory], dtype=int)
        )
        object.__setattr__(self, "_s", np.array(innate, dtype=float))
        A = g.adjacency()[:nh, :]
        object.__setattr__(self, "_adj_h", A)
        object.__setattr__(self, "_indeg", A.sum(axis=1))

    @property
    def n_humans(self):
        return self.graph.n_humans

    @property
    def n_targets(self):
        return self.graph.n_targets


def make_params(
    graph,
    alphas=1.0,
    decay=1.0,
    tau=2,
    *,
    bias=None,
    memory=None,
    innate=None,
    use_innate=False,
    surround_override=None,
    include_current=True,
    epsilon_floor=None,
):
    """Convenience constructor broadcasting scalars to per-human tuples."""
    nh = graph.n_humans
    if bias is None:
        kwargs = {} if epsilon_floor is None else {"epsilon_floor": epsilon_floor}
        a = np.broadcast_to(np.asarray(alphas, dtype=float), (nh,))
        bias = tuple(tanh_power_model(ai, **kwargs) for ai in a)
    elif isinstance(bias, BiasModel):
        bias = (bias,) * nh
    else:
        bias = tuple(bias)
    if memory is None:
        d = np.broadcast_to(np.asarray(decay, dtype=float), (nh,))
        t = np.broadcast_to(np.asarray(tau, dtype=int), (nh,))
        memory = tuple(MemoryKernel(d=float(di), tau=int(ti)) for di, ti in zip(d, t))
    elif isinstance(memory, MemoryKernel):
        memory = (memory,) * nh
    else:
        memory = tuple(memory)
    if innate is not None:
        innate = tuple(float(v) for v in np.broadcast_to(np.asarray(innate, dtype=float), (nh,)))
    return DiffusionParams(
        graph=graph,
        bias=bias,
        memory=memory,
        innate=innate,
        use_innate=use_innate,
        surround_override=surround_override,
        include_current=include_current,
    )


# ===================================================================
# step cache
# ===================================================================

class StepCache:
    """Per-step record of executed influence rows and the state they saw.

    For each executed step: the full state z, each human's weight vector over
    her in-neighbors, the resistance rho, the row sum, and the weighted
    neighbor sum (row . state) that the surround expectation consumes.
    """

    def __init__(self):
        self.states = []
        self.rows = []
        self.rho = []
        self.row_sums = []
        self.weighted_sums = []

    def __len__(self):
        return len(self.states)

    def add(self, z, rows, rho, row_sums, weighted_sums):
        closure = rho + row_sums
        if np.any(np.abs(closure - 1.0) > 1e-12):
            worst = float(np.abs(closure - 1.0).max())
            raise RuntimeError(
                f"influence row failed to close to 1 (deviation {worst:.3e})"
            )
        self.states.append(np.array(z, dtype=float))
        self.rows.append(rows)
        self.rho.append(np.array(rho, dtype=float))
        self.row_sums.append(np.array(row_sums, dtype=float))
        self.weighted_sums.append(np.array(weighted_sums, dtype=float))


# ===================================================================
# sensed expectations
# ===================================================================

def sensed_self_expectation(history, kernel, include_current=True):
    """Memory-weighted average of one individual's own opinions.

    history: own opinions oldest to newest, the last entry being the current
    one.  The window is the most recent tau+1 samples (tau when the current
    sample is excluded), truncated during bootstrap.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("history must be a nonempty 1-D sequence")
    if include_current:
        w = min(kernel.tau + 1, h.size)
        window = h[::-1][:w]
    else:
        past = h[:-1]
        if past.size == 0:
            return float(h[-1])
        w = min(kernel.tau, past.size)
        window = past[::-1][:w]
    ages = np.arange(1, w + 1, dtype=float)
    m = np.log(np.power(ages, -kernel.d) + 1.0)
    return float(np.dot(m, window) / m.sum())


def _self_expectations(params, x_history):
    """Vectorized self-expectations for all humans; x_history rows oldest first."""
    X = np.asarray(x_history, dtype=float)
    taus = params._taus
    if params.include_current:
        wmax = min(int(taus.max()) + 1, X.shape[0])
        Xw = X[::-1][:wmax]
        cap = taus + 1
    else:
        past = X[:-1]
        if past.shape[0] == 0:
            return X[-1].copy()
        wmax = min(int(taus.max()), past.shape[0])
        Xw = past[::-1][:wmax]
        cap = taus
    ages = np.arange(1, wmax + 1, dtype=float)
    M = _memory_matrix(ages, params._ds)
    M = np.where(ages[:, None] <= cap[None, :], M, 0.0)
    return (M * Xw).sum(axis=0) / M.sum(axis=0)


def sensed_surround_expectation(cache, kernel, i, params, z_now):
    """Memory-and-influence weighted average of past neighbor opinions for
    human i (1-based).  Falls back to a uniform average of in-neighbors'
    current values when the cache is empty."""
    x_bar = _surround_expectations(params, cache, np.asarray(z_now, dtype=float))
    return float(x_bar[i - 1])


def _bootstrap_surround(params, z_now):
    counts = np.maximum(params._indeg, 1)
    return np.where(
        params._indeg > 0, params._adj_h.dot(z_now) / counts, 0.0
    )


def _surround_expectations(params, cache, z_now):
    if params.surround_override is not None:
        return np.full(params.n_humans, float(params.surround_override))
    depth = min(int(params._taus.max()), len(cache))
    boot = _bootstrap_surround(params, z_now)
    if depth == 0:
        return boot
    WS = np.stack(cache.weighted_sums[-depth:][::-1])  # newest first
    RS = np.stack(cache.row_sums[-depth:][::-1])
    ages = np.arange(1, depth + 1, dtype=float)
    M = _memory_matrix(ages, params._ds)
    M = np.where(ages[:, None] <= params._taus[None, :], M, 0.0)
    num = (M * WS).sum(axis=0)
    den = (M * RS).sum(axis=0)
    # den vanishes only for isolated humans; their surround is never used
    safe = den > 0
    return np.where(safe, num / np.where(safe, den, 1.0), boot)


# ===================================================================
# influence rows and stepping
# ===================================================================

def _weight_rows(params, x_under, x_bar, z_now):
    nh = params.n_humans
    rows = []
    rho = np.zeros(nh)
    row_sums = np.zeros(nh)
    weighted = np.zeros(nh)
    x_next = np.zeros(nh)
    for i in range(nh):
        model = params.bias[i]
        idx = params._nbrs[i]
        zn = z_now[idx]
        floor = model.epsilon_floor
        d_conf = np.maximum(np.abs(model.f_conf(x_under[i]) - model.f_conf(zn)), floor)
        d_nov = np.maximum(np.abs(model.f_nov(x_bar[i]) - model.f_nov(zn)), floor)
        raw = model.g_conf(d_conf) + model.g_nov(d_nov)
        denom = raw.sum()
        if params.use_innate:
            s_i = params._s[i]
            dc = max(abs(float(model.f_conf(x_under[i])) - float(model.f_conf(s_i))), floor)
            dn = max(abs(float(model.f_nov(x_bar[i])) - float(model.f_nov(s_i))), floor)
            denom = denom + float(model.g_conf(dc)) + float(model.g_nov(dn))
        if denom <= 0 or not np.isfinite(denom):
            raise RuntimeError(
                f"influence row for human {i + 1} cannot be normalized "
                f"(denominator {denom})"
            )
        if idx.size:
            c_row = raw / denom
        else:
            c_row = raw  # empty
        rs = float(c_row.sum())
        if params.use_innate:
            r = 1.0 - rs
        else:
            r = 0.0
        rows.append(c_row)
        rho[i] = r
        row_sums[i] = rs
        weighted[i] = float(c_row.dot(zn)) if idx.size else 0.0
        x_next[i] = r * params._s[i] + weighted[i]
    return rows, rho, row_sums, weighted, np.clip(x_next, -1.0, 1.0)


def influence_row(params, i, z_now, cache, x_history=None):
    """Normalized weights over in_neighbors(i) plus the resistance rho_i.

    When x_history is omitted, human i's own history is reconstructed from
    the cached states plus the current one.
    """
    z = np.asarray(z_now, dtype=float)
    if z.shape != (params.graph.n,):
        raise ValueError(f"state must have {params.graph.n} entries")
    if x_history is None:
        x_history = np.array(
            [st[: params.n_humans] for st in cache.states] + [z[: params.n_humans]]
        )
    x_under = _self_expectations(params, x_history)
    x_bar = _surround_expectations(params, cache, z)
    rows, rho, _, _, _ = _weight_rows(params, x_under, x_bar, z)
    return rows[i - 1].copy(), float(rho[i - 1])


def step(params, x_history, u_now, cache=None):
    """One update of all human opinions; extends the cache with this step.

    x_history: human opinion rows oldest to newest (last row = current).
    u_now: the targets' current action values.
    Returns (next opinions, cache).
    """
    if cache is None:
        cache = StepCache()
    X = np.atleast_2d(np.asarray(x_history, dtype=float))
    if X.shape[1] != params.n_humans:
        raise ValueError(f"history rows need {params.n_humans} columns, got {X.shape[1]}")
    u = np.asarray(u_now, dtype=float).reshape(-1)
    if u.shape != (params.n_targets,):
        raise ValueError(f"need {params.n_targets} action values, got {u.shape}")
    if np.any(np.abs(X) > 1 + BOX_TOL) or np.any(np.abs(u) > 1 + BOX_TOL):
        raise ValueError("opinions and actions must lie in [-1, 1]")
    z_now = np.concatenate([X[-1], u])
    x_under = _self_expectations(params, X)
    x_bar = _surround_expectations(params, cache, z_now)
    rows, rho, row_sums, weighted, x_next = _weight_rows(params, x_under, x_bar, z_now)
    cache.add(z_now, rows, rho, row_sums, weighted)
    return x_next, cache


# ===================================================================
# trajectories
# ===================================================================

@dataclass
class Trajectory:
    """Time-aligned opinion matrix (humans) and action matrix (targets).

    x has window+1 rows (times start_time .. start_time+window); u has one
    action row per generated step, so either x rows - 1 rows, or equal row
    counts when the final action was also recorded.
    """

    x: np.ndarray
    u: np.ndarray
    start_time: int = 0

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim == 1:
            self.u = self.u.reshape(len(self.u), 0) if self.u.size == 0 else self.u.reshape(1, -1)
        if self.u.shape[0] not in (self.x.shape[0], self.x.shape[0] - 1):
            raise ValueError(
                f"action rows ({self.u.shape[0]}) must equal opinion rows "
                f"({self.x.shape[0]}) or one fewer"
            )
        if np.any(np.abs(self.x) > 1 + BOX_TOL) or (
            self.u.size and np.any(np.abs(self.u) > 1 + BOX_TOL)
        ):
            raise ValueError("trajectory values must lie in [-1, 1]")

    @property
    def n_humans(self):
        return self.x.shape[1]

    @property
    def n_targets(self):
        return self.u.shape[1]

    @property
    def window(self):
        return self.x.shape[0] - 1

    def actions(self):
        """The window action rows (drops a recorded final action if present)."""
        return self.u[: self.x.shape[0] - 1]

    def tail(self, window):
        """Sub-trajectory covering the last `window` steps."""
        if not (1 <= window <= self.window):
            raise ValueError(f"window must lie in 1..{self.window}, got {window}")
        lx = self.x.shape[0]
        x = self.x[lx - window - 1:]
        last_u = min(self.u.shape[0], lx - 1)
        u = self.u[last_u - window: last_u]
        return Trajectory(
            x=x.copy(), u=u.copy(), start_time=self.start_time + lx - window - 1
        )

    def save_csv(self, path):
        nh, nt = self.n_humans, self.n_targets
        header = ",".join(
            ["t"]
            + [f"x{j}" for j in range(1, nh + 1)]
            + [f"u{j}" for j in range(1, nt + 1)]
        )
        lines = [header]
        for r in range(self.x.shape[0]):
            cells = [str(self.start_time + r)]
            cells += ["%.12g" % v for v in self.x[r]]
            if r < self.u.shape[0]:
                cells += ["%.12g" % v for v in self.u[r]]
            else:
                cells += [""] * nt
            lines.append(",".join(cells))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def load_csv(path):
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines:
            raise ValueError(f"empty trajectory file {path}")
        cols = lines[0].split(",")
        if cols[0] != "t":
            raise ValueError(f"{path}: first column must be t, got {cols[0]!r}")
        nh = sum(1 for c in cols if c.startswith("x"))
        nt = sum(1 for c in cols if c.startswith("u"))
        if 1 + nh + nt != len(cols):
            raise ValueError(f"{path}: unrecognized columns in header {lines[0]!r}")
        times, xs, us = [], [], []
        for ln_no, ln in enumerate(lines[1:], start=2):
            cells = ln.split(",")
            if len(cells) != len(cols):
                raise ValueError(f"{path} line {ln_no}: expected {len(cols)} cells")
            times.append(int(cells[0]))
            xs.append([float(c) for c in cells[1: 1 + nh]])
            ucells = cells[1 + nh:]
            if all(c == "" for c in ucells):
                us.append(None)
            else:
                us.append([float(c) for c in ucells])
        for a, b in zip(times, times[1:]):
            if b != a + 1:
                raise ValueError(f"{path}: time column must be contiguous")
        if any(u is None for u in us[:-1]):
            raise ValueError(f"{path}: only the final action row may be empty")
        u_rows = [u for u in us if u is not None]
        return Trajectory(
            x=np.array(xs, dtype=float),
            u=np.array(u_rows, dtype=float).reshape(len(u_rows), nt),
            start_time=times[0] if times else 0,
        )


def simulate(params, initial_history, u_seq, start_time=0):
    """Roll the dynamics forward one step per action row.

    initial_history: one or more rows of human opinions (oldest first); the
    last row is the state at start_time.  u_seq: one action row per step.
    Returns a Trajectory whose x holds the initial state plus each generated
    row, and whose u is the action sequence.
    """
    X = np.atleast_2d(np.asarray(initial_history, dtype=float))
    U = np.asarray(u_seq, dtype=float)
    if U.ndim == 1:
        U = U.reshape(-1, params.n_targets) if params.n_targets else U.reshape(len(U), 0)
    if U.ndim != 2 or U.shape[1] != params.n_targets:
        raise ValueError(f"action rows need {params.n_targets} columns")
    if np.any(np.abs(X) > 1 + BOX_TOL):
        raise ValueError("initial opinions must lie in [-1, 1]")
    cache = StepCache()
    hist = X.copy()
    out = [hist[-1].copy()]
    for u_now in U:
        x_next, cache = step(params, hist, u_now, cache)
        hist = np.vstack([hist, x_next])
        out.append(x_next)
    return Trajectory(x=np.array(out), u=U.copy(), start_time=start_time)
