"""Density of the lifetime integral I for subordinator specs.

On 0 < x < t_F the density k satisfies the fixed-point equation

    k(x) (1 - d x) = int_x^inf Pibar(ln(y/x)) k(y) dy + q P(I > x),

solved here by damped power iteration on a grid (the operator is linear, so
each sweep renormalizes to unit mass).  The jump integral discretizes by
trapezoid in y except over the first cell [x, x_next], where Pibar may blow
up: there the substitution y = x e^v turns it into x int_0^delta
Pibar(v) e^v dv times the local average of k, and the v-integral has the
closed form (delta Pibar(delta) + int_{(0,delta]} v Pi(dv)) up to an
e^{delta/2} midpoint factor.

Grids are linear on (0, 1/d) when the drift is positive (the support is
bounded and k may be steep near the edge) and logarithmic otherwise, with
x_max set so that a moment envelope min_n mu_n / x^n puts less than 1e-6 of
the mass beyond it.  The layer below x_min is not solved: its mass is
estimated by a power-law extrapolation of the first two nodes and reported.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NotASubordinator
from .levyspec import LevySpec
from .lifetime import functional_moments, support_bound


@dataclass
class DensityGrid:
    nodes: np.ndarray
    values: np.ndarray
    residual: float            # |mass - 1| after the final renormalization
    head_mass: float           # extrapolated mass below nodes[0]
    edge_mass: float           # mass between nodes[-1] and t_F (finite support)
    t_f: float
    iterations: int
    last_change: float
    meta: dict = field(default_factory=dict)

    def mass(self) -> float:
        return self.head_mass + float(np.trapezoid(self.values, self.nodes)) \
            + self.edge_mass

    def cumulative(self) -> np.ndarray:
        x, k = self.nodes, self.values
        inc = np.concatenate([[0.0], np.cumsum(0.5 * (k[1:] + k[:-1]) * np.diff(x))])
        return self.head_mass + inc

    def density_at(self, t: float) -> float:
        if t >= self.t_f:
            return 0.0
        return float(np.interp(t, self.nodes, self.values))

    def survival(self, t: float) -> float:
        """P(I > t) from the solved grid."""
        if t >= self.t_f:
            return 0.0
        if t <= self.nodes[0]:
            p = self.meta.get("head_power", 0.0)
            return 1.0 - self.head_mass * (t / self.nodes[0]) ** (p + 1.0)
        c = float(np.interp(t, self.nodes, self.cumulative()))
        return max(1.0 - c, 0.0)

    def moment(self, n: int) -> float:
        x, k = self.nodes, self.values
        val = float(np.trapezoid(x**n * k, x))
        p = self.meta.get("head_power", 0.0)
        val += self.head_mass * (p + 1.0) / (p + n + 1.0) * x[0] ** n
        if self.edge_mass > 0 and math.isfinite(self.t_f):
            val += self.edge_mass * (0.5 * (x[-1] + self.t_f)) ** n
        return val

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,k,cumulative\r\n")
        cum = self.cumulative()
        for x, k, c in zip(self.nodes, self.values, cum):
            buf.write(f"{float(x)!r},{float(k)!r},{float(c)!r}\r\n")
        return buf.getvalue()


def _auto_xmax(spec: LevySpec) -> float:
    """Smallest x with min_n mu_n / x^n < 1e-6 (Markov envelope), times margin."""
    mus = functional_moments(spec, 40).moments
    mus = mus[np.isfinite(mus)]
    x = 2.0 * mus[0]
    for _ in range(200):
        n = np.arange(1, len(mus) + 1)
        if np.min(mus / x**n) < 1e-6:
            return x
        x *= 1.3
    return x


def _head_weights(measure, x: np.ndarray) -> np.ndarray:
    """x_i * int_0^{delta_i} Pibar(v) e^v dv for the singular first cells."""
    n = len(x)
    out = np.zeros(n)
    deltas = np.log(x[1:] / x[:-1])
    if np.allclose(deltas, deltas[0], rtol=1e-12):
        d0 = float(deltas[0])
        w = (d0 * float(measure.tail(d0)) + measure.mean_below(d0)) * math.exp(d0 / 2)
        out[:-1] = x[:-1] * w
        return out
    for i in range(n - 1):
        d0 = float(deltas[i])
        w = (d0 * float(measure.tail(d0)) + measure.mean_below(d0)) * math.exp(d0 / 2)
        out[i] = x[i] * w
    return out


def _jump_matrix(measure, x: np.ndarray, t_f: float) -> np.ndarray | None:
    """A with (A @ k)_i ~ int_{x_i}^{t_F} Pibar(ln(y/x_i)) k(y) dy.

    For finite t_F the strip between the last node and t_F matters (dropping
    it acts as an absorbing boundary and deforms the whole eigenfunction):
    it enters as a rectangle of height k[-1] weighted at the strip midpoint.
    """
    if measure is None:
        return None
    n = len(x)
    lx = np.log(x)
    v = lx[None, :] - lx[:, None]
    iu, ju = np.triu_indices(n, k=1)
    p = np.zeros((n, n))
    p[iu, ju] = np.asarray(measure.tail(v[iu, ju]), dtype=float)
    w = np.zeros(n)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[-1] = 0.5 * (x[-1] - x[-2])
    a = p * w[None, :]
    # the j = i+1 node is the left endpoint of the trapezoid segment: its
    # weight is half the cell to its right only
    rows = np.arange(n - 2)
    a[rows, rows + 1] = p[rows, rows + 1] * 0.5 * (x[rows + 2] - x[rows + 1])
    a[n - 2, n - 1] = 0.0  # that row's integral is the head cell alone
    head = _head_weights(measure, x)
    rows = np.arange(n - 1)
    a[rows, rows] += 0.5 * head[rows]
    a[rows, rows + 1] += 0.5 * head[rows]
    if math.isfinite(t_f) and t_f > x[-1]:
        # strip value at the midpoint by linear extrapolation of the last
        # two nodes: k(mid) ~ (1+r) k[-1] - r k[-2]
        gap = t_f - x[-1]
        mid = t_f - 0.5 * gap
        r = (mid - x[-1]) / (x[-1] - x[-2])
        strip = np.asarray(measure.tail(np.log(mid / x[: n - 1])), dtype=float) * gap
        a[: n - 1, n - 1] += strip * (1.0 + r)
        a[: n - 1, n - 2] -= strip * r
        d_last = math.log(t_f / x[-1])
        w_last = x[-1] * (d_last * float(measure.tail(d_last))
                          + measure.mean_below(d_last)) * math.exp(d_last / 2)
        a[n - 1, n - 1] += w_last * (1.0 + r)
        a[n - 1, n - 2] -= w_last * r
    return a


def _tail_integral(k: np.ndarray, x: np.ndarray, top: float) -> np.ndarray:
    """S_i = int_{x_i}^{x_max} k dy + top, by right-to-left trapezoid."""
    seg = 0.5 * (k[1:] + k[:-1]) * np.diff(x)
    s = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return s + top


def _head_power(k: np.ndarray, x: np.ndarray) -> float:
    if k[0] <= 0 or k[1] <= 0:
        return 0.0
    p = math.log(k[1] / k[0]) / math.log(x[1] / x[0])
    return max(p, -0.99)


def solve_functional_density(
    spec: LevySpec,
    *,
    n_nodes: int = 2048,
    x_min: float | None = None,
    x_max: float | None = None,
    max_iter: int = 2000,
    tol: float = 1e-8,
) -> DensityGrid:
    """Solve the lifetime-density equation on a grid covering (0, t_F)."""
    if not spec.is_subordinator_neg():
        raise NotASubordinator("the density equation holds for subordinator specs")
    d, q = spec.d, spec.killing
    measure = spec.jumps_neg
    if q == 0 and measure is None:
        raise NotASubordinator("pure drift has a point-mass lifetime, no density")
    t_f = support_bound(spec)
    if math.isfinite(t_f):
        if x_max is None:
            x_max = t_f
        h = x_max / (n_nodes + 1)
        if x_min is None:
            x_min = h
        x = np.linspace(x_min, x_max - h, n_nodes)
    else:
        if x_max is None:
            x_max = _auto_xmax(spec)
        if x_min is None:
            x_min = 1e-6 * x_max
        x = np.geomspace(x_min, x_max, n_nodes)

    a = _jump_matrix(measure, x, t_f)
    denom = 1.0 - d * x
    k = np.full(n_nodes, 1.0)
    edge_gap = (t_f - x[-1]) if math.isfinite(t_f) else 0.0

    def normalize(vec):
        p = _head_power(vec, x)
        head = vec[0] * x[0] / (p + 1.0)
        if edge_gap > 0:
            r = 0.5 * edge_gap / (x[-1] - x[-2])
            edge = max((1.0 + r) * vec[-1] - r * vec[-2], 0.0) * edge_gap
        else:
            edge = 0.0
        total = head + float(np.trapezoid(vec, x)) + edge
        return vec / total, head / total, edge / total, p

    k, head, edge, p = normalize(k)
    dx = np.diff(x)
    n = n_nodes
    ghost_p = ghost_w = ghost_y = None
    if edge_gap == 0.0:
        # infinite support: close the grid top with a locally-exponential
        # model k_top * exp(-lam (y - x_max)) so the upper rows still see the
        # mass beyond x_max (otherwise the truncation acts as an absorbing
        # boundary and the tail decay rate comes out wrong)
        gcount = 128
        ratio = x[-1] / x[-2]
        ghost_y = x[-1] * ratio ** np.arange(gcount + 1)
        ghost_w = np.empty(gcount + 1)
        ghost_w[0] = 0.5 * (ghost_y[1] - ghost_y[0])
        ghost_w[1:-1] = 0.5 * (ghost_y[2:] - ghost_y[:-2])
        ghost_w[-1] = 0.5 * (ghost_y[-1] - ghost_y[-2])
        if measure is not None:
            dl = math.log(ratio)
            lag = (np.arange(n - 1, 0, -1)[:, None]
                   + np.arange(gcount + 1)[None, :]) * dl
            ghost_p = measure.tail(lag)
    prev_delta = math.inf
    damp = False
    delta = math.inf
    it = 0
    # each sweep applies the operator in place from the top down: the kernel
    # only couples upward (y >= x), so the ordered sweep solves the triangular
    # system outright and the outer loop just settles the top closure
    for it in range(1, max_iter + 1):
        k_new = k.copy()
        if edge_gap > 0:
            s_old = _tail_integral(k, x, edge)
            row = a @ k if a is not None else np.zeros(n)
            k_new[-1] = (row[-1] + q * s_old[-1]) / denom[-1]
            r = 0.5 * edge_gap / (x[-1] - x[-2])
            s_run = max((1.0 + r) * k_new[-1] - r * k[-2], 0.0) * edge_gap
        else:
            lam = 0.0
            if k[-1] > 0 and k[-2] > k[-1]:
                lam = math.log(k[-2] / k[-1]) / (x[-1] - x[-2])
            if lam > 0:
                s_run = k[-1] / lam
                model = k[-1] * np.exp(-lam * (ghost_y - x[-1]))
                feed = ghost_p @ (ghost_w * model) if ghost_p is not None else None
            else:
                s_run = 0.0
                feed = None
        for i in range(n - 2, -1, -1):
            dot = float(a[i, i + 1:] @ k_new[i + 1:]) if a is not None else 0.0
            if edge_gap == 0.0 and feed is not None:
                dot += feed[i]
            diag = (a[i, i] if a is not None else 0.0) + 0.5 * q * dx[i]
            rhs = dot + q * (s_run + 0.5 * k_new[i + 1] * dx[i])
            k_new[i] = rhs / (denom[i] - diag)
            s_run += 0.5 * (k_new[i] + k_new[i + 1]) * dx[i]
        if edge_gap == 0.0 and k_new[-2] > 0 and k_new[-3] > 0:
            # smooth top node: the equation row there sees nothing above the
            # grid (mass < 1e-6 by the envelope), so extend log-linearly
            k_new[-1] = k_new[-2] * (k_new[-2] / k_new[-3]) ** (
                math.log(x[-1] / x[-2]) / math.log(x[-2] / x[-3]))
        k_new, head, edge, p = normalize(k_new)
        delta = float(np.max(np.abs(k_new - k)))
        if delta > prev_delta * (1.0 + 1e-12):
            damp = True
        k = 0.5 * (k + k_new) if damp else k_new
        if delta < tol:
            break
        prev_delta = delta
    else:
        raise NoConvergence(
            f"density iteration stalled at change {delta:.3e} after {max_iter} sweeps",
            residual=delta,
        )
    k, head, edge, p = normalize(k)
    grid = DensityGrid(
        nodes=x, values=k, residual=abs(1.0 - (head + float(np.trapezoid(k, x)) + edge)),
        head_mass=head, edge_mass=edge, t_f=t_f, iterations=it, last_change=delta,
        meta={"head_power": p, "damped": damp},
    )
    return grid
