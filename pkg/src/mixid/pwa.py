"""Piecewise-affine functions: compilation of small MLPs, preimages, injectivity.

A :class:`PiecewiseAffineFunction` is an explicit list of polyhedral regions
``{z : C z <= d}`` each carrying an affine map ``z -> A z + b``. Regions are
closed; on shared facets the lowest piece index wins.
"""
from dataclasses import dataclass, field
import itertools
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatch, NotGenericPoint, RegionCapExceeded, UnsupportedActivation
from .gmm import AffineMap, GaussianMixture, density as gmm_density

BOUNDARY_TOL = 1e-10
RESIDUAL_TOL = 1e-9
GENERIC_TOL = 1e-9
LP_SLACK = 1e-9
MAX_HIDDEN_UNITS = 24
DEFAULT_REGION_CAP = 2 ** 20
EXACT_PIECE_LIMIT = 64

ACTIVATIONS = ("relu", "leaky_relu", "identity")
LEVELS = ("not_weakly_injective", "weakly_injective", "observably_injective", "injective")


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    slope: float = 0.0

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.atleast_1d(np.asarray(self.bias, dtype=float)).ravel()
        if W.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"layer weights {W.shape} vs bias {b.shape}")
        act = {"id": "identity", "leaky": "leaky_relu"}.get(self.activation, self.activation)
        if act not in ACTIVATIONS:
            raise UnsupportedActivation(f"unsupported activation {self.activation!r}")
        if act == "leaky_relu" and not (self.slope > 0 and self.slope != 1):
            raise UnsupportedActivation(f"leaky slope must be > 0 and != 1, got {self.slope}")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", act)

    def activate(self, pre):
        if self.activation == "relu":
            return np.where(pre > 0, pre, 0.0)
        if self.activation == "leaky_relu":
            return np.where(pre > 0, pre, self.slope * pre)
        return pre


@dataclass(frozen=True)
class NetworkSpec:
    """Fully connected MLP ``h_t ∘ σ ∘ ... ∘ σ ∘ h_1``; the last layer is affine."""

    layers: Tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionMismatch("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise DimensionMismatch("consecutive layer shapes do not chain")
        if layers[-1].activation != "identity":
            raise UnsupportedActivation("final layer activation must be identity")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self):
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weights.shape[0]

    @property
    def widths(self):
        return [self.input_dim] + [layer.weights.shape[0] for layer in self.layers]

    @property
    def hidden_units(self):
        return sum(l.weights.shape[0] for l in self.layers if l.activation != "identity")

    def forward(self, z):
        x = np.asarray(z, dtype=float)
        for layer in self.layers:
            x = layer.activate(x @ layer.weights.T + layer.bias)
        return x


@dataclass(frozen=True, eq=False)
class Piece:
    C: np.ndarray
    d: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_rank", int(np.linalg.matrix_rank(self.A)))
        object.__setattr__(self, "_pinv", np.linalg.pinv(self.A))

    def violation(self, z):
        """Largest constraint violation ``max(C z - d)`` (``-inf`` for the whole space)."""
        z = np.atleast_2d(z)
        if self.C.shape[0] == 0:
            return np.full(z.shape[0], -np.inf)
        return np.max(z @ self.C.T - self.d, axis=1)

    def contains(self, z, tol=BOUNDARY_TOL):
        return self.violation(z) <= tol

    def boundary_distance(self, z):
        """Euclidean distance from an interior point to the nearest facet hyperplane."""
        if self.C.shape[0] == 0:
            return np.inf
        norms = np.linalg.norm(self.C, axis=1)
        return float(np.min((self.d - self.C @ z) / norms))

    def rank(self):
        return self._rank

    def interval(self):
        """``(lo, hi)`` of a 1D region."""
        lo, hi = -np.inf, np.inf
        for c, d in zip(self.C[:, 0], self.d):
            if c > 0:
                hi = min(hi, d / c)
            elif c < 0:
                lo = max(lo, d / c)
        return lo, hi


@dataclass(frozen=True, eq=False)
class PiecewiseAffineFunction:
    pieces: Tuple[Piece, ...]
    input_dim: int
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))

    def __len__(self):
        return len(self.pieces)

    @classmethod
    def from_intervals(cls, spec):
        """1D helper: ``spec`` is a list of ``(lo, hi, slope, intercept)``."""
        pieces = []
        for lo, hi, a, c in spec:
            rows, rhs = [], []
            if np.isfinite(hi):
                rows.append([1.0])
                rhs.append(hi)
            if np.isfinite(lo):
                rows.append([-1.0])
                rhs.append(-lo)
            pieces.append(Piece(np.array(rows, dtype=float).reshape(-1, 1), np.array(rhs, dtype=float),
                                np.array([[a]], dtype=float), np.array([c], dtype=float)))
        return cls(tuple(pieces), 1, 1)

    @classmethod
    def affine(cls, h):
        return cls((Piece(np.zeros((0, h.in_dim)), np.zeros(0), h.matrix.copy(), h.offset.copy()),),
                   h.in_dim, h.out_dim)

    def locate(self, z):
        """Index of the containing piece per row (lowest index on ties)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        viol = np.column_stack([p.violation(z) for p in self.pieces])
        inside = viol <= BOUNDARY_TOL
        idx = np.argmax(inside, axis=1)
        missing = ~inside.any(axis=1)
        if missing.any():
            idx[missing] = np.argmin(viol[missing], axis=1)
        return idx

    def precompose(self, h):
        """``self ∘ h`` for an affine ``h``."""
        H, o = h.matrix, h.offset
        pieces = [Piece(p.C @ H, p.d - p.C @ o, p.A @ H, p.A @ o + p.b) for p in self.pieces]
        return PiecewiseAffineFunction(tuple(pieces), h.in_dim, self.output_dim)

    def postcompose(self, h):
        """``h ∘ self`` for an affine ``h``."""
        pieces = [Piece(p.C, p.d, h.matrix @ p.A, h.matrix @ p.b + h.offset) for p in self.pieces]
        return PiecewiseAffineFunction(tuple(pieces), self.input_dim, h.out_dim)

    def to_list(self):
        return [
            {"halfspaces": [{"c": c.tolist(), "d": float(d)} for c, d in zip(p.C, p.d)],
             "A": p.A.tolist(), "b": p.b.tolist()}
            for p in self.pieces
        ]

    @classmethod
    def from_list(cls, data):
        pieces = []
        for item in data:
            A = np.atleast_2d(np.asarray(item["A"], dtype=float))
            hs = item.get("halfspaces", [])
            C = np.array([h["c"] for h in hs], dtype=float).reshape(len(hs), A.shape[1])
            d = np.array([h["d"] for h in hs], dtype=float)
            pieces.append(Piece(C, d, A, np.asarray(item["b"], dtype=float)))
        if not pieces:
            raise DimensionMismatch("empty piece list")
        return cls(tuple(pieces), pieces[0].A.shape[1], pieces[0].A.shape[0])


@dataclass(frozen=True)
class InjectivityVerdict:
    level: str
    certificate: str
    method: str
    witness: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def to_dict(self):
        out = {"level": self.level, "certificate": self.certificate, "method": self.method}
        if self.witness is not None:
            out["witness"] = [np.asarray(w).tolist() for w in self.witness]
        return out


@dataclass(frozen=True, eq=False)
class Preimage:
    points: np.ndarray
    infinite: bool
    pieces: Tuple[int, ...] = field(default=())

    def __len__(self):
        return self.points.shape[0]


# --------------------------------------------------------------------------- LP helpers

def _interior_lp(C, d, m, A_eq=None, b_eq=None):
    """Maximise the uniform slack ``t <= 1`` with ``C z + t |C_i| <= d``.

    Returns ``(z, t)`` or ``(None, -inf)`` when infeasible.
    """
    r = C.shape[0]
    if r == 0 and A_eq is None:
        return np.zeros(m), 1.0
    norms = np.linalg.norm(C, axis=1) if r else np.zeros(0)
    A_ub = np.hstack([C, norms[:, None]]) if r else None
    cost = np.zeros(m + 1)
    cost[-1] = -1.0
    eq = None
    if A_eq is not None:
        eq = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))])
    bounds = [(None, None)] * m + [(None, 1.0)]
    res = linprog(cost, A_ub=A_ub, b_ub=d if r else None, A_eq=eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return None, -np.inf
    return res.x[:m], float(res.x[-1])


def _has_interior(C, d, m):
    return _interior_lp(C, d, m)[1] > LP_SLACK


def _prune(C, d, m):
    """Drop redundant half-spaces (kept rows define the same polyhedron)."""
    keep = list(range(C.shape[0]))
    for i in list(keep):
        others = [k for k in keep if k != i]
        if not others:
            continue
        res = linprog(-C[i], A_ub=C[others], b_ub=d[others],
                      bounds=[(None, None)] * m, method="highs")
        if res.status == 0 and -res.fun <= d[i] + 1e-9:
            keep.remove(i)
    return C[keep], d[keep]


def _ray_points(C, d, center, rng, n, scale=4.0):
    """Seeded points inside ``{C z <= d}`` by shooting rays from an interior centre."""
    m = center.shape[0]
    out = []
    for _ in range(n):
        u = rng.standard_normal(m)
        u /= np.linalg.norm(u)
        slack = d - C @ center
        cu = C @ u
        pos = cu > 1e-15
        tmax = np.min(slack[pos] / cu[pos]) if pos.any() else np.inf
        tmax = min(tmax, scale)
        out.append(center + rng.uniform(0.0, 0.999) * tmax * u)
    return np.array(out).reshape(n, m)


# --------------------------------------------------------------------------- compilation

def compile_network(net, region_cap=DEFAULT_REGION_CAP, prune=True):
    """Enumerate feasible activation patterns and return the explicit PWA function."""
    if net.hidden_units > MAX_HIDDEN_UNITS:
        raise RegionCapExceeded(
            f"{net.hidden_units} hidden units exceeds the enumeration limit {MAX_HIDDEN_UNITS}")
    m = net.input_dim
    # state: (C rows, d, M, c) with the current layer input x = M z + c
    states = [(np.zeros((0, m)), np.zeros(0), np.eye(m), np.zeros(m))]
    for layer in net.layers:
        W, bias = layer.weights, layer.bias
        new_states = []
        for C, d, M, c in states:
            P = W @ M
            p = W @ c + bias
            if layer.activation == "identity":
                new_states.append((C, d, P, p))
                continue
            branch = [(C, d, np.ones(P.shape[0]))]
            for j in range(P.shape[0]):
                nxt = []
                for Cb, db, scale in branch:
                    if np.allclose(P[j], 0.0, atol=1e-15):
                        # unit is constant on this region; pre <= 0 is the canonical choice at 0
                        s = scale.copy()
                        if p[j] <= 1e-15:
                            s[j] = 0.0 if layer.activation == "relu" else layer.slope
                        nxt.append((Cb, db, s))
                        continue
                    C_on = np.vstack([Cb, -P[j]])
                    d_on = np.append(db, p[j])
                    C_off = np.vstack([Cb, P[j]])
                    d_off = np.append(db, -p[j])
                    s_on = scale.copy()
                    s_off = scale.copy()
                    s_off[j] = 0.0 if layer.activation == "relu" else layer.slope
                    on_ok = _has_interior(C_on, d_on, m)
                    off_ok = _has_interior(C_off, d_off, m) if on_ok else True
                    if on_ok:
                        nxt.append((C_on, d_on, s_on))
                    if off_ok:
                        nxt.append((C_off, d_off, s_off))
                branch = nxt
                if len(new_states) + len(branch) > region_cap:
                    raise RegionCapExceeded(f"more than {region_cap} regions")
            for Cb, db, s in branch:
                new_states.append((Cb, db, s[:, None] * P, s * p))
        states = new_states
        if len(states) > region_cap:
            raise RegionCapExceeded(f"{len(states)} regions exceeds cap {region_cap}")
    pieces = []
    for C, d, M, c in states:
        if prune and C.shape[0]:
            C, d = _prune(C, d, m)
        pieces.append(Piece(C, d, M, c))
    return PiecewiseAffineFunction(tuple(pieces), m, net.output_dim)


def evaluate(f, z):
    """Apply ``f`` to one point ``(m,)`` or a batch ``(N, m)``.

    For ``m = 1`` scalars and ``(N,)`` arrays are accepted, and a scalar output
    dimension is squeezed.
    """
    z = np.asarray(z, dtype=float)
    m, n = f.input_dim, f.output_dim
    if m == 1 and z.ndim <= 1:
        Z = z.reshape(-1, 1)
    elif z.ndim == 1:
        Z = z[None, :]
    else:
        Z = z
    if Z.shape[1] != m:
        raise DimensionMismatch(f"input of dim {Z.shape[1]} for function on R^{m}")
    idx = f.locate(Z)
    out = np.empty((Z.shape[0], n))
    for k in np.unique(idx):
        p = f.pieces[k]
        sel = idx == k
        out[sel] = Z[sel] @ p.A.T + p.b
    if m == 1 and z.ndim <= 1:
        if n == 1:
            out = out[:, 0]
        return (float(out[0]) if n == 1 else out[0]) if z.ndim == 0 else out
    if z.ndim == 1:
        return out[0]
    return out


# --------------------------------------------------------------------------- preimages

def _as_target(f, x):
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if x.shape[0] != f.output_dim:
        raise DimensionMismatch(f"target of dim {x.shape[0]} for function into R^{f.output_dim}")
    return x


def preimage(f, x):
    """Finite preimage of ``x`` or ``infinite=True`` when a rank-deficient piece reaches it."""
    x = _as_target(f, x)
    m = f.input_dim
    points, owners = [], []
    infinite = False
    for k, p in enumerate(f.pieces):
        z = p._pinv @ (x - p.b)
        if np.linalg.norm(p.A @ z + p.b - x) >= RESIDUAL_TOL:
            continue
        if p.rank() == m:
            if p.contains(z)[0]:
                if not any(np.max(np.abs(z - q)) < RESIDUAL_TOL for q in points):
                    points.append(z)
                    owners.append(k)
        else:
            if p.C.shape[0] == 0 or p.contains(z)[0]:
                infinite = True
                continue
            _, t = _interior_lp(p.C, p.d + BOUNDARY_TOL, m, A_eq=p.A, b_eq=p.A @ z)
            if t >= 0.0:
                infinite = True
    pts = np.array(points).reshape(len(points), m)
    return Preimage(pts, infinite, tuple(owners))


def is_generic(f, x):
    """Finite, non-empty preimage with every point strictly inside its region."""
    pre = preimage(f, x)
    if pre.infinite or len(pre) == 0:
        return False
    for z, k in zip(pre.points, pre.pieces):
        if f.pieces[k].boundary_distance(z) <= GENERIC_TOL:
            return False
        # also reject points that sit on another region's closure
        for j, q in enumerate(f.pieces):
            if j != k and q.contains(z, tol=GENERIC_TOL)[0]:
                return False
    return True


def pushforward_density(f, prior, x):
    """Density of ``f(Z)``, ``Z ~ prior``, at a generic ``x`` (``m = n``)."""
    if f.input_dim != f.output_dim:
        raise DimensionMismatch("pushforward density needs m = n")
    if not is_generic(f, x):
        raise NotGenericPoint(f"{np.asarray(x).tolist()} is not generic")
    pre = preimage(f, x)
    total = 0.0
    for z, k in zip(pre.points, pre.pieces):
        total += gmm_density(prior, z) / abs(np.linalg.det(f.pieces[k].A))
    return total


def local_mixture(f, prior, x0):
    """Components of the analytic mixture that agrees with the pushforward near ``x0``.

    Returns ``(weights, means, covs)``; weights sum to the number of preimages.
    """
    pre = preimage(f, x0)
    ws, mus, covs = [], [], []
    for k in pre.pieces:
        A, b = f.pieces[k].A, f.pieces[k].b
        for w, mu, S in prior.components():
            ws.append(w)
            mus.append(A @ mu + b)
            covs.append(A @ S @ A.T)
    return np.array(ws), np.array(mus), np.array(covs)


def _mixture_value(ws, mus, covs, x):
    m = mus.shape[1]
    total = 0.0
    for w, mu, S in zip(ws, mus, covs):
        r = x - mu
        total += w * np.exp(-0.5 * r @ np.linalg.solve(S, r)) / np.sqrt((2 * np.pi) ** m * np.linalg.det(S))
    return total


def preimage_count_ext(f, prior, x0, delta):
    """Count preimages of a generic ``x0`` by integrating the analytically continued density.

    The local mixture is first checked against the true pushforward density at
    points of ``B(x0, delta)``; its integral is then the sum of component weights
    because every continued Gaussian integrates to one.
    """
    if f.input_dim != f.output_dim:
        raise DimensionMismatch("preimage counting by continuation needs m = n")
    x0 = _as_target(f, x0)
    if not is_generic(f, x0):
        raise NotGenericPoint(f"{x0.tolist()} is not generic for this function")
    ws, mus, covs = local_mixture(f, prior, x0)
    probes = [x0]
    for i in range(f.output_dim):
        for s in (-0.5, 0.5):
            e = np.zeros(f.output_dim)
            e[i] = s * delta
            probes.append(x0 + e)
    for x in probes:
        if not is_generic(f, x):
            raise NotGenericPoint(f"delta={delta} leaves the generic neighbourhood of x0")
        local = _mixture_value(ws, mus, covs, x)
        true = pushforward_density(f, prior, x)
        if abs(local - true) > 1e-9 * max(1.0, abs(true)):
            raise NotGenericPoint(f"local mixture disagrees with pushforward inside B(x0, {delta})")
    total = float(np.sum(ws))  # closed form: each continued component has unit mass
    return int(round(total))


# --------------------------------------------------------------------------- injectivity

def _witness_ok(f, z1, z2):
    if np.max(np.abs(z1 - z2)) < 1e-9:
        return False
    y1 = np.atleast_1d(evaluate(f, z1 if f.input_dim > 1 else z1[0]))
    y2 = np.atleast_1d(evaluate(f, z2 if f.input_dim > 1 else z2[0]))
    return bool(np.max(np.abs(y1 - y2)) <= 1e-10)


def _collision_at(f, y):
    pre = preimage(f, y)
    if len(pre) >= 2:
        z1, z2 = pre.points[0], pre.points[1]
        if _witness_ok(f, z1, z2):
            return z1, z2
    return None


def _null_witness(f, k):
    """Two distinct points of a rank-deficient piece with equal image."""
    p = f.pieces[k]
    m = f.input_dim
    z, _ = _interior_lp(p.C, p.d, m)
    _, s, vt = np.linalg.svd(p.A)
    v = vt[-1]
    step = 0.5
    if p.C.shape[0]:
        slack = p.d - p.C @ z
        cv = np.abs(p.C @ v)
        pos = cv > 1e-15
        if pos.any():
            step = 0.5 * min(step, np.min(slack[pos] / cv[pos]))
    return z, z + step * v


def _classify_1d(f):
    consts, moving = [], []
    for k, p in enumerate(f.pieces):
        lo, hi = p.interval()
        a = p.A[0, 0]
        if a == 0.0:
            consts.append((k, p.b[0]))
        else:
            ends = sorted([a * lo + p.b[0] if np.isfinite(lo) else -np.sign(a) * np.inf,
                           a * hi + p.b[0] if np.isfinite(hi) else np.sign(a) * np.inf])
            moving.append((k, ends[0], ends[1]))
    if not moving:
        z1, z2 = _null_witness(f, consts[0][0])
        return InjectivityVerdict("not_weakly_injective",
                                  "every piece is constant: the image is a finite set of atoms",
                                  "exact_1d", (z1, z2))
    breaks = sorted({v for _, lo, hi in moving for v in (lo, hi) if np.isfinite(v)}
                    | {v for _, v in consts})
    probes = []
    if not breaks:
        probes.append(0.0)
    else:
        probes.append(breaks[0] - 1.0)
        probes.extend(0.5 * (u + v) for u, v in zip(breaks, breaks[1:]) if v - u > 1e-12)
        probes.append(breaks[-1] + 1.0)
    counts = [(t, sum(1 for _, lo, hi in moving if lo < t < hi)) for t in probes]
    multi = [t for t, c in counts if c >= 2]
    single = [t for t, c in counts if c == 1]
    if multi:
        witness = _collision_at(f, multi[0])
        if single:
            return InjectivityVerdict(
                "weakly_injective",
                f"unique preimage on an open interval around y={single[0]:.6g}; "
                f"{sum(1 for _, c in counts if c >= 2)} image interval(s) covered at least twice",
                "exact_1d", witness)
        return InjectivityVerdict(
            "not_weakly_injective",
            f"every open image interval is covered by >= 2 pieces (e.g. y={multi[0]:.6g})",
            "exact_1d", witness)
    # no positive-measure overlap: check the finitely many break values
    for y in breaks:
        pre = preimage(f, np.array([y]))
        if pre.infinite:
            z1, z2 = _null_witness(f, next(k for k, v in consts if abs(v - y) < 1e-12)) if consts else (None, None)
            w = (z1, z2) if z1 is not None else None
            return InjectivityVerdict("observably_injective",
                                      f"y={y:.6g} has infinitely many preimages (measure-zero set)",
                                      "exact_1d", w)
        if len(pre) > 1:
            return InjectivityVerdict("observably_injective",
                                      f"y={y:.6g} has {len(pre)} preimages (measure-zero set)",
                                      "exact_1d", (pre.points[0], pre.points[1]))
    return InjectivityVerdict("injective", "image intervals are pairwise disjoint and no piece is constant",
                              "exact_1d")


def _same_affine_hull(p, q):
    r = p.rank()
    if np.linalg.matrix_rank(np.hstack([p.A, q.A])) != r:
        return False
    return np.linalg.matrix_rank(np.hstack([p.A, (q.b - p.b)[:, None]])) == r


def _pair_lp(p, q, m, interior):
    """Points ``z1 ∈ R_p``, ``z2 ∈ R_q`` with ``f_p(z1) = f_q(z2)``."""
    C = np.zeros((p.C.shape[0] + q.C.shape[0], 2 * m))
    C[:p.C.shape[0], :m] = p.C
    C[p.C.shape[0]:, m:] = q.C
    d = np.concatenate([p.d, q.d])
    A_eq = np.hstack([p.A, -q.A])
    b_eq = q.b - p.b
    if interior:
        return _interior_lp(C, d, 2 * m, A_eq, b_eq)
    return C, d, A_eq, b_eq


def _distinct_collision(f, p, q, m):
    C, d, A_eq, b_eq = _pair_lp(p, q, m, interior=False)
    for k in range(m):
        for sgn in (1.0, -1.0):
            cost = np.zeros(2 * m)
            cost[k], cost[m + k] = -sgn, sgn
            res = linprog(cost, A_ub=C if C.shape[0] else None, b_ub=d if C.shape[0] else None,
                          A_eq=A_eq, b_eq=b_eq, bounds=[(-1e6, 1e6)] * (2 * m), method="highs")
            if res.status == 0 and -res.fun > 1e-7:
                return res.x[:m], res.x[m:]
    return None


def _search_unique(f, rng, per_piece):
    for k, p in enumerate(f.pieces):
        if p.rank() < f.input_dim:
            continue
        center, t = _interior_lp(p.C, p.d, f.input_dim)
        if center is None:
            continue
        for z in np.vstack([center[None, :], _ray_points(p.C, p.d, center, rng, per_piece)]):
            y = p.A @ z + p.b
            if is_generic(f, y) and len(preimage(f, y)) == 1:
                return y
    return None


def _classify_pairs(f, seed):
    m = f.input_dim
    full = [k for k, p in enumerate(f.pieces) if p.rank() == m]
    deficient = [k for k in range(len(f.pieces)) if k not in full]
    overlap = None
    for i, j in itertools.combinations(full, 2):
        p, q = f.pieces[i], f.pieces[j]
        if not _same_affine_hull(p, q):
            continue
        x, t = _pair_lp(p, q, m, interior=True)
        if t > LP_SLACK:
            overlap = (x[:m], x[m:])
            break
    if overlap is not None:
        witness = overlap if _witness_ok(f, *overlap) else None
        y = _search_unique(f, np.random.default_rng(seed), 32)
        if y is not None:
            return InjectivityVerdict(
                "weakly_injective",
                f"pieces overlap on a positive-measure image set; y={np.round(y, 6).tolist()} "
                "is generic with a unique preimage", "static", witness)
        return InjectivityVerdict(
            "unknown", "positive-measure overlap found but no uniquely covered generic point located",
            "static", witness)
    if deficient:
        z1, z2 = _null_witness(f, deficient[0])
        return InjectivityVerdict("observably_injective",
                                  f"piece {deficient[0]} is rank-deficient (infinite preimages on a null set)",
                                  "static", (z1, z2))
    for i, j in itertools.combinations(range(len(f.pieces)), 2):
        hit = _distinct_collision(f, f.pieces[i], f.pieces[j], m)
        if hit is not None:
            w = hit if _witness_ok(f, *hit) else None
            return InjectivityVerdict("observably_injective",
                                      f"pieces {i} and {j} collide on a measure-zero set", "static", w)
    return InjectivityVerdict("injective", "no two closed pieces share an image point", "static")


def _classify_sampling(f, sample_budget, seed):
    rng = np.random.default_rng(seed)
    m = f.input_dim
    z = 3.0 * rng.standard_normal((sample_budget, m))
    ys = evaluate(f, z)
    unique_at, witness = None, None
    for y in np.atleast_2d(ys).reshape(sample_budget, -1):
        if not is_generic(f, y):
            continue
        pre = preimage(f, y)
        if len(pre) == 1 and unique_at is None:
            unique_at = y
        elif len(pre) > 1 and witness is None:
            witness = (pre.points[0], pre.points[1])
        if unique_at is not None and witness is not None:
            break
    if unique_at is not None:
        note = "collision found" if witness is not None else "no collision found in sample"
        return InjectivityVerdict(
            "weakly_injective",
            f"generic point with unique preimage at {np.round(unique_at, 6).tolist()}; {note} "
            f"({sample_budget} samples; sampling never certifies stronger levels)",
            "sampling", witness)
    return InjectivityVerdict("unknown", f"no certificate from {sample_budget} samples", "sampling",
                              witness)


def classify_injectivity(f, sample_budget=2000, seed=0):
    """Place ``f`` in the hierarchy injective ⇒ observably ⇒ weakly injective."""
    m = f.input_dim
    full = [k for k, p in enumerate(f.pieces) if p.rank() == m]
    if not full:
        z1, z2 = _null_witness(f, 0)
        return InjectivityVerdict("not_weakly_injective",
                                  "no piece has full column rank: every image point has infinitely many preimages",
                                  "static", (z1, z2))
    if m == 1 and f.output_dim == 1:
        return _classify_1d(f)
    if len(f.pieces) <= EXACT_PIECE_LIMIT:
        return _classify_pairs(f, seed)
    return _classify_sampling(f, sample_budget, seed)


def architecture_check(net):
    """Static sufficient conditions from layer widths and weight ranks."""
    widths = net.widths
    nondecreasing = all(a <= b for a, b in zip(widths, widths[1:]))
    full_rank = all(np.linalg.matrix_rank(l.weights) == l.weights.shape[1] for l in net.layers)
    if not nondecreasing:
        return InjectivityVerdict("unknown", f"widths {widths} are not non-decreasing", "static")
    if not full_rank:
        return InjectivityVerdict("unknown", "some weight matrix lacks full column rank", "static")
    acts = {l.activation for l in net.layers[:-1]}
    if "relu" in acts:
        return InjectivityVerdict(
            "observably_injective",
            f"ReLU network with non-decreasing widths {widths} and full-column-rank weights "
            "(assumes the image has full dimension)", "static")
    return InjectivityVerdict(
        "injective",
        f"leaky-ReLU network with non-decreasing widths {widths} and full-column-rank weights",
        "static")


def level_rank(level):
    return LEVELS.index(level) if level in LEVELS else -1


# --------------------------------------------------------------------------- continuity

def shared_facets(f):
    """Yield ``(i, j, row, center, C_all, d_all, normal)`` for facets shared by pieces ``i < j``."""
    m = f.input_dim
    for i, j in itertools.combinations(range(len(f.pieces)), 2):
        p, q = f.pieces[i], f.pieces[j]
        for r in range(p.C.shape[0]):
            c, dr = p.C[r], p.d[r]
            cn = c / np.linalg.norm(c)
            rows, rhs = [], []
            for Cx, dx in ((p.C, p.d), (q.C, q.d)):
                for cc, dd in zip(Cx, dx):
                    cos = abs(cc @ cn) / np.linalg.norm(cc)
                    if cos > 1 - 1e-12:
                        continue
                    rows.append(cc)
                    rhs.append(dd)
            Cf = np.array(rows).reshape(len(rows), m)
            df = np.array(rhs)
            z, t = _interior_lp(Cf, df, m, A_eq=c[None, :], b_eq=np.array([dr]))
            if t > LP_SLACK and q.contains(z, tol=1e-8)[0]:
                yield i, j, z, Cf, df, cn


def continuity_defect(f, per_facet=100, seed=0):
    """Max disagreement of adjoining pieces at seeded points of every shared facet."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    m = f.input_dim
    for i, j, z0, Cf, df, n in shared_facets(f):
        if m == 1:
            pts = z0[None, :]
        else:
            pts = []
            for _ in range(per_facet):
                u = rng.standard_normal(m)
                u -= (u @ n) * n
                u /= np.linalg.norm(u)
                slack = df - Cf @ z0
                cu = Cf @ u
                pos = cu > 1e-15
                tmax = min(np.min(slack[pos] / cu[pos]) if pos.any() else np.inf, 4.0)
                pts.append(z0 + rng.uniform(0, 0.999) * tmax * u)
            pts = np.array(pts)
        p, q = f.pieces[i], f.pieces[j]
        diff = np.max(np.abs((pts @ p.A.T + p.b) - (pts @ q.A.T + q.b)))
        worst = max(worst, float(diff))
    return worst
