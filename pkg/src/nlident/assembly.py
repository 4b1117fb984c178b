"""Quadrature and assembly of the nonlocal bilinear form

    B(theta; u, v) = int int theta((x+y)/2) gamma(x, y) (u(y) - u(x)) (v(y) - v(x)) dy dx

over (Omega u Omega_I)^2, for continuous piecewise-linear u, v.

Every double integral in the package goes through ``PairQuadrature``, which
integrates element pair by element pair in (r, x) with r = y - x. Pieces of
the r-range ending at r = 0 use Gauss-Jacobi with weight |r|^(1 - 2s) for the
fractional kernel, so the |r|^(-1-2s) singularity is integrated exactly
against the (linear) basis differences. The eps-ball truncation is a cut in r
and therefore exact as well, aligned with the mesh or not.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from . import kernel as kern
from .banded import SymBandMatrix
from .kernel import Family, KernelSpec
from .mesh import Mesh1D

OUTER_ORDER = 5
INNER_ORDER = 5
LOAD_ORDER = 5
# target number of (x, y) pairs per block
REGIONS = ("full", "coupled", "omega")
BLOCK_PAIRS = 1_000_000
# geometry is kept in memory below this many pairs
CACHE_PAIRS = 4_000_000

_UPPER_TERMS = [(p, q) for p in range(4) for q in range(p, 4)]


class QuadratureError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    t, w = roots_legendre(n)
    return 0.5 * (t + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi01(n: int, beta: float):
    """Nodes/weights on [0, 1] for the weight t^beta."""
    t, w = roots_jacobi(n, 0.0, beta)
    return 0.5 * (t + 1.0), w / 2.0 ** (1.0 + beta)


def singular_weight_exponent(k: KernelSpec) -> float:
    # (phi(y) - phi(x))^2 gamma ~ |y - x|^(1 - 2s) near the diagonal
    return 1.0 - 2.0 * k.s if k.family is Family.FRACTIONAL else 0.0


@dataclass
class PairBlock:
    """Flattened quadrature pairs.

    For pair p the nodal difference u(y) - u(x) is ``sum_a d[p, a] * u[idx[p, a]]``
    and ``w[p]`` already contains both quadrature weights and the kernel.
    """

    idx: np.ndarray  # (P, 4) int: dofs [L, L+1, K, K+1]
    d: np.ndarray  # (P, 4): [phi_L(y), phi_L+1(y), -phi_K(x), -phi_K+1(x)]
    w: np.ndarray  # (P,)
    z: np.ndarray  # (P,) midpoints (x + y) / 2
    cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.w.size

    def diff(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.einsum("pa,pa->p", self.d, u[self.idx])


def _basis_key(mesh: Mesh1D, basis) -> tuple:
    return ("basis", mesh.a, mesh.b, mesh.eps, mesh.interior_elem_count, str(basis))


def bandwidth(mesh: Mesh1D, eps: float) -> int:
    """Max |i - j| of node pairs whose hat functions interact."""
    right = np.minimum(mesh.nodes[1:] + eps, mesh.hi)
    last = np.clip(np.searchsorted(mesh.nodes, right, side="left") - 1, 0, mesh.n_elems - 1)
    return int(np.max(last + 1 - np.arange(mesh.n_elems)))


class PairQuadrature:
    """Tensor quadrature over all interacting (x, y) pairs of a mesh.

    Works element pair by element pair in the coordinates (r, x) with
    r = y - x. For fixed r the admissible x form an interval whose ends are
    piecewise linear in r, so the r-range is split at the four corner offsets
    of the pair, at 0 and at +-eps. The kernel then only blows up at r = 0,
    which is always an end of a piece and gets a Gauss-Jacobi rule.

    ``z_breaks`` lists midpoints z where theta may have a kink or jump (the
    parameter mesh nodes, say). The lines x + y = 2z are then cut out as well,
    so every piece sees a smooth integrand.
    """

    def __init__(self, mesh: Mesh1D, k: KernelSpec, outer_order: int = OUTER_ORDER,
                 inner_order: int = INNER_ORDER, threads: int = 0, cache: bool | None = None,
                 z_breaks=()):
        if k.eps != mesh.eps:
            raise ValueError(f"kernel radius {k.eps} differs from mesh eps {mesh.eps}")
        self.mesh, self.kernel = mesh, k
        self.z_breaks = np.unique(np.asarray(z_breaks, dtype=float).ravel())
        self.outer_order, self.inner_order = outer_order, inner_order
        self.threads = threads
        self.bw = bandwidth(mesh, k.eps)

        nodes = mesh.nodes
        ne = mesh.n_elems
        last = np.searchsorted(nodes, nodes[1:] + k.eps, side="left")  # first node >= k1 + eps
        last = np.minimum(last, ne) - 1
        first = np.searchsorted(nodes, nodes[:-1] - k.eps, side="right") - 1
        first = np.maximum(first, 0)
        counts = last - first + 1
        self.pk = np.repeat(np.arange(ne), counts)
        self.pl = np.concatenate([np.arange(f, l + 1) for f, l in zip(first, last)])

        per_pair = 3 * outer_order * inner_order
        step = max(1, int(BLOCK_PAIRS // per_pair))
        n = self.pk.size
        self._slices = [slice(i, min(i + step, n)) for i in range(0, n, step)]
        if cache is None:
            cache = per_pair * n <= CACHE_PAIRS
        self._cached = [self._build(s) for s in self._slices] if cache else None
        self._tensors: dict = {}

    # -- geometry -----------------------------------------------------------
    def _build(self, sl: slice) -> PairBlock:
        k = self.kernel
        nodes = self.mesh.nodes
        ek, el = self.pk[sl], self.pl[sl]
        k0, k1, l0, l1 = nodes[ek], nodes[ek + 1], nodes[el], nodes[el + 1]
        r_lo = np.maximum(l0 - k1, -k.eps)
        r_hi = np.minimum(l1 - k0, k.eps)
        # parameter breaks strictly inside each pair's range of midpoints
        zb = self.z_breaks
        z_lo, z_hi = 0.5 * (k0 + l0), 0.5 * (k1 + l1)
        i0 = np.searchsorted(zb, z_lo, side="right")
        nb = np.searchsorted(zb, z_hi, side="left") - i0
        width = int(nb.max(initial=0))
        zpad = np.full((ek.size, width), np.nan)
        for j in range(width):
            has = nb > j
            zpad[has, j] = zb[i0[has] + j]
        # r where a break line x = z - r/2 meets a side of the (r, x) trapezoid
        extra = np.concatenate([2 * (zpad - k0[:, None]), 2 * (l0[:, None] - zpad),
                                2 * (zpad - k1[:, None]), 2 * (l1[:, None] - zpad)], axis=1)
        extra = np.where(np.isnan(extra), r_lo[:, None], extra)
        cuts = np.concatenate(
            [np.stack([r_lo, l0 - k0, l1 - k1, np.zeros_like(r_lo), r_hi], axis=1), extra], axis=1)
        bp = np.sort(np.clip(cuts, r_lo[:, None], r_hi[:, None]), axis=1)
        ra, rb = bp[:, :-1], bp[:, 1:]
        keep = rb > ra
        pair = np.broadcast_to(np.arange(ek.size)[:, None], keep.shape)[keep]
        # one piece per (r-interval, band of midpoints between breaks)
        bands = nb[pair] + 1
        piece = np.repeat(np.arange(pair.size), bands)
        band = np.arange(piece.size) - np.repeat(np.cumsum(bands) - bands, bands)
        pair = pair[piece]
        ra, rb = ra[keep][piece], rb[keep][piece]
        zedges = np.concatenate([z_lo[:, None], zpad, z_hi[:, None]], axis=1)
        zedges[np.arange(ek.size), nb + 1] = z_hi
        zb_lo = zedges[pair, band]
        zb_hi = zedges[pair, band + 1]
        ek, el = ek[pair], el[pair]
        k0, k1, l0, l1 = k0[pair], k1[pair], l0[pair], l1[pair]
        length = rb - ra

        beta = singular_weight_exponent(k)
        tr, wr = gauss_legendre01(self.inner_order)
        ts, ws = gauss_jacobi01(self.inner_order, beta)
        # r nodes: regular pieces left to right, singular pieces away from r = 0
        r = ra[:, None] + length[:, None] * tr
        wrr = length[:, None] * wr * kern.eval_radial(k, r)
        s_lo, s_hi = ra == 0, rb == 0
        for m, start, sgn in ((s_lo, ra, 1.0), (s_hi, rb, -1.0)):
            rs = length[m, None] * ts
            r[m] = start[m, None] + sgn * rs
            wrr[m] = length[m, None] ** (1.0 + beta) * ws * kern.eval_radial(k, rs) / rs**beta

        # x interval for each r, then Gauss-Legendre in x
        xa = np.maximum(np.maximum(k0[:, None], l0[:, None] - r), zb_lo[:, None] - 0.5 * r)
        xb = np.minimum(np.minimum(k1[:, None], l1[:, None] - r), zb_hi[:, None] - 0.5 * r)
        xb = np.maximum(xb, xa)
        tx, wx = gauss_legendre01(self.outer_order)
        x = xa[..., None] + (xb - xa)[..., None] * tx
        w = (wrr[..., None] * (xb - xa)[..., None] * wx).ravel()
        r = np.broadcast_to(r[..., None], x.shape).ravel()
        x = x.ravel()
        y = x + r
        q = self.inner_order * self.outer_order
        ek, el = np.repeat(ek, q), np.repeat(el, q)
        a1 = (x - nodes[ek]) / (nodes[ek + 1] - nodes[ek])
        b1 = (y - nodes[el]) / (nodes[el + 1] - nodes[el])
        idx = np.stack([el, el + 1, ek, ek + 1], axis=1)
        d = np.stack([1.0 - b1, b1, a1 - 1.0, -a1], axis=1)
        return PairBlock(idx, d, w, x + 0.5 * r)

    def blocks(self):
        if self._cached is not None:
            yield from self._cached
        else:
            for s in self._slices:
                yield self._build(s)

    def _map(self, fn):
        """Apply fn to every block; results come back in block order."""
        if self.threads and self.threads > 1:
            if self._cached is not None:
                items = self._cached
                with ThreadPoolExecutor(self.threads) as ex:
                    return list(ex.map(fn, items))
            with ThreadPoolExecutor(self.threads) as ex:
                return list(ex.map(lambda s: fn(self._build(s)), self._slices))
        return [fn(b) for b in self.blocks()]

    @property
    def n_pairs(self) -> int:
        return sum(len(b) for b in self.blocks())

    # -- reductions ---------------------------------------------------------
    def theta_at(self, blk: PairBlock, theta) -> np.ndarray:
        """theta at the pair midpoints; ThetaFields use a cached basis matrix."""
        from .theta import ThetaField

        if isinstance(theta, ThetaField):
            return self._basis_at(blk, theta.mesh, theta.basis) @ theta.coeffs
        if callable(theta):
            return np.broadcast_to(np.asarray(theta(blk.z), dtype=float), blk.z.shape)
        return np.full(blk.z.shape, float(theta))

    def _band_terms(self, blk: PairBlock):
        """Flat band index, point index and basis-product factor of every term."""
        bw = self.bw
        keys, pts, coef = [], [], []
        pt = np.arange(len(blk))
        for p, q in _UPPER_TERMS:
            ip, iq = blk.idx[:, p], blk.idx[:, q]
            lo, hi = np.minimum(ip, iq), np.maximum(ip, iq)
            c = blk.d[:, p] * blk.d[:, q]
            if p != q:
                c = c * np.where(ip == iq, 2.0, 1.0)
            keys.append(lo * (bw + 1) + (hi - lo))
            pts.append(pt)
            coef.append(c)
        return np.concatenate(keys), np.concatenate(pts), np.concatenate(coef)

    def theta_tensor(self, pmesh: Mesh1D, basis) -> sp.csr_matrix:
        """Sparse T with T @ coeffs = flattened upper band of the stiffness.

        The stiffness is linear in the parameter coefficients, so for a fixed
        parameter space it is assembled once and reused for every iterate.
        """
        from .theta import Basis

        key = _basis_key(pmesh, Basis(basis))
        if key in self._tensors:
            return self._tensors[key]
        n_band = self.mesh.n_nodes * (self.bw + 1)

        def one(blk):
            bmat = self._basis_at(blk, pmesh, basis)
            keys, pts, coef = self._band_terms(blk)
            s = sp.csr_matrix((coef * blk.w[pts], (keys, pts)), shape=(n_band, len(blk)))
            return s @ bmat

        t = None
        for part in self._map(one):
            t = part if t is None else t + part
        t = t.tocsr()
        self._tensors[key] = t
        return t

    def _basis_at(self, blk: PairBlock, pmesh: Mesh1D, basis):
        from .theta import basis_matrix

        key = _basis_key(pmesh, basis)
        if key not in blk.cache:
            blk.cache[key] = basis_matrix(pmesh, basis, blk.z)
        return blk.cache[key]

    def _check_positive(self, theta):
        for blk in self.blocks():
            th = self.theta_at(blk, theta)
            if np.any(th <= 0):
                raise ValueError(
                    f"diffusion parameter not positive at a quadrature point (min {th.min():.3e})")

    def stiffness(self, theta, check_positive: bool = True) -> SymBandMatrix:
        from .theta import ThetaField

        n, bw = self.mesh.n_nodes, self.bw
        if isinstance(theta, ThetaField):
            if check_positive:
                self._check_positive(theta)
            t = self.theta_tensor(theta.mesh, theta.basis)
            return SymBandMatrix((t @ theta.coeffs).reshape(n, bw + 1))

        def one(blk: PairBlock):
            th = self.theta_at(blk, theta)
            if check_positive and np.any(th <= 0):
                raise ValueError(
                    f"diffusion parameter not positive at a quadrature point (min {th.min():.3e})")
            keys, pts, coef = self._band_terms(blk)
            return np.bincount(keys, weights=coef * (blk.w * th)[pts], minlength=n * (bw + 1))

        total = np.zeros(n * (bw + 1))
        for part in self._map(one):
            total += part
        return SymBandMatrix(total.reshape(n, bw + 1))

    def form(self, theta, u, v) -> float:
        """B(theta; u, v)."""

        def one(blk):
            return float(np.sum(blk.w * self.theta_at(blk, theta) * blk.diff(u) * blk.diff(v)))

        return float(sum(self._map(one)))

    def param_pairing(self, pmesh: Mesh1D, basis, u, w) -> np.ndarray:
        """Vector of B(psi_k; u, w) over every parameter basis function psi_k."""
        u, w = np.asarray(u, dtype=float), np.asarray(w, dtype=float)
        n, bw = self.mesh.n_nodes, self.bw
        prod = np.zeros((n, bw + 1))
        prod[:, 0] = u * w
        for m in range(1, bw + 1):
            prod[: n - m, m] = u[: n - m] * w[m:] + u[m:] * w[: n - m]
        return self.theta_tensor(pmesh, basis).T @ prod.ravel()

    def weighted_abs(self, weight_fn, u, region: str = "full") -> float:
        """sum over pairs of w * |weight_fn(z)| * (u(y) - u(x))^2.

        ``region`` selects the element pairs: "full" keeps all of them,
        "coupled" drops pairs with both elements in the interaction layer and
        "omega" keeps only pairs with both elements in Omega.
        """
        if region not in REGIONS:
            raise ValueError(f"region must be one of {REGIONS}, got {region!r}")
        nodes, a, b = self.mesh.nodes, self.mesh.a, self.mesh.b
        tol = 1e-12 * (b - a)

        def one(blk):
            du = blk.diff(u)
            terms = blk.w * np.abs(weight_fn(blk)) * du * du
            if region != "full":
                in_l = (nodes[blk.idx[:, 0]] >= a - tol) & (nodes[blk.idx[:, 1]] <= b + tol)
                in_k = (nodes[blk.idx[:, 2]] >= a - tol) & (nodes[blk.idx[:, 3]] <= b + tol)
                terms = terms[(in_l | in_k) if region == "coupled" else (in_l & in_k)]
            return float(np.sum(terms))

        return float(sum(self._map(one)))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NonlocalSystem:
    mesh: Mesh1D
    kernel: KernelSpec
    stiffness: SymBandMatrix
    load_full: np.ndarray = field(repr=False)

    @property
    def interior(self) -> np.ndarray:
        return self.mesh.interior_nodes

    @property
    def constraint(self) -> np.ndarray:
        return self.mesh.constraint_nodes

    @property
    def load(self) -> np.ndarray:
        return self.load_full[self.interior]


@dataclass(frozen=True)
class ReducedSystem:
    matrix: SymBandMatrix
    rhs: np.ndarray
    pinned: np.ndarray  # full nodal vector: g on constraint nodes, 0 inside
    interior: np.ndarray


def load_vector(mesh: Mesh1D, f, order: int = LOAD_ORDER) -> np.ndarray:
    """int_Omega f phi_i dx for every node (zero for nodes outside Omega's closure)."""
    t, w = gauss_legendre01(order)
    el = mesh.omega_elems
    x0, hh = mesh.nodes[el], mesh.widths[el]
    x = x0[:, None] + hh[:, None] * t
    fw = np.asarray(f(x), dtype=float) * hh[:, None] * w
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, el, fw @ (1.0 - t))
    np.add.at(out, el + 1, fw @ t)
    return out


def field_breaks(*thetas) -> np.ndarray:
    """Parameter mesh nodes of the ThetaFields among ``thetas``."""
    from .theta import ThetaField

    parts = [t.mesh.nodes for t in thetas if isinstance(t, ThetaField)]
    return np.unique(np.concatenate(parts)) if parts else np.empty(0)


def assemble_system(theta, k: KernelSpec, mesh: Mesh1D, f, quad: PairQuadrature | None = None,
                    verify: bool = False) -> NonlocalSystem:
    quad = quad or PairQuadrature(mesh, k, z_breaks=field_breaks(theta))
    a = quad.stiffness(theta)
    if verify:
        check_quadrature(theta, k, mesh, a)
    return NonlocalSystem(mesh, k, a, load_vector(mesh, f))


def check_quadrature(theta, k: KernelSpec, mesh: Mesh1D, a: SymBandMatrix | None = None,
                     tol: float | None = None, z_breaks=None) -> float:
    """Compare against doubled quadrature orders; return the max relative change."""
    zb = field_breaks(theta) if z_breaks is None else z_breaks
    a = a if a is not None else PairQuadrature(mesh, k, z_breaks=zb).stiffness(theta)
    fine = PairQuadrature(mesh, k, 2 * OUTER_ORDER, 2 * INNER_ORDER, cache=False,
                          z_breaks=zb).stiffness(theta)
    rel = float(np.abs(fine.upper - a.upper).max() / np.abs(fine.upper).max())
    if tol is None:
        tol = 1e-6 if k.family is Family.FRACTIONAL else 1e-8
    if rel > tol:
        raise QuadratureError(f"doubled-order quadrature changed the stiffness by {rel:.2e} "
                              f"(relative, allowed {tol:.0e})")
    return rel


def apply_volume_constraint(sys: NonlocalSystem, g) -> ReducedSystem:
    mesh = sys.mesh
    pinned = np.zeros(mesh.n_nodes)
    c = sys.constraint
    pinned[c] = np.asarray(g(mesh.nodes[c]), dtype=float) if callable(g) else g
    inter = sys.interior
    rhs = sys.load - sys.stiffness.matvec(pinned)[inter]
    return ReducedSystem(sys.stiffness.principal(inter[0], inter[-1] + 1), rhs, pinned, inter)


def bilinear_entry(theta, k: KernelSpec, mesh: Mesh1D, i: int, j: int,
                   quad: PairQuadrature | None = None) -> float:
    quad = quad or PairQuadrature(mesh, k, z_breaks=field_breaks(theta))
    ei, ej = np.zeros(mesh.n_nodes), np.zeros(mesh.n_nodes)
    ei[i], ej[j] = 1.0, 1.0
    return quad.form(theta, ej, ei)


def energy_norm(sys_unit: NonlocalSystem, v) -> float:
    """Nonlocal energy semi-norm from a stiffness assembled with theta = 1."""
    q = sys_unit.stiffness.quad(v)
    if q < -1e-12 * max(1.0, sys_unit.stiffness.max_abs() * float(np.dot(v, v))):
        raise ArithmeticError(f"negative energy {q:.3e}: stiffness is not PSD")
    return float(np.sqrt(max(q, 0.0)))


def gradient_pairing(psi, k: KernelSpec, mesh: Mesh1D, u, w,
                     quad: PairQuadrature | None = None) -> float:
    """int int psi((x+y)/2) gamma (u(y) - u(x)) (w(y) - w(x))."""
    quad = quad or PairQuadrature(mesh, k, z_breaks=field_breaks(psi))
    return quad.form(psi, _values(u), _values(w))


def weighted_theta_error(theta_ref, theta_m, k: KernelSpec, mesh_fine: Mesh1D, u_star,
                         quad: PairQuadrature | None = None, region: str = "full") -> float:
    """int int |theta_ref - theta_m| gamma (u*(y) - u*(x))^2 on the fine mesh.

    See ``PairQuadrature.weighted_abs`` for the choices of ``region``.
    """
    quad = quad or PairQuadrature(mesh_fine, k, z_breaks=field_breaks(theta_ref, theta_m))
    return quad.weighted_abs(
        lambda blk: quad.theta_at(blk, theta_ref) - quad.theta_at(blk, theta_m), _values(u_star),
        region)


def _values(u):
    return getattr(u, "values", u)


# -- L2 quadrature over Omega -------------------------------------------------


@dataclass(frozen=True)
class OmegaQuadrature:
    """Gauss points over Omega on the union of one or more partitions."""

    x: np.ndarray
    w: np.ndarray

    @classmethod
    def on(cls, a: float, b: float, *breaks, order: int = LOAD_ORDER) -> "OmegaQuadrature":
        pts = [np.array([a, b])] + [np.asarray(p, dtype=float) for p in breaks]
        bp = np.unique(np.concatenate(pts))
        bp = bp[(bp >= a) & (bp <= b)]
        # breakpoints that differ only by round-off would leave slivers where the
        # two sides disagree; keep one representative per cluster
        keep = np.concatenate([[True], np.diff(bp) > 1e-12 * (b - a)])
        keep[-1] = True
        bp = bp[keep]
        if bp.size > 2 and bp[-1] - bp[-2] <= 1e-12 * (b - a):
            bp = np.delete(bp, -2)
        t, w = gauss_legendre01(order)
        hh = np.diff(bp)
        return cls((bp[:-1, None] + hh[:, None] * t).ravel(), (hh[:, None] * w).ravel())

    def integrate(self, vals) -> float:
        return float(np.dot(self.w, vals))


def l2_error_on_omega(u, ref, quad: OmegaQuadrature | None = None) -> float:
    """||u - ref||_{L2(Omega)}; u is a StateField, ref a callable or StateField."""
    if quad is None:
        breaks = [u.mesh.nodes] + ([ref.mesh.nodes] if hasattr(ref, "mesh") else [])
        quad = OmegaQuadrature.on(u.mesh.a, u.mesh.b, *breaks)
    diff = u(quad.x) - np.asarray(ref(quad.x), dtype=float)
    return float(np.sqrt(quad.integrate(diff * diff)))
