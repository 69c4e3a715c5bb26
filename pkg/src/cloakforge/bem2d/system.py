"""Boundary system assembly and solution.

Unknown ordering [w_p | u_d | w_d]:

  w_p  scaled normal derivative (1/mu1) du/dn, constant per PEC element
  u_d  total-field trace, linear nodal on the interface loops (one value
       per element start node)
  w_d  scaled normal derivative, constant per interface element

Rows mirror it: the Dirichlet condition collocated at PEC midpoints,
then flux continuity tested against the nodal hat functions, then trace
continuity collocated at interface midpoints. The rows come from the
exterior representation

  u = u_inc + mu1 S1 w_p + mu1 S1 w_d - D1 u_d

and the interior representation u = D2 u_d - mu2 S2 w_d, combined so the
trace jump terms of S, D cancel between the two sides.

The flux row cannot be point-collocated at midpoints: the hypersingular
operator applied to the mesh-scale alternating ("sawtooth") trace mode
vanishes at every element midpoint by parity, which leaves that mode
numerically invisible and the assembled matrix near singular. Testing
the flux equation with the hat functions instead keeps the
integration-by-parts form, sees the sawtooth, and reduces every entry
to weakly singular element integrals:

  <N u, v> = -<v', S u'> + k^2 oint oint (n_x . n_y) G u v

with v' and u' piecewise constant, so only single-layer moments at
interior Gauss points appear.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..errors import GeometryError, SingularSystemError
from ..hmat import assemble_hmatrix, agglomerate, build_cluster_tree, hlu_factorize
from .media import Medium
from .mesh import BoundaryMesh
from .kernels import hankel1_0
from .operators import element_integrals, endpoint_g_integrals
from .quadrature import gauss01

FLUX_TEST_ORDER = 8


@dataclass(frozen=True)
class DofLayout:
    """Index bookkeeping between external DOF numbers and mesh elements."""

    n_p: int
    n_d: int
    pec_elems: np.ndarray
    diel_elems: np.ndarray
    prev_local: np.ndarray  # local index of the loop predecessor element

    @staticmethod
    def from_mesh(mesh: BoundaryMesh) -> "DofLayout":
        n_d = len(mesh.diel_elems)
        prev_local = np.zeros(n_d, dtype=np.int64)
        if n_d:
            prev_local[mesh.diel_next] = np.arange(n_d)
        return DofLayout(
            n_p=len(mesh.pec_elems),
            n_d=n_d,
            pec_elems=mesh.pec_elems,
            diel_elems=mesh.diel_elems,
            prev_local=prev_local,
        )

    @property
    def size(self) -> int:
        return self.n_p + 2 * self.n_d

    @property
    def sl_wp(self) -> slice:
        return slice(0, self.n_p)

    @property
    def sl_ud(self) -> slice:
        return slice(self.n_p, self.n_p + self.n_d)

    @property
    def sl_wd(self) -> slice:
        return slice(self.n_p + self.n_d, self.size)


@dataclass(frozen=True)
class BoundarySolution:
    """Solved boundary densities for one right-hand side."""

    w_p: np.ndarray
    u_d: np.ndarray
    w_d: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.w_p, self.u_d, self.w_d])

    @staticmethod
    def from_vector(layout: DofLayout, x: np.ndarray) -> "BoundarySolution":
        return BoundarySolution(
            w_p=x[layout.sl_wp].copy(),
            u_d=x[layout.sl_ud].copy(),
            w_d=x[layout.sl_wd].copy(),
        )


def footprint_segments(mesh: BoundaryMesh, layout: DofLayout) -> np.ndarray:
    """Per-DOF geometric footprints for clustering, ordered like the DOFs.

    Interface elements appear twice (u_d and w_d carry the same support),
    which keeps one shared cluster tree valid for rows and columns.
    """
    pec = mesh.segment_endpoints(layout.pec_elems)
    die = mesh.segment_endpoints(layout.diel_elems)
    return np.concatenate([pec, die, die], axis=0)


class _EntryEvaluator:
    """Dense sub-block evaluation for arbitrary external index sets.

    Rows and columns both split into the three DOF families; each of the
    nine family pairs maps to a short kernel recipe. Singular and
    neighboring pairs are recognized inside element_integrals through
    the global element ids attached to the evaluation points.
    """

    def __init__(self, mesh: BoundaryMesh, layout: DofLayout,
                 outer: Medium, inner: Medium | None):
        self.mesh = mesh
        self.layout = layout
        self.outer = outer
        self.inner = inner
        self.xp = mesh.midpoints[layout.pec_elems]
        self.xd = mesh.midpoints[layout.diel_elems]
        self.nd = mesh.normals[layout.diel_elems]
        self.k = (outer.k, None if inner is None else inner.k)
        self.mu = (outer.mu, None if inner is None else inner.mu)
        if layout.n_d:
            tq, wq = gauss01(FLUX_TEST_ORDER)
            self.tq, self.wq = tq, wq
            segs = mesh.segments[layout.diel_elems]
            a0 = mesh.nodes[segs[:, 0]]
            a1 = mesh.nodes[segs[:, 1]]
            self.gx = a0[:, None, :] + tq[None, :, None] * (a1 - a0)[:, None, :]
            h = mesh.lengths[layout.diel_elems]
            self.w_hat0 = wq[None, :] * (1.0 - tq)[None, :] * h[:, None]
            self.w_hat1 = wq[None, :] * tq[None, :] * h[:, None]
            self.next_local = mesh.diel_next
            # hat-tested rows carry an extra arclength measure; normalize
            # by the support length to keep entries on the scale of the
            # collocated rows
            self.row_scale = 2.0 / (h[layout.prev_local] + h)

    def __call__(self, I, J):  # noqa: E741  (row index set)
        I = np.asarray(I, dtype=np.int64).reshape(-1)
        J = np.asarray(J, dtype=np.int64).reshape(-1)
        lay = self.layout
        out = np.zeros((len(I), len(J)), dtype=complex)
        bounds = (0, lay.n_p, lay.n_p + lay.n_d, lay.size)
        for rf in range(3):
            rpos = np.flatnonzero((I >= bounds[rf]) & (I < bounds[rf + 1]))
            if len(rpos) == 0:
                continue
            rloc = I[rpos] - bounds[rf]
            for cf in range(3):
                cpos = np.flatnonzero((J >= bounds[cf]) & (J < bounds[cf + 1]))
                if len(cpos) == 0:
                    continue
                cloc = J[cpos] - bounds[cf]
                if rf == 1:
                    blk = self._flux_block(cf, rloc, cloc)
                else:
                    blk = self._point_block(rf, cf, rloc, cloc)
                out[np.ix_(rpos, cpos)] = blk
        return out

    # collocated rows (Dirichlet at PEC midpoints, trace at interface
    # midpoints) -------------------------------------------------------
    def _integrals(self, ki, elems, x, which, nx=None, xelem=None):
        return element_integrals(ki, self.mesh, elems, x, which,
                                 nx=nx, point_elem=xelem)

    def _s(self, ki, x, xelem, elems):
        r = self._integrals(ki, elems, x, ("g0", "g1"), xelem=xelem)
        return r["g0"] + r["g1"]

    def _d_hats(self, ki, x, xelem, c0, c1):
        a = self._integrals(ki, c0, x, ("d0",), xelem=xelem)["d0"]
        b = self._integrals(ki, c1, x, ("d1",), xelem=xelem)["d1"]
        return a + b

    def _point_block(self, rf, cf, rloc, cloc):
        lay = self.layout
        if rf == 0:
            x, xelem = self.xp[rloc], lay.pec_elems[rloc]
        else:
            x, xelem = self.xd[rloc], lay.diel_elems[rloc]
        k1, k2 = self.k
        mu1, mu2 = self.mu
        if cf == 0:
            return -mu1 * self._s(k1, x, xelem, lay.pec_elems[cloc])
        if cf == 1:
            c0 = lay.diel_elems[cloc]
            c1 = lay.diel_elems[lay.prev_local[cloc]]
            if rf == 0:
                return self._d_hats(k1, x, xelem, c0, c1)
            return (self._d_hats(k1, x, xelem, c0, c1)
                    + self._d_hats(k2, x, xelem, c0, c1))
        elems = lay.diel_elems[cloc]
        if rf == 0:
            return -mu1 * self._s(k1, x, xelem, elems)
        return -(mu1 * self._s(k1, x, xelem, elems)
                 + mu2 * self._s(k2, x, xelem, elems))

    # hat-tested flux rows ---------------------------------------------
    def _flux_points(self, rloc):
        """Gauss points over the union of the support elements.

        The hat of row r spans its predecessor element and the element r
        itself; the union is deduplicated so every element's quadrature
        grid is evaluated once. inv maps the 2R support slots (prev
        block, then own block) into the unique element list.
        """
        lay = self.layout
        ep = lay.prev_local[rloc]
        usup, inv = np.unique(np.concatenate([ep, rloc]), return_inverse=True)
        pts = self.gx[usup].reshape(-1, 2)
        pelem = np.repeat(lay.diel_elems[usup], len(self.tq))
        nxg = np.repeat(self.nd[usup], len(self.tq), axis=0)
        return ep, usup, inv, pts, pelem, nxg

    def _hat_contract(self, F, ep, rloc, inv):
        """Integrate unique-element point values against the test hats."""
        q = len(self.tq)
        R = len(rloc)
        F = F.reshape(-1, q, F.shape[1])
        return (np.einsum("rq,rqc->rc", self.w_hat1[ep], F[inv[:R]])
                + np.einsum("rq,rqc->rc", self.w_hat0[rloc], F[inv[R:]]))

    def _flux_block(self, cf, rloc, cloc):
        # intermediates are (2 R Q, C) complex; bound the row chunk
        step = max(8, int(3_000_000 // (2 * len(self.tq) * max(1, len(cloc)))))
        if len(rloc) > step:
            parts = [self._flux_chunk(cf, rloc[i:i + step], cloc)
                     for i in range(0, len(rloc), step)]
            return np.concatenate(parts, axis=0)
        return self._flux_chunk(cf, rloc, cloc)

    def _flux_chunk(self, cf, rloc, cloc):
        lay, mesh = self.layout, self.mesh
        k1, k2 = self.k
        mu1, mu2 = self.mu
        ep, usup, inv, pts, pelem, nxg = self._flux_points(rloc)
        scale = self.row_scale[rloc][:, None]

        if cf in (0, 2):
            # the tested adjoint double layer splits into a tangential
            # part that telescopes to endpoint sources plus a weakly
            # singular remainder:
            #   D*(x, y) = -(n_x . tau_y) dG/ds_y - (n_x . n_y) D(x, y)
            # so the inner integral needs only endpoint Green values and
            # the plain double-layer moments, and the endpoint log
            # singularity at shared mesh nodes integrates in closed form
            if cf == 0:
                elems = lay.pec_elems[cloc]
                ks = (k1,)
            else:
                elems = lay.diel_elems[cloc]
                ks = (k1, k2)
            segs_c = mesh.segments[elems]
            an = mesh.nodes[segs_c[:, 0]]
            bn = mesh.nodes[segs_c[:, 1]]
            ndT = nxg @ mesh.tangents[elems].T
            ndN = nxg @ mesh.normals[elems].T
            ra = np.sqrt(np.sum((pts[:, None, :] - an[None]) ** 2, axis=-1))
            rb = np.sqrt(np.sum((pts[:, None, :] - bn[None]) ** 2, axis=-1))
            F = 0.0
            ga_k, gb_k = [], []
            for ki in ks:
                dd = self._integrals(ki, elems, pts, ("d0", "d1"),
                                     xelem=pelem)
                ga = 0.25j * hankel1_0(ki * ra)
                gb = 0.25j * hankel1_0(ki * rb)
                F = F - ndT * (gb - ga) - ndN * (dd["d0"] + dd["d1"])
                ga_k.append(ga)
                gb_k.append(gb)
            blk = -self._hat_contract(F, ep, rloc, inv) * scale
            if cf == 2:
                blk += self._endpoint_fix(rloc, cloc, ep, usup, inv,
                                          ga_k, gb_k, ndT, ks)
            return blk

        # trace columns: hat j spans element j and its predecessor, so
        # the kernel moments are needed over the union of both sets
        cp = lay.prev_local[cloc]
        ucols, inv0 = np.unique(np.concatenate([cloc, cp]), return_inverse=True)
        pos0, pos1 = inv0[:len(cloc)], inv0[len(cloc):]
        uelems = lay.diel_elems[ucols]
        h0 = mesh.lengths[lay.diel_elems[cloc]]
        h1 = mesh.lengths[lay.diel_elems[cp]]
        ndu = nxg @ mesh.normals[uelems].T
        q = len(self.tq)
        block = 0.0
        for ki, mui in ((k1, mu1), (k2, mu2)):
            ru = self._integrals(ki, uelems, pts, ("g0", "g1"), xelem=pelem)
            su = ru["g0"] + ru["g1"]
            # S u' per trace column: -1/h on the own element, +1/h on its
            # predecessor
            sj = -su[:, pos0] / h0[None, :] + su[:, pos1] / h1[None, :]
            SJ = sj.reshape(-1, q, sj.shape[1])
            # -<v', S u'>: v' h_e = +1 on the predecessor, -1 on the own
            # element, so the IBP sign leaves (own - prev)
            R = len(rloc)
            term1 = (np.einsum("q,rqc->rc", self.wq, SJ[inv[R:]])
                     - np.einsum("q,rqc->rc", self.wq, SJ[inv[:R]]))
            g_in = ndu[:, pos0] * ru["g0"][:, pos0] + ndu[:, pos1] * ru["g1"][:, pos1]
            term2 = self._hat_contract(g_in, ep, rloc, inv)
            block = block + (term1 + ki * ki * term2) / mui
        return block * scale

    def _endpoint_fix(self, rloc, cloc, ep, usup, inv, ga_k, gb_k, ndT, ks):
        """Exact hat-weighted endpoint-Green integrals at shared nodes.

        When a tested element and a column element meet at a node, the
        endpoint Green term behaves like log of the node distance over
        the test element, which the plain test rule integrates one order
        too low. Replace those few pair contributions with the analytic
        log moments.
        """
        lay, mesh = self.layout, self.mesh
        R = len(rloc)
        Q = len(self.tq)
        sup = np.concatenate([ep, rloc])
        rising = np.arange(2 * R) < R
        rowpos = np.tile(np.arange(R), 2)
        colpos = np.full(lay.n_d, -1, dtype=np.int64)
        colpos[cloc] = np.arange(len(cloc))
        h_all = mesh.lengths[lay.diel_elems]
        w_plain = np.where(rising[:, None], self.w_hat1[sup],
                           self.w_hat0[sup])
        out = np.zeros((R, len(cloc)), dtype=complex)
        qi = np.arange(Q)
        for rel in ("prev", "next"):
            if rel == "prev":
                f = lay.prev_local[sup]  # shares the t=0 node of sup
            else:
                f = self.next_local[sup]  # shares the t=1 node of sup
            cp = colpos[f]
            idx = np.flatnonzero(cp >= 0)
            if len(idx) == 0:
                continue
            hh = h_all[sup[idx]]
            ris = rising[idx]
            flat = inv[idx][:, None] * Q + qi[None, :]
            for ki, ga, gb in zip(ks, ga_k, gb_k):
                i0, i1 = endpoint_g_integrals(ki, hh)
                if rel == "next":
                    exact = np.where(ris, i0 - i1 / hh, i1 / hh)
                    gmat = ga  # the shared node starts the column element
                    sgn = 1.0
                else:
                    exact = np.where(ris, i1 / hh, i0 - i1 / hh)
                    gmat = gb
                    sgn = -1.0
                plain = np.sum(w_plain[idx] * gmat[flat, cp[idx][:, None]],
                               axis=1)
                dF = sgn * ndT[inv[idx] * Q, cp[idx]] * (exact - plain)
                np.add.at(out, (rowpos[idx], cp[idx]),
                          -self.row_scale[rloc][rowpos[idx]] * dF)
        return out

    def flux_rhs(self, incident, mu1) -> np.ndarray:
        """<(1/mu1) n . grad u_inc, hat_i> for every flux row."""
        lay = self.layout
        rloc = np.arange(lay.n_d)
        ep, usup, inv, pts, _, nxg = self._flux_points(rloc)
        _, grad = incident(pts)
        f = np.einsum("mk,mk->m", nxg, np.asarray(grad)) / mu1
        vals = self._hat_contract(f[:, None], ep, rloc, inv)[:, 0]
        return vals * self.row_scale


@dataclass
class AssembledSystem:
    """Square boundary system with a lazily cached factorization."""

    mesh: BoundaryMesh
    layout: DofLayout
    outer: Medium
    inner: Medium | None
    backend: str
    matrix: object
    entry: _EntryEvaluator
    stats: dict = field(default_factory=dict)
    _factor: object = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.layout.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.backend == "dense":
            return self.matrix @ x
        return self.matrix.matvec(x)

    def factorize(self):
        """Factor once and reuse; forward and adjoint share this object."""
        if self._factor is None:
            t0 = time.perf_counter()
            if self.backend == "dense":
                with warnings.catch_warnings():
                    # zero pivots are reported as SingularSystemError below
                    warnings.simplefilter("ignore")
                    lu, piv = lu_factor(self.matrix, check_finite=False)
                d = np.abs(np.diag(lu))
                if not np.all(np.isfinite(d)) or d.min() == 0.0:
                    raise SingularSystemError(self._singular_msg())
                self._factor = ("dense", lu, piv)
            else:
                try:
                    self._factor = ("hmat", hlu_factorize(self.matrix))
                except SingularSystemError as exc:
                    raise SingularSystemError(
                        f"{exc} [{self._context()}]") from exc
            self.stats["t_factor"] = time.perf_counter() - t0
        return self._factor

    def _context(self) -> str:
        return (f"omega={self.outer.omega:g}, {self.layout.n_p} PEC and "
                f"{self.layout.n_d} interface elements")

    def _singular_msg(self) -> str:
        return f"singular system [{self._context()}]"

    def solve(self, b: np.ndarray) -> np.ndarray:
        fac = self.factorize()
        b = np.asarray(b, dtype=complex)
        if fac[0] == "dense":
            x = lu_solve((fac[1], fac[2]), b, check_finite=False)
            if not np.all(np.isfinite(x)):
                raise SingularSystemError(self._singular_msg())
            return x
        return fac[1].solve(b)


def _normalize_media(media):
    if isinstance(media, Medium):
        return media, None
    media = tuple(media)
    if len(media) == 1:
        return media[0], None
    if len(media) == 2:
        outer, inner = media
        if inner is not None and outer.omega != inner.omega:
            raise ValueError("media must share one angular frequency")
        return outer, inner
    raise ValueError("media must be a Medium or an (outer, inner) pair")


def assemble_system(mesh: BoundaryMesh, media, backend: str = "dense", *,
                    eta: float = 128.0, n_min: int = 128, tol: float = 1e-5,
                    workers: int = 1, agglomerate_pass: bool = True,
                    ) -> AssembledSystem:
    """Assemble the square boundary system over the given mesh.

    media: a single exterior Medium (PEC-only meshes) or an
    (exterior, interior) pair. backend 'dense' stores the full matrix,
    'hmatrix' builds the compressed form over one shared cluster tree
    and runs one agglomeration pass unless disabled.
    """
    outer, inner = _normalize_media(media)
    if mesh.n_segments == 0:
        raise GeometryError("mesh has no elements")
    layout = DofLayout.from_mesh(mesh)
    if layout.n_d and inner is None:
        raise ValueError("interface elements present but no interior medium")
    if backend not in ("dense", "hmatrix"):
        raise ValueError(f"unknown backend {backend!r}")

    entry = _EntryEvaluator(mesh, layout, outer, inner)
    t0 = time.perf_counter()
    if backend == "dense":
        idx = np.arange(layout.size)
        matrix = entry(idx, idx)
        stats = {"n_dof": layout.size, "backend": backend}
    else:
        tree = build_cluster_tree(footprint_segments(mesh, layout), n_min)
        matrix = assemble_hmatrix(entry, tree, tree, eta=eta, tol=tol,
                                  workers=workers)
        merges = agglomerate(matrix) if agglomerate_pass else 0
        stats = {
            "n_dof": layout.size,
            "backend": backend,
            "stored_scalars": matrix.stored_scalars(),
            "compression": matrix.stored_scalars() / max(1, layout.size ** 2),
            "agglomerated": merges,
        }
    stats["t_assemble"] = time.perf_counter() - t0
    return AssembledSystem(mesh=mesh, layout=layout, outer=outer, inner=inner,
                           backend=backend, matrix=matrix, entry=entry,
                           stats=stats)


def incident_rhs(system: AssembledSystem, incident: Callable) -> np.ndarray:
    """Right-hand side [u_inc on PEC; tested flux on interface; trace].

    incident(points) must return (values, gradients).
    """
    mesh, lay = system.mesh, system.layout
    parts = []
    if lay.n_p:
        up, _ = incident(mesh.midpoints[lay.pec_elems])
        parts.append(np.asarray(up, dtype=complex))
    else:
        parts.append(np.zeros(0, dtype=complex))
    if lay.n_d:
        parts.append(system.entry.flux_rhs(incident, system.outer.mu))
        ud, _ = incident(mesh.midpoints[lay.diel_elems])
        parts.append(np.asarray(ud, dtype=complex))
    else:
        parts.extend([np.zeros(0, dtype=complex)] * 2)
    return np.concatenate(parts)


def solve_boundary(system: AssembledSystem, rhs):
    """Solve for one rhs vector or a batch; see incident_rhs for layout.

    A batch (list of vectors or an (N, q) array) returns a list of
    BoundarySolution in order, all against one cached factorization.
    """
    lay = system.layout
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.ndim == 1:
        x = system.solve(rhs)
        return BoundarySolution.from_vector(lay, x)
    if rhs.ndim == 2 and rhs.shape[0] != lay.size and rhs.shape[1] == lay.size:
        rhs = rhs.T  # accept a list-of-vectors layout
    X = system.solve(rhs)
    return [BoundarySolution.from_vector(lay, X[:, j]) for j in range(X.shape[1])]
