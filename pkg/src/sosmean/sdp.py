"""First-order conic solver for moment relaxations.

The iterate lives in the stacked space of all PSD blocks.  Two
projections alternate under Douglas-Rachford splitting:

  * the affine set of block stacks that are consistent with a single
    moment vector satisfying all equality rows (projection via one
    cached Cholesky factorization of the equality normal matrix), and
  * the product of PSD cones (projection via a symmetric
    eigendecomposition per block).

Multi-term block entries get one auxiliary scalar each, tied to the
moment vector by an equality row; the scatter map from (moments, aux)
to block positions then has a diagonal normal matrix, which keeps the
affine projection a single small dense solve per iteration.

An optional linear objective c.y folds into the affine prox, so
"minimize/maximize a moment" costs nothing extra.  Feasibility problems
use objective zero.  Infeasibility is declared only when the
fixed-point displacement (which is nonincreasing for this splitting)
stabilizes above 10x the tolerance for 500 consecutive iterations.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from threadpoolctl import threadpool_limits

from sosmean.monomials import Mono, Poly, mono_degree
from sosmean.relax import BlockSpec, MomentRelaxation

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50_000

SOLVED = "solved"
INFEASIBLE = "infeasible"
NOT_CONVERGED = "not_converged"


@dataclass(frozen=True)
class ConicProgram:
    """Solver-level problem: PSD blocks whose entries are linear forms in
    the moment vector y, equality rows A y = b, optional objective c.y."""

    ny: int
    blocks: tuple[BlockSpec, ...]
    eq_rows: tuple[tuple[tuple[int, float], ...], ...]
    eq_rhs: tuple[float, ...]
    objective: Optional[tuple[float, ...]] = None

    @classmethod
    def from_relaxation(
        cls, rel: MomentRelaxation, objective: Optional[np.ndarray] = None
    ) -> "ConicProgram":
        return cls(
            ny=rel.ny,
            blocks=rel.blocks,
            eq_rows=rel.eq_rows,
            eq_rhs=rel.eq_rhs,
            objective=tuple(float(x) for x in objective) if objective is not None else None,
        )


class OutOfBasisError(KeyError):
    pass


@dataclass
class ResidualReport:
    equality_max: float
    primal: float
    displacement: float
    block_min_eig: dict[str, float]
    block_trace: dict[str, float]

    def min_eig_ok(self, tol: float) -> bool:
        return all(
            self.block_min_eig[name] >= -tol * (1.0 + abs(self.block_trace[name]))
            for name in self.block_min_eig
        )


@dataclass
class PseudoExpectation:
    """Moment vector with polynomial evaluation and validity reporting."""

    y: np.ndarray
    relaxation: MomentRelaxation
    residuals: ResidualReport
    tol: float

    @property
    def degree(self) -> int:
        return 2 * self.relaxation.r

    def evaluate_monomial(self, mono: Mono) -> float:
        idx = self.relaxation.y_index.get(mono)
        if idx is None:
            raise OutOfBasisError(f"monomial of degree {mono_degree(mono)} not in the degree-{self.degree} index")
        return float(self.y[idx])

    def evaluate(self, p: Poly | float) -> float:
        """Linear extension to polynomials of degree <= 2r."""
        if not isinstance(p, Poly):
            return float(p)
        total = 0.0
        for mono, coeff in p.terms.items():
            total += coeff * self.evaluate_monomial(mono)
        return total

    def mean_vector(self) -> np.ndarray:
        d = self.relaxation.system.d
        return np.array(
            [self.evaluate(Poly.mu(j, d)) for j in range(d)]
        )

    def moment_matrix(self) -> np.ndarray:
        from sosmean.relax import block_matrices

        return block_matrices(self.relaxation, self.y)["moment"]

    def block_matrices(self) -> dict[str, np.ndarray]:
        from sosmean.relax import block_matrices

        return block_matrices(self.relaxation, self.y)

    def is_valid(self, tol: float | None = None) -> bool:
        tol = self.tol if tol is None else tol
        if abs(self.evaluate_monomial(((), (0,) * self.relaxation.system.d)) - 1.0) > 1e-8:
            return False
        if self.residuals.equality_max > max(1e-6, tol):
            return False
        return self.residuals.min_eig_ok(max(1e-6, tol))


def pe_evaluate(pe: PseudoExpectation, p: Poly | float) -> float:
    return pe.evaluate(p)


@dataclass
class SolveResult:
    status: str
    pe: Optional[PseudoExpectation]
    y: Optional[np.ndarray]
    residuals: ResidualReport
    iterations: int
    objective_value: Optional[float] = None
    checkpoints: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


def _psd_part(mat: np.ndarray, single_precision: bool = False) -> np.ndarray:
    """Projection onto the PSD cone, reconstructing through whichever side
    of the spectrum is smaller (rank-k update instead of a full square)."""
    work = mat.astype(np.float32) if single_precision else mat.copy()
    vals, vecs = sla.eigh(work, driver="evd", check_finite=False, overwrite_a=True)
    n_neg = int(np.searchsorted(vals, 0.0))
    if n_neg == 0:
        return mat
    if n_neg == vals.shape[0]:
        return np.zeros_like(mat)
    syrk = sla.blas.ssyrk if single_precision else sla.blas.dsyrk
    if n_neg <= vals.shape[0] - n_neg:
        shaved = vecs[:, :n_neg] * np.sqrt(-vals[:n_neg])
        upper = syrk(1.0, shaved, trans=0, lower=0)
        sym = np.triu(upper) + np.triu(upper, 1).T
        proj = mat + sym.astype(np.float64, copy=False)
    else:
        lifted = vecs[:, n_neg:] * np.sqrt(vals[n_neg:])
        upper = syrk(1.0, lifted, trans=0, lower=0)
        proj = np.triu(upper) + np.triu(upper, 1).T
    return proj.astype(np.float64, copy=False)


class _Workspace:
    """Prepared projections for one program (reusable across solves)."""

    def __init__(self, prog: ConicProgram):
        self.prog = prog
        ny = prog.ny
        offsets = []
        total = 0
        for b in prog.blocks:
            offsets.append(total)
            total += b.size * b.size
        self.block_offsets = offsets
        self.total = total

        # variable layout: [y (ny) | aux, one per multi-term entry]
        pos_var = np.empty(total, dtype=np.int64)
        pos_var.fill(-1)
        aux_rows: list[tuple[tuple[int, float], ...]] = []
        nv = ny
        for b_i, b in enumerate(prog.blocks):
            base = offsets[b_i]
            size = b.size
            for i, j, terms in b.entries:
                if len(terms) == 1 and terms[0][1] == 1.0:
                    var = terms[0][0]
                else:
                    var = nv
                    nv += 1
                    aux_rows.append(terms)
                pos_var[base + i * size + j] = var
                pos_var[base + j * size + i] = var
        self.aux_terms = tuple(aux_rows)
        if np.any(pos_var < 0):
            raise ValueError("program blocks leave unset entries")
        self.pos_var = pos_var
        self.nv = nv
        self.naux = nv - ny

        counts = np.bincount(pos_var, minlength=nv).astype(float)
        if np.any(counts == 0):
            # unreferenced moment variables would make the normal matrix
            # singular; pin them with zero-weight ridge instead
            counts = np.maximum(counts, 1e-12)
        self.diag = counts

        rows = []
        cols = []
        vals = []
        rhs = []
        r_i = 0
        for row, b_val in zip(prog.eq_rows, prog.eq_rhs):
            for idx, c in row:
                rows.append(r_i)
                cols.append(idx)
                vals.append(c)
            rhs.append(b_val)
            r_i += 1
        for a_i, terms in enumerate(aux_rows):
            var = ny + a_i
            rows.append(r_i)
            cols.append(var)
            vals.append(1.0)
            for idx, c in terms:
                rows.append(r_i)
                cols.append(idx)
                vals.append(-c)
            rhs.append(0.0)
            r_i += 1
        a_mat = sp.csr_matrix(
            (np.asarray(vals, dtype=float), (rows, cols)), shape=(r_i, nv)
        )
        b_vec = np.asarray(rhs, dtype=float)

        # scale rows to unit norm in the D^{-1/2} metric for conditioning
        inv_sqrt_d = 1.0 / np.sqrt(self.diag)
        scaled = a_mat.multiply(inv_sqrt_d[None, :]).tocsr()
        row_norms = np.sqrt(np.asarray(scaled.multiply(scaled).sum(axis=1)).ravel())
        row_norms = np.maximum(row_norms, 1e-300)
        scale = 1.0 / row_norms
        self.A = sp.diags(scale) @ a_mat
        self.A = self.A.tocsr()
        self.b = b_vec * scale
        self.AT = self.A.T.tocsr()

        gram = (self.A.multiply(1.0 / self.diag[None, :]) @ self.AT).toarray()
        jitter = 0.0
        base_diag = np.mean(np.diag(gram)) if gram.size else 1.0
        for attempt in range(6):
            try:
                self.chol = sla.cho_factor(
                    gram + jitter * np.eye(gram.shape[0]), lower=True, check_finite=False
                )
                break
            except np.linalg.LinAlgError:
                jitter = base_diag * (10.0 ** (attempt - 12))
        else:
            raise np.linalg.LinAlgError("equality normal matrix could not be factored")
        self.jitter = jitter

    def gather(self, x: np.ndarray) -> np.ndarray:
        return np.bincount(self.pos_var, weights=x, minlength=self.nv)

    def scatter(self, v: np.ndarray) -> np.ndarray:
        return v[self.pos_var]

    def project_affine(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """min ||scatter(v) - x||^2 s.t. A v = b; returns (point, v)."""
        t = self.gather(x)
        td = t / self.diag
        lam = sla.cho_solve(self.chol, self.A @ td - self.b, check_finite=False)
        v = td - (self.AT @ lam) / self.diag
        return self.scatter(v), v

    def project_psd(self, x: np.ndarray, single_precision: bool = False) -> np.ndarray:
        out = np.empty_like(x)
        for b_i, b in enumerate(self.prog.blocks):
            base = self.block_offsets[b_i]
            size = b.size
            mat = x[base : base + size * size].reshape(size, size)
            mat = 0.5 * (mat + mat.T)
            if size == 1:
                out[base] = max(mat[0, 0], 0.0)
                continue
            proj = _psd_part(mat, single_precision)
            out[base : base + size * size] = proj.ravel()
        return out

    def block_eigs(self, x: np.ndarray) -> tuple[dict[str, float], dict[str, float]]:
        mins = {}
        traces = {}
        for b_i, b in enumerate(self.prog.blocks):
            base = self.block_offsets[b_i]
            size = b.size
            mat = x[base : base + size * size].reshape(size, size)
            mat = 0.5 * (mat + mat.T)
            vals = np.linalg.eigvalsh(mat)
            mins[b.name] = float(vals[0])
            traces[b.name] = float(np.trace(mat))
        return mins, traces

    def equality_residual(self, v: np.ndarray) -> float:
        res = self.A @ v - self.b
        return float(np.max(np.abs(res))) if res.size else 0.0


def objective_from_poly(rel: MomentRelaxation, p: Poly) -> np.ndarray:
    """Linear objective vector over the moment index for a polynomial."""
    c = np.zeros(rel.ny)
    for mono, coeff in p.terms.items():
        idx = rel.y_index.get(mono)
        if idx is None:
            raise OutOfBasisError("objective polynomial leaves the moment index")
        c[idx] += coeff
    return c


def solve(
    rel: MomentRelaxation,
    objective: Optional[Poly | np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    y0: Optional[np.ndarray] = None,
    relaxation_parameter: float = 1.7,
    rho: float = 1.0,
    trace_path: Optional[str] = None,
    infeasible_window: int = 500,
    infeasible_factor: float = 10.0,
    acceleration_memory: int = 10,
    single_precision: bool = False,
    workspace: Optional[_Workspace] = None,
) -> SolveResult:
    """Find a pseudo-expectation for a compiled relaxation.

    With an objective, minimizes c.y over the relaxation's feasible set
    (pass the negated polynomial to maximize).  Deterministic for fixed
    inputs; `y0` warm-starts the iteration at a moment-vector guess.

    The fixed-point iteration is Anderson-accelerated with a monotone
    safeguard: an extrapolated iterate is kept only if it does not
    increase the fixed-point residual, so the reported residual sequence
    stays nonincreasing and the divergence test stays meaningful.
    Set acceleration_memory=0 for the plain splitting iteration.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    # BLAS threading is pure overhead at these block sizes
    with threadpool_limits(limits=1):
        return _solve_inner(
            rel,
            objective,
            tol,
            max_iter,
            y0,
            relaxation_parameter,
            rho,
            trace_path,
            infeasible_window,
            infeasible_factor,
            acceleration_memory,
            single_precision,
            workspace,
        )


def _solve_inner(
    rel: MomentRelaxation,
    objective,
    tol: float,
    max_iter: int,
    y0,
    relaxation_parameter: float,
    rho: float,
    trace_path,
    infeasible_window: int,
    infeasible_factor: float,
    acceleration_memory: int,
    single_precision: bool,
    workspace,
) -> SolveResult:
    prog = ConicProgram.from_relaxation(rel)
    ws = workspace if workspace is not None else _Workspace(prog)

    c_ext = None
    if objective is not None:
        c_y = (
            objective_from_poly(rel, objective)
            if isinstance(objective, Poly)
            else np.asarray(objective, dtype=float)
        )
        c_full = np.zeros(ws.nv)
        c_full[: rel.ny] = c_y
        c_ext = ws.scatter(c_full / ws.diag) / rho

    if y0 is not None:
        v0 = np.zeros(ws.nv)
        v0[: rel.ny] = y0
        # aux variables start at their defining linear forms in y0
        for a_i, terms in enumerate(ws.aux_terms):
            v0[rel.ny + a_i] = sum(c * y0[idx] for idx, c in terms)
        z = ws.scatter(v0)
    else:
        z = np.zeros(ws.total)

    lam = relaxation_parameter

    def dr_step(zz: np.ndarray):
        x1, v = ws.project_affine(zz if c_ext is None else zz - c_ext)
        x2 = ws.project_psd(2.0 * x1 - zz, single_precision=single_precision)
        step = x2 - x1
        return zz + lam * step, float(np.linalg.norm(step)), 1.0 + float(
            np.linalg.norm(x1)
        )

    window = np.full(infeasible_window, np.inf)
    checkpoints: list[tuple[int, float, float]] = []
    trace_rows: list[tuple[int, float, float, float]] = []
    status = NOT_CONVERGED
    primal = math.inf
    scale = 1.0
    t_start = time.perf_counter()

    mem = max(int(acceleration_memory), 0)
    buf_t = np.zeros((mem, z.shape[0])) if mem > 1 else None  # rows are T(z_i)
    buf_g = np.zeros((mem, z.shape[0])) if mem > 1 else None  # rows are T(z_i)-z_i
    gram_full = np.zeros((mem, mem)) if mem > 1 else None
    n_hist = 0
    head = 0
    accepted_primal = math.inf
    z_fallback = None
    # acceleration can limit-cycle on degenerate geometry; when progress
    # stalls, fall back to plain (provably convergent) steps for a stretch
    best_primal = math.inf
    last_improvement = 0
    aa_off_until = 0
    drift_ref = None
    it = 0
    for it in range(1, max_iter + 1):
        tz, cand_primal, cand_scale = dr_step(z)
        if z_fallback is not None and cand_primal > accepted_primal:
            # extrapolated point was worse; fall back to the stored plain step
            z = z_fallback
            z_fallback = None
            n_hist = 0
            continue
        primal, scale = cand_primal, cand_scale
        accepted_primal = primal
        displacement = lam * primal
        if primal < best_primal * (1.0 - 1e-4):
            best_primal = primal
            last_improvement = it
        elif it - last_improvement > 1500 and it >= aa_off_until:
            aa_off_until = it + 1000
            n_hist = 0
            last_improvement = it
        if trace_path is not None and (it % 25 == 0 or it == 1):
            trace_rows.append((it, primal, primal / scale, displacement))
        if it % 100 == 0 or it == 1:
            checkpoints.append((it, displacement, primal / scale))
        if primal <= tol * scale:
            z = tz
            status = SOLVED
            break
        # divergence test (pure feasibility runs only).  For an infeasible
        # pair of sets the iterate translates along the gap direction, so
        # over a window the net drift matches the accumulated displacement;
        # a feasible stall merely wanders (square-summable steps, tiny net
        # drift).  Declare infeasible when the displacement has stabilized
        # above the bar for a whole window and the drift ratio is high.
        if c_ext is None:
            old = window[it % infeasible_window]
            window[it % infeasible_window] = displacement
            if it % infeasible_window == 0:
                if (
                    drift_ref is not None
                    and displacement > infeasible_factor * tol * scale
                    and old - displacement <= 1e-4 * displacement
                ):
                    net = float(np.linalg.norm(z - drift_ref))
                    if net >= 0.5 * infeasible_window * displacement:
                        status = INFEASIBLE
                        break
                drift_ref = z.copy()
        if mem > 1 and it >= aa_off_until:
            np.subtract(tz, z, out=buf_g[head])
            buf_t[head] = tz
            dots = buf_g @ buf_g[head]
            gram_full[head, :] = dots
            gram_full[:, head] = dots
            head = (head + 1) % mem
            n_hist = min(n_hist + 1, mem)
            if n_hist >= 2:
                rows = [(head - n_hist + i) % mem for i in range(n_hist)]
                gram = gram_full[np.ix_(rows, rows)].copy()
                gram += (1e-12 * np.trace(gram) / n_hist + 1e-300) * np.eye(n_hist)
                try:
                    sol = np.linalg.solve(gram, np.ones(n_hist))
                    weights = sol / sol.sum()
                    w_full = np.zeros(mem)
                    w_full[rows] = weights
                    z_fallback = tz
                    z = w_full @ buf_t
                    continue
                except np.linalg.LinAlgError:
                    pass
        z_fallback = None
        z = tz
    solve_seconds = time.perf_counter() - t_start

    if trace_path is not None:
        with open(trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "primal_residual", "relative_residual", "displacement"])
            writer.writerows(trace_rows)

    x_final, v_final = ws.project_affine(z if c_ext is None else z - c_ext)
    y = v_final[: rel.ny]
    # report block eigenvalues of the blocks assembled from y itself
    from sosmean.relax import block_matrices

    mats = block_matrices(rel, y)
    mins = {name: float(np.linalg.eigvalsh(m)[0]) for name, m in mats.items()}
    traces = {name: float(np.trace(m)) for name, m in mats.items()}
    res = ResidualReport(
        equality_max=ws.equality_residual(v_final),
        primal=primal if primal is not math.inf else float("nan"),
        displacement=lam * primal,
        block_min_eig=mins,
        block_trace=traces,
    )
    pe = PseudoExpectation(y=y, relaxation=rel, residuals=res, tol=tol)
    obj_val = None
    if objective is not None:
        obj_val = float(
            pe.evaluate(objective)
            if isinstance(objective, Poly)
            else np.dot(np.asarray(objective, dtype=float), y)
        )
    return SolveResult(
        status=status,
        pe=pe if status != INFEASIBLE else None,
        y=y,
        residuals=res,
        iterations=it,
        objective_value=obj_val,
        checkpoints=checkpoints,
        seconds=solve_seconds,
    )


def prepare_workspace(rel: MomentRelaxation) -> _Workspace:
    """Precompute the projection data once for repeated solves."""
    return _Workspace(ConicProgram.from_relaxation(rel))
