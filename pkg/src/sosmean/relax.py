"""Compile selector polynomial systems into moment-matrix relaxations.

The system lives over the reduced variables (w_1..w_n, mu_1..mu_d):

    booleanity   w_i^2 = w_i                      (applied as a rewrite)
    mass         sum_i w_i >= mass_rhs
    mean-link    sum_i w_i (z_ij - mu_j) = 0       for each coordinate j
    moment k=2   sum_i w_i (z_i-mu)(z_i-mu)^T  <=  moment_rhs * I_d
    moment k=4   sum_i w_i <z_i-mu, v>^4 <= moment_rhs ||v||^4, encoded as
                 positive semidefiniteness of the d^2 x d^2 flattening

The free per-sample variables of the unreduced formulation are
eliminated: any selection with its selected mean induces a feasible
point here, and the compiled basis scales with n + d instead of n * d.

Compilation follows the standard moment/localizing construction: a
moment matrix over the degree <= r basis, one localizing PSD block per
inequality or matrix constraint, and equality rows from the mean-link
polynomials multiplied by every monomial that keeps the degree within
2r.  Booleanity is the quotient-ring rewrite, so no equality rows are
spent on it and every block shrinks to the multilinear-w basis.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from sosmean.adversary import CorruptedSet
from sosmean.monomials import (
    Mono,
    MonomialBasis,
    enumerate_monomials,
    mono_mul,
    mono_one,
    mono_mu,
    mono_to_string,
    mono_w,
)

Entry = tuple[int, int, tuple[tuple[int, float], ...]]


@dataclass(frozen=True)
class PolynomialSystem:
    """Reduced constraint system on (w, mu) for one corrupted data set."""

    z: np.ndarray
    eps: float
    sigma: float
    k: int
    mass_rhs: float
    moment_rhs: float
    include_mass: bool = True
    include_mean_link: bool = True
    include_moment: bool = True
    witness_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2:
            raise ValueError("z must be an (n, d) matrix")
        object.__setattr__(self, "z", z)
        if self.k not in (2, 4):
            raise ValueError("k must be 2 or 4")
        if self.k == 4 and z.shape[1] > 2:
            raise ValueError("k=4 systems are limited to d <= 2")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def constraint_descriptions(self) -> list[str]:
        out = [f"w{i+1}^2 = w{i+1}" for i in range(self.n)]
        if self.include_mass:
            out.append(f"sum_i w_i >= {self.mass_rhs:g}")
        if self.include_mean_link:
            out += [
                f"sum_i w_i (z_i{j+1} - mu{j+1}) = 0" for j in range(self.d)
            ]
        if self.include_moment:
            if self.k == 2:
                out.append(
                    f"sum_i w_i (z_i - mu)(z_i - mu)^T <= {self.moment_rhs:g} I"
                )
            else:
                out.append(
                    f"sum_i w_i <z_i - mu, v>^4 <= {self.moment_rhs:g} ||v||^4"
                )
        return out

    def max_constraint_degree(self) -> int:
        deg = 2  # booleanity
        if self.include_mean_link:
            deg = max(deg, 2)
        if self.include_moment:
            deg = max(deg, 3 if self.k == 2 else 5)
        return deg


def bare_boolean_system(n: int, d: int = 0) -> PolynomialSystem:
    """Only the booleanity rewrite; useful for solver-level tests."""
    return PolynomialSystem(
        z=np.zeros((n, max(d, 0))),
        eps=0.0,
        sigma=1.0,
        k=2,
        mass_rhs=0.0,
        moment_rhs=0.0,
        include_mass=False,
        include_mean_link=False,
        include_moment=False,
    )


def build_system_from_points(
    z: np.ndarray,
    eps: float,
    sigma: float,
    k: int = 2,
    mass_rhs: float | None = None,
    moment_rhs: float | None = None,
    witness_mask: np.ndarray | None = None,
) -> PolynomialSystem:
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if mass_rhs is None:
        mass_rhs = (1.0 - eps) * n
    if moment_rhs is None:
        moment_rhs = (sigma**2 if k == 2 else k ** (k // 2)) * n
    return PolynomialSystem(
        z=z,
        eps=eps,
        sigma=sigma,
        k=k,
        mass_rhs=float(mass_rhs),
        moment_rhs=float(moment_rhs),
        witness_mask=witness_mask,
    )


def build_system(zset: CorruptedSet, sigma: float, k: int = 2) -> PolynomialSystem:
    """Standard system for a corrupted set; the ground-truth selection is
    attached as the feasibility witness."""
    if k not in (2, 4):
        raise ValueError("k must be 2 or 4")
    return build_system_from_points(
        z=zset.z,
        eps=zset.epsilon,
        sigma=sigma,
        k=k,
        witness_mask=np.asarray(zset.mask_wstar, dtype=bool),
    )


@dataclass
class WitnessReport:
    feasible: bool
    mass_ok: bool
    moment_ok: bool
    mass: float
    moment_eig_max: float
    moment_budget: float
    mean: np.ndarray


def evaluate_selection(sys: PolynomialSystem, w: Sequence[float]) -> WitnessReport:
    """Check a boolean selection (with its selected mean) against the system."""
    w = np.asarray(w, dtype=float)
    if w.shape != (sys.n,):
        raise ValueError("selection length mismatch")
    if not np.all((w == 0.0) | (w == 1.0)):
        raise ValueError("selection must be boolean")
    mass = float(w.sum())
    mass_ok = (not sys.include_mass) or mass >= sys.mass_rhs - 1e-9
    sel = w.astype(bool)
    if mass == 0:
        mean = np.zeros(sys.d)
        eig = 0.0
    else:
        mean = sys.z[sel].mean(axis=0)
        centered = sys.z[sel] - mean
        if sys.k == 2:
            mat = centered.T @ centered
        else:
            q = np.einsum("is,it->ist", centered, centered).reshape(int(sel.sum()), -1)
            mat = q.T @ q
        eig = float(np.linalg.eigvalsh(mat)[-1]) if mat.size else 0.0
    moment_ok = (not sys.include_moment) or eig <= sys.moment_rhs + 1e-9 * (
        1.0 + abs(sys.moment_rhs)
    )
    return WitnessReport(
        feasible=mass_ok and moment_ok,
        mass_ok=mass_ok,
        moment_ok=moment_ok,
        mass=mass,
        moment_eig_max=eig,
        moment_budget=sys.moment_rhs,
        mean=mean,
    )


def witness(sys: PolynomialSystem) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth selection and its mean (requires the witness mask)."""
    if sys.witness_mask is None:
        raise ValueError("system carries no witness mask")
    w = sys.witness_mask.astype(float)
    mean = sys.z[sys.witness_mask].mean(axis=0)
    return w, mean


@dataclass(frozen=True)
class BlockSpec:
    """One PSD block; entries are linear forms over the moment vector.

    Entries cover the upper triangle (i <= j); (j, i) is implied.  Terms
    are (y_index, coefficient) pairs sorted by index.
    """

    name: str
    size: int
    entries: tuple[Entry, ...]


@dataclass(frozen=True)
class MomentRelaxation:
    """Compiled order-r relaxation of a PolynomialSystem."""

    system: PolynomialSystem
    r: int
    basis: MonomialBasis
    y_monomials: tuple[Mono, ...]
    blocks: tuple[BlockSpec, ...]
    eq_rows: tuple[tuple[tuple[int, float], ...], ...]
    eq_rhs: tuple[float, ...]
    one_index: int
    y_index: dict = field(repr=False, hash=False, compare=False, default=None)

    @property
    def ny(self) -> int:
        return len(self.y_monomials)

    def index_of(self, mono: Mono) -> int:
        return self.y_index[mono]

    def block_sizes(self) -> dict[str, int]:
        return {b.name: b.size for b in self.blocks}

    def summary(self) -> dict:
        return {
            "n": self.system.n,
            "d": self.system.d,
            "k": self.system.k,
            "r": self.r,
            "basis_size": len(self.basis),
            "moment_vector_size": self.ny,
            "equality_rows": len(self.eq_rows),
            "blocks": self.block_sizes(),
        }

    def to_json_dict(self) -> dict:
        """Documented serialization: block sizes plus sparse triplets.

        Schema:
          meta:      {n, d, k, r, eps, sigma, mass_rhs, moment_rhs}
          y:         moment-vector monomials as strings, index order
          blocks:    [{name, size, entries: [[i, j, [[y_idx, coeff], ...]]]}]
          equalities:{rows: [[[y_idx, coeff], ...]], rhs: [...]}
        """
        sysm = self.system
        return {
            "meta": {
                "n": sysm.n,
                "d": sysm.d,
                "k": sysm.k,
                "r": self.r,
                "eps": sysm.eps,
                "sigma": sysm.sigma,
                "mass_rhs": sysm.mass_rhs,
                "moment_rhs": sysm.moment_rhs,
            },
            "y": [mono_to_string(m) for m in self.y_monomials],
            "blocks": [
                {
                    "name": b.name,
                    "size": b.size,
                    "entries": [
                        [i, j, [[idx, c] for idx, c in terms]]
                        for i, j, terms in b.entries
                    ],
                }
                for b in self.blocks
            ],
            "equalities": {
                "rows": [[[idx, c] for idx, c in row] for row in self.eq_rows],
                "rhs": list(self.eq_rhs),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


class CompileError(ValueError):
    pass


def compile_relaxation(sys: PolynomialSystem, r: int) -> MomentRelaxation:
    """Build the order-r moment relaxation (degree-2r moments)."""
    if r not in (1, 2, 3):
        raise CompileError("relaxation order must be 1, 2, or 3")
    if sys.include_moment:
        if sys.k == 2 and r < 2:
            raise CompileError("the covariance constraint needs order r >= 2")
        if sys.k == 4 and r != 3:
            raise CompileError("the fourth-moment constraint needs order r = 3")
    n, d = sys.n, sys.d
    basis = MonomialBasis.build(n, d, r)
    y_monos = tuple(enumerate_monomials(n, d, 2 * r))
    y_index = {m: i for i, m in enumerate(y_monos)}
    one = mono_one(d)
    one_idx = y_index[one]

    def combine(terms: dict[int, float]) -> tuple[tuple[int, float], ...]:
        return tuple(sorted((i, c) for i, c in terms.items() if c != 0.0))

    blocks: list[BlockSpec] = []

    # moment matrix M[a, b] = y[a * b]
    bm = basis.monomials
    entries: list[Entry] = []
    for i in range(len(bm)):
        for j in range(i, len(bm)):
            entries.append((i, j, ((y_index[mono_mul(bm[i], bm[j])], 1.0),)))
    blocks.append(BlockSpec(name="moment", size=len(bm), entries=tuple(entries)))

    if sys.include_mass:
        sub = [m for m in bm if len(m[0]) + sum(m[1]) <= r - 1]
        entries = []
        for i in range(len(sub)):
            for j in range(i, len(sub)):
                prod = mono_mul(sub[i], sub[j])
                terms: dict[int, float] = {}
                for l in range(n):
                    idx = y_index[mono_mul(prod, mono_w(l, d))]
                    terms[idx] = terms.get(idx, 0.0) + 1.0
                idx0 = y_index[prod]
                terms[idx0] = terms.get(idx0, 0.0) - sys.mass_rhs
                entries.append((i, j, combine(terms)))
        blocks.append(BlockSpec(name="mass", size=len(sub), entries=tuple(entries)))

    if sys.include_moment and sys.k == 2:
        sub = [m for m in bm if len(m[0]) + sum(m[1]) <= r - 2]
        size = len(sub) * d
        entries = []
        z = sys.z
        mus = [mono_mu(j, d) for j in range(d)]
        for p in range(len(sub)):
            for q in range(p, len(sub)):
                prod = mono_mul(sub[p], sub[q])
                idx_prod = y_index[prod]
                for s in range(d):
                    for t in range(d):
                        row, col = p * d + s, q * d + t
                        if row > col:
                            continue
                        terms = {}
                        if s == t:
                            terms[idx_prod] = sys.moment_rhs
                        for i in range(n):
                            wi = mono_mul(prod, mono_w(i, d))
                            _acc(terms, y_index[wi], -z[i, s] * z[i, t])
                            _acc(terms, y_index[mono_mul(wi, mus[t])], z[i, s])
                            _acc(terms, y_index[mono_mul(wi, mus[s])], z[i, t])
                            _acc(
                                terms,
                                y_index[mono_mul(mono_mul(wi, mus[s]), mus[t])],
                                -1.0,
                            )
                        entries.append((row, col, combine(terms)))
        blocks.append(
            BlockSpec(name="moment-k2", size=size, entries=tuple(entries))
        )

    if sys.include_moment and sys.k == 4:
        # localize the d^2 x d^2 flattening: entries are degree-5 forms
        pairs = list(itertools.product(range(d), repeat=2))
        size = len(pairs)
        entries = []
        z = sys.z
        mus = [mono_mu(j, d) for j in range(d)]
        for a_idx, (s, t) in enumerate(pairs):
            for b_idx in range(a_idx, size):
                u, v = pairs[b_idx]
                coords = (s, t, u, v)
                terms = {}
                if a_idx == b_idx:
                    terms[y_index[one]] = sys.moment_rhs
                for i in range(n):
                    wi = mono_w(i, d)
                    for subset in range(16):
                        coeff = -1.0
                        mono = wi
                        for pos in range(4):
                            c = coords[pos]
                            if subset >> pos & 1:
                                coeff = -coeff
                                mono = mono_mul(mono, mus[c])
                            else:
                                coeff *= z[i, c]
                        _acc(terms, y_index[mono], coeff)
                entries.append((a_idx, b_idx, combine(terms)))
        blocks.append(
            BlockSpec(name="moment-k4", size=size, entries=tuple(entries))
        )

    eq_rows: list[tuple[tuple[int, float], ...]] = []
    eq_rhs: list[float] = []
    if sys.include_mean_link:
        mult = [m for m in y_monos if len(m[0]) + sum(m[1]) <= 2 * r - 2]
        z = sys.z
        mus = [mono_mu(j, d) for j in range(d)]
        for j in range(d):
            for m in mult:
                terms = {}
                for i in range(n):
                    wi = mono_mul(m, mono_w(i, d))
                    _acc(terms, y_index[wi], z[i, j])
                    _acc(terms, y_index[mono_mul(wi, mus[j])], -1.0)
                eq_rows.append(combine(terms))
                eq_rhs.append(0.0)
    eq_rows.append(((one_idx, 1.0),))
    eq_rhs.append(1.0)

    return MomentRelaxation(
        system=sys,
        r=r,
        basis=basis,
        y_monomials=y_monos,
        blocks=tuple(blocks),
        eq_rows=tuple(eq_rows),
        eq_rhs=tuple(eq_rhs),
        one_index=one_idx,
        y_index=y_index,
    )


def _acc(terms: dict[int, float], idx: int, coeff: float) -> None:
    if coeff != 0.0:
        terms[idx] = terms.get(idx, 0.0) + coeff


def moment_vector_of_point(
    rel: MomentRelaxation, w: Sequence[float], mu: Sequence[float]
) -> np.ndarray:
    """Rank-one moment vector of a real assignment (w boolean, mu real)."""
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float)
    y = np.empty(rel.ny)
    for i, (supp, exps) in enumerate(rel.y_monomials):
        v = 1.0
        for l in supp:
            v *= w[l]
        for j, e in enumerate(exps):
            if e:
                v *= mu[j] ** e
        y[i] = v
    return y


def product_moment_vector(
    rel: MomentRelaxation, p: Sequence[float], mu: Sequence[float]
) -> np.ndarray:
    """Moments of independent Bernoulli(p_i) selectors with mu fixed.

    A genuine distribution over the variables, hence a valid (usually
    infeasible) moment vector; used as a neutral solver start.
    """
    p = np.asarray(p, dtype=float)
    mu = np.asarray(mu, dtype=float)
    y = np.empty(rel.ny)
    for i, (supp, exps) in enumerate(rel.y_monomials):
        v = 1.0
        for l in supp:
            v *= p[l]
        for j, e in enumerate(exps):
            if e:
                v *= mu[j] ** e
        y[i] = v
    return y


def block_matrices(rel: MomentRelaxation, y: np.ndarray) -> dict[str, np.ndarray]:
    """Assemble each PSD block at a given moment vector."""
    out = {}
    for b in rel.blocks:
        mat = np.zeros((b.size, b.size))
        for i, j, terms in b.entries:
            val = 0.0
            for idx, c in terms:
                val += c * y[idx]
            mat[i, j] = val
            mat[j, i] = val
        out[b.name] = mat
    return out


def equality_residuals(rel: MomentRelaxation, y: np.ndarray) -> np.ndarray:
    res = np.empty(len(rel.eq_rows))
    for r_i, (row, rhs) in enumerate(zip(rel.eq_rows, rel.eq_rhs)):
        val = 0.0
        for idx, c in row:
            val += c * y[idx]
        res[r_i] = val - rhs
    return res
