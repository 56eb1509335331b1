"""Exact finite-volume generator, relaxation time, and Dirichlet forms.

Finite KCMs are reducible (the all-occupied configuration is isolated for
every nontrivial family), so the spectral objects here live on the
irreducible class containing the all-empty configuration, with the product
measure conditioned on that class. States are occupancy bitmasks over at
most 24 vertices.

Convention: D(f) = sum_x mu(c_x Var_x(f)) with no extra prefactor, which is
exactly the quadratic form <f, -Lf>_mu for the generator built here; the
code cross-checks the two on every call. (A 1/2 appears only in the
directed double-sum form sum_{w,w'} mu(w) rate(w->w') (f(w')-f(w))^2 / 2,
which double counts each unordered pair.)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .families import UpdateFamily, tables_for
from .lattice import Geometry

STATE_CAP_VERTICES = 24
DENSE_ORACLE_CAP = 1 << 14
_DENSE_CUTOFF = 4096  # below this the production path also diagonalizes densely

REVERSIBILITY_TOL = 1e-12
CONSISTENCY_TOL = 1e-10
VARIATIONAL_TOL = 1e-8
DEGENERATE_GAP = 1e-12


@dataclass
class GeneratorMatrix:
    """Generator restricted to the irreducible class of the all-empty state.

    states[i] is the occupancy bitmask of class member i (bit set = occupied),
    mu its conditioned stationary weight, L the (size x size) CSR generator
    with rate(w -> w^x) = c_x(w) * (p if the flip occupies x else q).
    """

    geom: Geometry
    fam: UpdateFamily
    q: float
    states: np.ndarray          # (size,) int64 bitmasks
    index: dict                 # bitmask -> row
    mu: np.ndarray              # (size,) float64, sums to 1
    L: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.states.size

    def constraint_masks(self):
        return _constraint_masks(self.geom, self.fam)


def _constraint_masks(geom: Geometry, fam: UpdateFamily):
    """Per-vertex list of neighbor bitmasks, one per feasible rule.

    c_x(state) = 1 iff (state & mask) == 0 for some mask in masks[x]. Rules
    with a translate leaving a free box are dropped (occupied outside) or
    keep only their in-box members (empty outside).
    """
    t = tables_for(geom, fam)
    n = geom.n_sites
    masks: list[list[int]] = [[] for _ in range(n)]
    m = t.rule_ptr.size - 1
    for v in range(n):
        for k in range(m):
            mask = 0
            feasible = True
            for i in range(t.rule_ptr[k], t.rule_ptr[k + 1]):
                w = int(t.nbr[v, t.rule_slots[i]])
                if w == n:
                    if not t.pad_empty:
                        feasible = False
                        break
                else:
                    mask |= 1 << w
            if feasible:
                masks[v].append(mask)
    return masks


def _legal_vertices(state: int, masks) -> list[int]:
    out = []
    for v, vmasks in enumerate(masks):
        for mask in vmasks:
            if state & mask == 0:
                out.append(v)
                break
    return out


def build_generator(geom: Geometry, fam: UpdateFamily, q: float) -> GeneratorMatrix:
    """Assemble L on the class of the all-empty configuration (BFS over
    legal flips), with mu conditioned on the class."""
    if geom.n_sites > STATE_CAP_VERTICES:
        raise ValueError(
            f"state space cap exceeded: {geom.n_sites} > {STATE_CAP_VERTICES} vertices")
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0,1)")
    if fam.d != geom.d:
        raise ValueError("family dimension does not match geometry")
    n = geom.n_sites
    p = 1.0 - q
    masks = _constraint_masks(geom, fam)

    # legal flips are reversible moves (c_x ignores the state of x), so the
    # class is the undirected component of the all-empty bitmask
    start = 0
    index = {start: 0}
    states = [start]
    head = 0
    while head < len(states):
        s = states[head]
        head += 1
        for v in _legal_vertices(s, masks):
            t = s ^ (1 << v)
            if t not in index:
                index[t] = len(states)
                states.append(t)
    states_arr = np.asarray(states, dtype=np.int64)

    occ = np.array([bin(s).count("1") for s in states], dtype=np.int64)
    logw = occ * np.log(p) + (n - occ) * np.log(q)
    w = np.exp(logw - logw.max())
    mu = w / w.sum()

    rows, cols, vals = [], [], []
    diag = np.zeros(len(states))
    for i, s in enumerate(states):
        for v in _legal_vertices(s, masks):
            j = index[s ^ (1 << v)]
            rate = q if (s >> v) & 1 else p
            rows.append(i)
            cols.append(j)
            vals.append(rate)
            diag[i] -= rate
    rows.extend(range(len(states)))
    cols.extend(range(len(states)))
    vals.extend(diag)
    L = sp.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))

    gen = GeneratorMatrix(geom=geom, fam=fam, q=q, states=states_arr,
                          index=index, mu=mu, L=L)
    _assert_reversible(gen)
    return gen


def _assert_reversible(gen: GeneratorMatrix) -> None:
    """Entrywise detailed balance: mu_i L_ij == mu_j L_ji."""
    C = gen.L.tocoo()
    off = C.row != C.col
    bal = gen.mu[C.row[off]] * C.data[off]
    rev = np.asarray(gen.L[C.col[off], C.row[off]]).ravel() * gen.mu[C.col[off]]
    err = float(np.abs(bal - rev).max()) if bal.size else 0.0
    if err > REVERSIBILITY_TOL:
        raise AssertionError(f"reversibility violated: max error {err:.3e}")


def _symmetrized(gen: GeneratorMatrix) -> sp.csr_matrix:
    """S = D^{1/2} L D^{-1/2} with D = diag(mu); symmetric, same spectrum."""
    root = np.sqrt(gen.mu)
    d1 = sp.diags(root)
    d2 = sp.diags(1.0 / root)
    S = d1 @ gen.L @ d2
    return ((S + S.T) * 0.5).tocsr()


def spectral_gap(gen: GeneratorMatrix) -> tuple[float, bool]:
    """(gap, degenerate): the smallest nonzero eigenvalue of -L on the class
    and whether it is numerically degenerate (< 1e-12).

    Dense diagonalization below _DENSE_CUTOFF states; Lanczos on the
    shifted symmetrized matrix above it.
    """
    S = _symmetrized(gen)
    size = gen.size
    if size == 1:
        return 0.0, True
    if size <= _DENSE_CUTOFF:
        lam = np.sort(-np.linalg.eigvalsh(S.toarray()))  # -L spectrum, ascending
        zero, gap = float(lam[0]), float(lam[1])
    else:
        # shift so the wanted pair sits at the top end of the spectrum
        c = float(2.0 * np.abs(S.diagonal()).max() + 1.0)
        A = (S + c * sp.identity(size, format="csr")).tocsr()
        v0 = np.full(size, 1.0 / np.sqrt(size))
        vals = spla.eigsh(A, k=2, which="LA", v0=v0,
                          return_eigenvectors=False)
        vals = np.sort(vals)[::-1]  # vals[0] ~ c (zero mode), vals[1] = c - gap
        zero, gap = float(c - vals[0]), float(c - vals[1])
    if abs(zero) > 1e-8:
        raise AssertionError("zero eigenvalue not found on the class")
    return gap, gap < DEGENERATE_GAP


def relaxation_time(gen: GeneratorMatrix) -> float:
    """T_rel = 1/gap; warns if the gap is numerically degenerate."""
    gap, degenerate = spectral_gap(gen)
    if degenerate:
        warnings.warn(f"numerically degenerate gap {gap:.3e}", RuntimeWarning)
        return np.inf
    return 1.0 / gap


def relaxation_time_dense(gen: GeneratorMatrix) -> float:
    """Independent dense oracle: full eigh of the symmetrized generator."""
    if gen.size > DENSE_ORACLE_CAP:
        raise ValueError(f"dense oracle capped at {DENSE_ORACLE_CAP} states")
    root = np.sqrt(gen.mu)
    dense = gen.L.toarray() * root[:, None] / root[None, :]
    dense = 0.5 * (dense + dense.T)
    lam = np.sort(-np.linalg.eigvalsh(dense))
    if abs(lam[0]) > 1e-8:
        raise AssertionError("zero eigenvalue not found on the class")
    if lam[1] < DEGENERATE_GAP:
        warnings.warn("numerically degenerate gap", RuntimeWarning)
        return np.inf
    return float(1.0 / lam[1])


def second_eigenvector(gen: GeneratorMatrix) -> np.ndarray:
    """The -L eigenvector of the gap eigenvalue, mapped back from the
    symmetrized coordinates; attains Var(f)/D(f) = T_rel."""
    S = _symmetrized(gen)
    if gen.size <= DENSE_ORACLE_CAP:
        ev, vec = np.linalg.eigh(S.toarray())
        order = np.argsort(-ev)  # descending in L-eigenvalue = ascending in -L
        v = vec[:, order[1]]
    else:
        c = float(2.0 * np.abs(S.diagonal()).max() + 1.0)
        A = (S + c * sp.identity(gen.size, format="csr")).tocsr()
        v0 = np.full(gen.size, 1.0 / np.sqrt(gen.size))
        _, vecs = spla.eigsh(A, k=2, which="LA", v0=v0)
        v = vecs[:, 0]  # eigsh returns ascending; column 0 is c - gap
    return v / np.sqrt(gen.mu)


def dirichlet_and_variance(gen: GeneratorMatrix, f: np.ndarray):
    """(D(f), Var(f)) with D = sum_x mu(c_x Var_x(f)).

    Var_x(f)(w) = q(1-q) (f(w with x empty) - f(w with x occupied))^2; the
    sum runs over legal x only (c_x = 0 kills the rest), and both spins at a
    legal x stay inside the class. Cross-checked against <f, -Lf>_mu.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (gen.size,):
        raise ValueError("f dimension does not match the state enumeration")
    masks = gen.constraint_masks()
    qp = gen.q * (1.0 - gen.q)
    D = 0.0
    for i, s in enumerate(map(int, gen.states)):
        for v in _legal_vertices(s, masks):
            if (s >> v) & 1:
                continue  # count each unordered pair once, from the empty side
            j = gen.index[s ^ (1 << v)]
            diff = f[i] - f[j]
            # mu(w: x empty) + mu(w^x) weights combine to mu(pair); local
            # variance is the same at both, so the pair contributes
            # (mu_i + mu_j) * qp * diff^2 ... accumulated per side below
            D += (gen.mu[i] + gen.mu[j]) * qp * diff * diff
    quad = float(-gen.mu @ (f * (gen.L @ f)))
    if abs(D - quad) > CONSISTENCY_TOL * max(1.0, abs(D), abs(quad)):
        raise AssertionError(
            f"Dirichlet forms disagree: {D!r} vs quadratic {quad!r}")
    mean = float(gen.mu @ f)
    var = float(gen.mu @ (f - mean) ** 2)
    return D, var


def poincare_ratio(gen: GeneratorMatrix, fs) -> float:
    """max over fs of Var(f)/D(f); D=0 with Var>0 means the class extraction
    is broken and raises."""
    best = 0.0
    for f in fs:
        D, var = dirichlet_and_variance(gen, f)
        if D <= 0.0:
            if var > 1e-15:
                raise AssertionError(
                    "Var(f) > 0 with D(f) = 0: nonconstant f invariant on the "
                    "class, the component extraction is wrong")
            continue
        best = max(best, var / D)
    return best
