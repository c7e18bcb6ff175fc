"""
Symmetry-reduced walk and its spectral analysis.

Automorphisms of the maze that fix S and F preserve the uniform start
state, so amplitudes are constant on their orbits. A directed state is
classified by the triple ``(depth, split, direction)``:

* ``depth`` d in 1..M+1 is the coordinate of its edge,
* ``split`` s in 1..d is the deepest level at which the edge's child
  node still agrees with the root->F path (s == d means on-path),
* ``direction`` is 0 heading away from the root, 1 heading towards it.

That gives (M+1)(M+2) classes, built from (M+1)(M+2)/2 effective edges
with two directions each. The reduced walk acts on the normalised class
vectors ``|c> = |c|^(-1/2) sum_{i in c} |i>`` and is an exact real
orthogonal matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import InvalidParameters, NumericalFailure
from .maze import TreeMaze, edge_count, level_offset
from .walk import WalkState, layout_for

DOWN, UP = 0, 1


def effective_edge_count(M: int) -> int:
    """Effective (undirected) edges of the reduced maze, (M+1)(M+2)/2."""
    return (M + 1) * (M + 2) // 2


def class_index(depth: int, split: int, direction: int) -> int:
    return depth * (depth - 1) + 2 * (split - 1) + direction


def class_labels(M: int) -> list[tuple[int, int, int]]:
    return [(d, s, r) for d in range(1, M + 2) for s in range(1, d + 1) for r in (DOWN, UP)]


def class_size(N: int, depth: int, split: int) -> int:
    return 1 if split == depth else (N - 1) * N ** (depth - 1 - split)


@dataclass(frozen=True)
class ReducedBasis:
    N: int
    M: int
    labels: tuple
    sizes: np.ndarray  # float; class sizes overflow int64 for large mazes

    @property
    def dimension(self) -> int:
        return len(self.labels)

    @property
    def n_effective_edges(self) -> int:
        return effective_edge_count(self.M)

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.sizes)

    @property
    def on_path(self) -> np.ndarray:
        return np.array([s == d for d, s, _ in self.labels])

    @property
    def root_classes(self) -> list[int]:
        return [class_index(1, 1, DOWN), class_index(1, 1, UP)]

    @property
    def f_classes(self) -> list[int]:
        M1 = self.M + 1
        return [class_index(M1, M1, DOWN), class_index(M1, M1, UP)]

    def path_mask(self, include_root_edge: bool = False) -> np.ndarray:
        mask = self.on_path.copy()
        if not include_root_edge:
            mask[self.root_classes] = False
        return mask

    def initial_vector(self) -> np.ndarray:
        return np.sqrt(self.sizes / (2.0 * edge_count(self.N, self.M)))

    def assert_partition(self) -> None:
        total = int(sum(class_size(self.N, d, s) for d, s, _ in self.labels))
        if total != 2 * edge_count(self.N, self.M):
            raise NumericalFailure("classes do not partition the directed states", self.dimension)


@dataclass(frozen=True)
class ReducedOperator:
    basis: ReducedBasis
    matrix: np.ndarray
    f_phase: int = -1


def _transitions(N: int, M: int, label, f_phase: int):
    """Images of one representative state of ``label`` under a single step."""
    d, s, direction = label
    t, r = 2.0 / (N + 1), (N - 1) / (N + 1)
    out = []
    if direction == DOWN:
        if d == M + 1:
            out.append(((d, s, UP), float(f_phase) if s == d else 1.0))
        else:
            out.append(((d, s, UP), -r))
            if s == d:
                out.append(((d + 1, d + 1, DOWN), t))
                out.append(((d + 1, d, DOWN), t * (N - 1)))
            else:
                out.append(((d + 1, s, DOWN), t * N))
    elif d == 1:
        out.append(((1, 1, DOWN), 1.0))
    else:
        parent_split = min(s, d - 1)
        out.append(((d, s, DOWN), -r))
        out.append(((d - 1, parent_split, UP), t))
        if parent_split == d - 1:
            if s == d:
                out.append(((d, d - 1, DOWN), t * (N - 1)))
            else:
                out.append(((d, d, DOWN), t))
                out.append(((d, d - 1, DOWN), t * (N - 2)))
        else:
            out.append(((d, s, DOWN), t * (N - 1)))
    return out


@lru_cache(maxsize=256)
def _build(N: int, M: int, f_phase: int) -> tuple[ReducedBasis, ReducedOperator]:
    labels = tuple(class_labels(M))
    sizes = np.array([float(class_size(N, d, s)) for d, s, _ in labels])
    basis = ReducedBasis(N, M, labels, sizes)
    D = basis.dimension
    T = np.zeros((D, D))
    for j, lab in enumerate(labels):
        for target, amp in _transitions(N, M, lab, f_phase):
            if amp == 0.0:
                continue
            i = class_index(*target)
            T[i, j] += amp * math.sqrt(sizes[j] / sizes[i])
    T.setflags(write=False)
    return basis, ReducedOperator(basis, T, f_phase)


def build_reduced(maze: TreeMaze) -> tuple[ReducedBasis, ReducedOperator]:
    """Reduced basis and step matrix of the live sub-maze (which must contain F)."""
    if not maze.f_live:
        raise InvalidParameters("the reduced engine needs F inside the live maze")
    return _build(maze.N, maze.live_depth, maze.f_phase)


def reduced_engine(N: int, M: int, f_phase: int = -1) -> tuple[ReducedBasis, ReducedOperator]:
    if N < 2 or M < 1:
        raise InvalidParameters("need N >= 2 and M >= 1")
    return _build(N, M, f_phase)


def state_classes(maze: TreeMaze) -> np.ndarray:
    """Class index of every live directed state, in walk-state order."""
    lay = layout_for(maze)
    N, depth, leaf = maze.N, maze.live_depth, maze.local_f_leaf
    depths = lay.edge_depths()
    child = np.arange(1, lay.n_edges + 1, dtype=np.int64)
    pos = child - np.array([level_offset(N, d) for d in range(depth + 2)])[depths]
    split = np.ones_like(depths)
    for lvl in range(2, depth + 2):
        ok = depths >= lvl
        anc = pos[ok] // N ** (depths[ok] - lvl)
        match = anc == leaf // N ** (depth + 1 - lvl)
        # agreement is prefix-closed, so once an ancestor differs deeper levels never match
        idx = np.nonzero(ok)[0][match & (split[ok] == lvl - 1)]
        split[idx] = lvl
    base = depths * (depths - 1) + 2 * (split - 1)
    out = np.empty(2 * lay.n_edges, dtype=np.int64)
    out[0::2] = base + DOWN
    out[1::2] = base + UP
    return out


def project(maze: TreeMaze, s: WalkState) -> np.ndarray:
    basis, _ = build_reduced(maze)
    cls = state_classes(maze)
    sums = np.bincount(cls, weights=s.amplitudes, minlength=basis.dimension)
    return sums * basis.weights


def lift(maze: TreeMaze, v: np.ndarray) -> WalkState:
    basis, _ = build_reduced(maze)
    cls = state_classes(maze)
    return WalkState(maze, (v * basis.weights)[cls])


def evolve_reduced(op: ReducedOperator, v: np.ndarray, n_steps: int) -> np.ndarray:
    T = op.matrix
    for _ in range(n_steps):
        v = T @ v
    return v


def reduced_trace(op: ReducedOperator, n_steps: int, include_root_edge: bool = False):
    """(f_prob, path_prob) from the uniform state for steps 0..n_steps."""
    basis = op.basis
    fmask = np.zeros(basis.dimension, dtype=bool)
    fmask[basis.f_classes] = True
    pmask = basis.path_mask(include_root_edge)
    v = basis.initial_vector()
    f_out = np.empty(n_steps + 1)
    p_out = np.empty(n_steps + 1)
    T = op.matrix
    for n in range(n_steps + 1):
        sq = v * v
        f_out[n] = sq[fmask].sum()
        p_out[n] = sq[pmask].sum()
        if n < n_steps:
            v = T @ v
    return f_out, p_out


def class_probabilities(op: ReducedOperator, n_steps: int) -> np.ndarray:
    v = evolve_reduced(op, op.basis.initial_vector(), n_steps)
    return v * v


# -- spectral analysis ------------------------------------------------------

@dataclass(frozen=True)
class EigenSystem:
    basis: ReducedBasis
    eigenvalues: np.ndarray   # complex, |lambda| = 1
    eigenvectors: np.ndarray  # columns, orthonormal
    overlaps: np.ndarray      # beta_i = <u_i | psi>
    partner: np.ndarray       # index of the conjugate eigenpair (self for real ones)
    dominant: int             # representative of the dominant pair, angle in (0, pi)

    @property
    def theta_lambda(self) -> float:
        return float(np.angle(self.eigenvalues[self.dominant]))

    @property
    def theta_lambda_degrees(self) -> float:
        return math.degrees(self.theta_lambda)

    @property
    def beta(self) -> complex:
        return complex(self.overlaps[self.dominant])

    @property
    def theta_beta(self) -> float:
        return float(np.angle(self.beta))

    @property
    def z(self) -> np.ndarray:
        """<Phi|u> for every class state Phi, u the dominant eigenvector."""
        return self.eigenvectors[:, self.dominant]

    @property
    def theta_z(self) -> np.ndarray:
        return np.angle(self.z)

    @property
    def truncation_mass(self) -> float:
        return float(1.0 - 2.0 * abs(self.beta) ** 2)


def _fix_phase(u: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(u)))
    return u * np.exp(-1j * np.angle(u[k]))


def eigensystem(op: ReducedOperator, psi_init=None, tol: float = 1e-9) -> EigenSystem:
    """Complete eigendecomposition of the reduced step via the real Schur form.

    The step matrix is orthogonal, hence normal, so its real Schur form is
    block diagonal with 1x1 blocks (+-1) and 2x2 rotations. Each rotation
    block yields a conjugate pair of orthonormal eigenvectors directly.
    """
    T = np.asarray(op.matrix, dtype=float)
    D = T.shape[0]
    psi = op.basis.initial_vector() if psi_init is None else np.asarray(psi_init, dtype=float)
    try:
        S, Z = scipy.linalg.schur(T, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Schur decomposition failed for D={D}: {exc}", D) from exc

    vals = np.empty(D, dtype=complex)
    vecs = np.empty((D, D), dtype=complex)
    partner = np.arange(D)
    block_mask = np.zeros((D, D), dtype=bool)
    i = 0
    while i < D:
        # LAPACK leaves exact zeros below 1x1 blocks; tiny rotations are still 2x2
        if i + 1 < D and S[i + 1, i] != 0.0:
            # standardised block [[a, b], [c, a]] with bc < 0; for a normal matrix
            # |b| == |c| and the eigenvectors are exactly (1, +-i)/sqrt(2)
            a, b, c = S[i, i], S[i, i + 1], S[i + 1, i]
            lam = complex(a, math.sqrt(-b * c))
            u = (Z[:, i] + 1j * math.copysign(1.0, b) * Z[:, i + 1]) / math.sqrt(2.0)
            u = _fix_phase(u)
            vals[i], vals[i + 1] = lam, lam.conjugate()
            vecs[:, i], vecs[:, i + 1] = u, np.conj(u)
            partner[i], partner[i + 1] = i + 1, i
            block_mask[i:i + 2, i:i + 2] = True
            i += 2
        else:
            vals[i] = S[i, i]
            vecs[:, i] = _fix_phase(Z[:, i].astype(complex))
            block_mask[i, i] = True
            i += 1
    off = np.abs(np.where(block_mask, 0.0, S)).max() if D > 1 else 0.0
    if off > tol:
        raise NumericalFailure(f"step matrix is not normal (off-block {off:.2e})", D)
    resid = np.linalg.norm(T @ vecs - vecs * vals, axis=0).max()
    if resid > tol:
        raise NumericalFailure(f"eigen residual {resid:.2e} exceeds {tol}", D)

    beta = vecs.conj().T @ psi
    theta = np.angle(vals)
    candidates = [j for j in range(D) if 0.0 < theta[j] < math.pi and partner[j] != j]
    if not candidates:
        raise NumericalFailure("no complex eigenpair found", D)
    dominant = min(candidates, key=lambda j: (-round(abs(beta[j]), 12), theta[j]))
    return EigenSystem(op.basis, vals, vecs, beta, partner, dominant)


def spectral_evolution(es: EigenSystem, n: int) -> np.ndarray:
    """U^n psi from every eigenpair; real up to rounding."""
    coeff = es.overlaps * es.eigenvalues ** n
    return (es.eigenvectors @ coeff).real


def approx_amplitude(es: EigenSystem, phi: int, n) -> float:
    """Two-term amplitude 2|beta||z| cos(theta_beta + theta_z + theta_lambda n)."""
    z = es.z[phi]
    return 2.0 * abs(es.beta) * abs(z) * np.cos(es.theta_beta + np.angle(z) + es.theta_lambda * n)


def approx_path_probability(es: EigenSystem, n, include_root_edge: bool = False):
    idx = np.nonzero(es.basis.path_mask(include_root_edge))[0]
    n = np.asarray(n, dtype=float)
    return sum(approx_amplitude(es, int(i), n) ** 2 for i in idx)


def peak_offset(es: EigenSystem, include_root_edge: bool = False) -> float:
    """Mean initial phase theta_beta + theta_z + pi/2 over the on-path states.

    Amplitude signs do not affect probabilities, so the phases live modulo
    pi; the mean is the |z|^2-weighted circular mean of the doubled angle.
    """
    idx = np.nonzero(es.basis.path_mask(include_root_edge))[0]
    z = es.z[idx]
    delta = es.theta_beta + np.angle(z) + math.pi / 2
    return 0.5 * float(np.angle(np.sum(np.abs(z) ** 2 * np.exp(2j * delta))))


def peak_step_from_angle(theta: float, offset: float = 0.0) -> int:
    return int(round((math.pi / 2 - offset) / theta))


def predicted_peak_step(es: EigenSystem) -> int:
    return peak_step_from_angle(es.theta_lambda, peak_offset(es))


def eigen_report(N: int, M: int) -> dict:
    basis, op = reduced_engine(N, M)
    es = eigensystem(op)
    return {
        "schema_version": 1,
        "N": N,
        "M": M,
        "D": basis.n_effective_edges,
        "state_dimension": basis.dimension,
        "theta_lambda_degrees": es.theta_lambda_degrees,
        "beta_abs": abs(es.beta),
        "truncation_mass": es.truncation_mass,
        "predicted_peak_step": predicted_peak_step(es),
    }
