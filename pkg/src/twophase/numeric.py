"""Linear algebra and randomness substrate.

Matrices are plain ``float64`` numpy arrays. The two pieces implemented here
rather than delegated to numpy are the symmetric eigensolver (cyclic Jacobi,
so results do not depend on the installed LAPACK) and Gaussian sampling
(Box-Muller on a PCG64 uniform stream).
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, ParameterError, ShapeError

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
SYMMETRY_TOL = 1e-9


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Convert to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ParameterError(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise ParameterError("matrix product overflowed")
    return out


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint (p, q) pair sets covering every index pair once per sweep.

    Uses the circle method: index 0 stays fixed while the others rotate. For
    odd ``m`` a dummy player is added and its pairs dropped.
    """
    players = list(range(m + (m % 2)))
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        ps, qs = [], []
        for i in range(k // 2):
            p, q = players[i], players[k - 1 - i]
            if p < m and q < m:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigen(s) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once; within a round the pairs
    are disjoint so their rotations are applied together.

    Args:
        s: Symmetric ``(m, m)`` matrix.

    Returns:
        ``(eigenvalues, eigenvectors)`` with eigenvalues sorted descending and
        eigenvectors as columns. Each eigenvector is signed so that its
        largest-magnitude component is positive.

    Raises:
        ShapeError: ``s`` is not square or not symmetric within 1e-9.
        ConvergenceError: off-diagonal mass still above tolerance after
            100 sweeps.
    """
    a = as_matrix(s, "s").copy()
    m = a.shape[0]
    if a.shape[1] != m:
        raise ShapeError(f"sym_eigen needs a square matrix, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise ShapeError("sym_eigen needs a symmetric matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(m)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    rounds = _round_robin(m)
    offdiag = ~np.eye(m, dtype=bool)

    def off(mat):
        return np.sqrt(np.sum(mat[offdiag] ** 2))

    for _sweep in range(JACOBI_MAX_SWEEPS):
        if off(a) <= JACOBI_TOL * scale:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            sn = t * c
            # columns then rows: A <- P^T A P
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - sn * aq
            a[:, q] = sn * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - sn[:, None] * aq
            a[q, :] = sn[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - sn * vq
            v[:, q] = sn * vp + c * vq
    else:
        if off(a) > JACOBI_TOL * scale:
            raise ConvergenceError(
                f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    vals, v = vals[order], v[:, order]
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(m)])
    signs[signs == 0] = 1.0
    return vals, v * signs


class Rng:
    """Seeded random stream on numpy's PCG64 bit generator.

    PCG64 output for a given seed is fixed by numpy's stream-compatibility
    policy, so draws are identical across platforms. Independent child streams
    come from :meth:`child`, never from sharing one instance.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *keys: int) -> "Rng":
        return Rng(derive_seed(self.seed, *keys))

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return low + (high - low) * self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, p=None):
        return int(self._gen.choice(n, p=p))

    def gaussian(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        return gaussian(self, n, mean, std)


def derive_seed(seed: int, *keys: int) -> int:
    """Mix a master seed with stream indices into a new 64-bit seed."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gaussian(rng: Rng, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    """Draw ``n`` normal variates with the Box-Muller transform."""
    if std < 0:
        raise ParameterError(f"std must be >= 0, got {std}")
    if n < 0:
        raise ParameterError(f"n must be >= 0, got {n}")
    half = (n + 1) // 2
    u1 = 1.0 - rng.uniform(size=half)  # (0, 1], keeps log finite
    u2 = rng.uniform(size=half)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * half)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return mean + std * z[:n]
