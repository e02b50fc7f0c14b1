"""Scatter matrices and the generalized symmetric eigensolver.

Scatter construction uses unweighted sums: the within-class matrix adds one
outer product per instance around its class mean, the between-class matrix
adds one outer product per class mean around the global mean (no class-size
weighting). Classic LDA identities that assume weighted sums therefore do
not hold here, and tests must not assert them.

The eigensolver reduces the pencil (s_b, s_w) to a standard symmetric
problem through a Cholesky factor of s_w and finishes with LAPACK's
symmetric QR (numpy.linalg.eigh), which is deterministic for fixed inputs.
A ridge is applied to s_w only when its raw Cholesky fails, so well-posed
problems keep solver-level residuals.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError, DimensionError, NumericError
from .tensor import as_matrix

SYMMETRY_TOL = 1e-10
RIDGE_EPS = 1e-6


@dataclass(frozen=True)
class LabeledMatrix:
    """Instance-by-feature matrix with one class index per row."""

    matrix: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if lab.size != m.shape[0]:
            raise DimensionError(
                f"{lab.size} labels for {m.shape[0]} rows"
            )
        if lab.size and lab.min() < 0:
            raise DegenerateLabelsError("negative class index")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", lab)

    @property
    def class_count(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0


@dataclass(frozen=True)
class ScatterPair:
    """Within-class (s_w) and between-class (s_b) scatter, both d x d."""

    s_w: np.ndarray
    s_b: np.ndarray


@dataclass(frozen=True)
class EigenResult:
    """Top-k generalized eigenpairs, eigenvalues sorted descending."""

    values: np.ndarray  # (k,)
    vectors: np.ndarray  # (d, k), column j pairs with values[j]


def _symmetrize(m):
    return 0.5 * (m + m.T)


def compute_scatters(data):
    """Build the within/between class scatter pair from labeled rows.

    Within-class: sum over instances of (x - class mean) outer products.
    Between-class: sum over classes of (class mean - global mean) outer
    products, unweighted. Both outputs are symmetrized by averaging with
    their transpose.
    """
    if not isinstance(data, LabeledMatrix):
        data = LabeledMatrix(*data)
    x, labels = data.matrix, data.labels
    classes = np.unique(labels)
    if classes.size < 2:
        raise DegenerateLabelsError(
            f"need >= 2 classes to compute scatters, got {classes.size}"
        )
    d = x.shape[1]
    global_mean = x.mean(axis=0)
    s_w = np.zeros((d, d))
    s_b = np.zeros((d, d))
    for c in classes:
        rows = x[labels == c]
        mu = rows.mean(axis=0)
        centered = rows - mu
        s_w += centered.T @ centered
        dm = mu - global_mean
        s_b += np.outer(dm, dm)
    return ScatterPair(s_w=_symmetrize(s_w), s_b=_symmetrize(s_b))


def _cholesky_with_fallback_ridge(s_w):
    """Cholesky of s_w, ridging only when the raw matrix is unusable.

    A factorization is rejected when it fails outright or when a pivot is
    tiny relative to the diagonal scale (an effectively singular direction,
    which would poison the back-substitution). The ridge starts at
    RIDGE_EPS * mean(diag(s_w)) and escalates tenfold until SPD.
    """
    mean_diag = float(np.mean(np.diag(s_w)))
    try:
        chol = np.linalg.cholesky(s_w)
        pivots = np.diag(chol)
        if mean_diag > 0 and np.min(pivots) ** 2 > 1e-12 * mean_diag:
            return chol
    except np.linalg.LinAlgError:
        pass
    ridge = RIDGE_EPS * mean_diag if mean_diag > 0 else RIDGE_EPS
    eye = np.eye(s_w.shape[0])
    for _ in range(40):
        try:
            return np.linalg.cholesky(s_w + ridge * eye)
        except np.linalg.LinAlgError:
            ridge *= 10.0
    raise NumericError("within-class scatter could not be regularized to SPD")


def generalized_eigen(pair, k):
    """Top-k eigenpairs of s_b a = lambda s_w a.

    Reduction: with L = chol(s_w), solve the symmetric standard problem
    L^-1 s_b L^-T y = lambda y and back-substitute a = L^-T y. Eigenvalues
    come back sorted descending; each eigenvector is unit-norm with its
    largest-magnitude entry made positive so results are reproducible.
    """
    s_w = as_matrix(pair.s_w)
    s_b = as_matrix(pair.s_b)
    d = s_w.shape[0]
    if s_w.shape != (d, d) or s_b.shape != (d, d):
        raise DimensionError("scatter matrices must be square and same size")
    if not (1 <= k <= d):
        raise DimensionError(f"k={k} out of range for d={d}")

    chol = _cholesky_with_fallback_ridge(s_w)
    # C = L^-1 s_b L^-T, forced symmetric against roundoff before eigh.
    tmp = np.linalg.solve(chol, s_b)
    c = np.linalg.solve(chol, tmp.T).T
    c = _symmetrize(c)
    eigvals, eigvecs = np.linalg.eigh(c)

    order = np.argsort(eigvals)[::-1][:k]
    values = eigvals[order]
    vectors = np.linalg.solve(chol.T, eigvecs[:, order])

    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        norm = np.linalg.norm(col)
        if norm > 0:
            col /= norm
        if col[np.argmax(np.abs(col))] < 0:
            col *= -1.0
        vectors[:, j] = col
    return EigenResult(values=values, vectors=vectors)
