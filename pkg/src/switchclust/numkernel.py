"""Dense SPD linear algebra and seeded sampling primitives.

All density work is done in the log domain. Every operation is
deterministic given its inputs; random draws are deterministic given the
:class:`RngStream` they consume.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DegenerateCovariance

LOG_2PI = float(np.log(2.0 * np.pi))

# Relative asymmetry accepted on input; stored matrices are symmetrized.
_SYM_RTOL = 1e-8
_JITTER_SCALE = 1e-8


def logsumexp(a, axis=None):
    """log(sum(exp(a))) with max-shifting; tolerates -inf entries."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = (np.log(np.sum(np.exp(a - m), axis=axis))
               + np.squeeze(m, axis=axis))
    return out if axis is not None else float(out)


def _asymmetry(m):
    gap = np.max(np.abs(m - m.T))
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    return gap / scale


def cholesky(m):
    """Lower-triangular factor L with L @ L.T == m.

    Parameters
    ----------
    m : ndarray, shape (p, p)
        Square matrix, symmetric to within 1e-8 relative.

    Returns
    -------
    L : ndarray, shape (p, p)

    Raises
    ------
    DegenerateCovariance
        If the matrix is not positive definite. No jitter is applied
        here; see :class:`SpdMatrix` for the jittered variant.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if _asymmetry(m) > _SYM_RTOL:
        raise ValueError("matrix is not symmetric within tolerance")
    try:
        return np.linalg.cholesky(0.5 * (m + m.T))
    except np.linalg.LinAlgError as err:
        raise DegenerateCovariance(
            f"matrix is not positive definite: {err}"
        ) from None


class SpdMatrix:
    """A symmetric positive-definite matrix with a cached Cholesky factor.

    If factorization fails, (1e-8 * trace/p) * I is added once and the
    factorization retried; a second failure raises
    :class:`DegenerateCovariance`.
    """

    __slots__ = ("values", "chol", "jitter")

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"expected a square matrix, got {values.shape}")
        if _asymmetry(values) > _SYM_RTOL:
            raise ValueError("matrix is not symmetric within tolerance")
        values = 0.5 * (values + values.T)
        self.jitter = 0.0
        try:
            self.chol = np.linalg.cholesky(values)
        except np.linalg.LinAlgError:
            p = values.shape[0]
            self.jitter = _JITTER_SCALE * float(np.trace(values)) / p
            values = values + self.jitter * np.eye(p)
            try:
                self.chol = np.linalg.cholesky(values)
            except np.linalg.LinAlgError:
                raise DegenerateCovariance(
                    "covariance not positive definite after jitter"
                ) from None
        self.values = values

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def solve(self, b):
        """Solve self @ x = b via the cached factor."""
        return cho_solve((self.chol, True), b)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim}, jitter={self.jitter:g})"


def _as_spd(cov) -> SpdMatrix:
    return cov if isinstance(cov, SpdMatrix) else SpdMatrix(cov)


def mvn_logpdf(x, mean, cov) -> float:
    """Log-density of N(mean, cov) at x, via the Cholesky factor.

    No explicit inverse is formed. `cov` may be an :class:`SpdMatrix` or
    anything accepted by its constructor.
    """
    cov = _as_spd(cov)
    x = np.asarray(x, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    p = cov.dim
    if x.shape != (p,) or mean.shape != (p,):
        raise ValueError(
            f"dimension mismatch: x {x.shape}, mean {mean.shape}, cov dim {p}"
        )
    z = solve_triangular(cov.chol, x - mean, lower=True, check_finite=False)
    return -0.5 * (p * LOG_2PI + cov.logdet + float(z @ z))


def mvn_logpdf_rows(x_rows, means, cov) -> np.ndarray:
    """Row-wise log-densities: x_rows[i] under N(means[i] (or means), cov).

    Parameters
    ----------
    x_rows : ndarray, shape (n, p)
    means : ndarray, shape (n, p) or (p,)
    cov : SpdMatrix or ndarray

    Returns
    -------
    ndarray, shape (n,)
    """
    cov = _as_spd(cov)
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=float))
    resid = x_rows - np.asarray(means, dtype=float)
    if resid.shape[1] != cov.dim:
        raise ValueError(
            f"dimension mismatch: rows have {resid.shape[1]} columns, "
            f"cov dim {cov.dim}"
        )
    z = solve_triangular(cov.chol, resid.T, lower=True, check_finite=False)
    return -0.5 * (cov.dim * LOG_2PI + cov.logdet + np.sum(z * z, axis=0))


class RngStream:
    """Seeded random stream with deterministic splitting.

    A fixed (seed, algorithm) pair yields a bit-identical sample
    sequence across runs. Streams are single-owner; parallel code must
    use :meth:`split` to derive independent child streams.
    """

    def __init__(self, seed: int, algorithm: str = "pcg64"):
        if algorithm != "pcg64":
            raise ValueError(f"unsupported rng algorithm {algorithm!r}")
        self.seed = int(seed)
        self.algorithm = algorithm
        self._seq = np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    @classmethod
    def _from_seq(cls, seq, seed, algorithm):
        obj = cls.__new__(cls)
        obj.seed = seed
        obj.algorithm = algorithm
        obj._seq = seq
        obj.gen = np.random.Generator(np.random.PCG64(seq))
        return obj

    def split(self, n: int) -> list["RngStream"]:
        """Derive `n` independent child streams (deterministic)."""
        return [
            RngStream._from_seq(s, self.seed, self.algorithm)
            for s in self._seq.spawn(n)
        ]

    def __repr__(self):
        return f"RngStream(seed={self.seed}, algorithm={self.algorithm!r})"


def sample_normal(rng: RngStream, mean, cov) -> np.ndarray:
    """Draw from N(mean, cov) via the Cholesky factor of cov."""
    cov = _as_spd(cov)
    mean = np.asarray(mean, dtype=float).ravel()
    if mean.shape != (cov.dim,):
        raise ValueError("mean/cov dimension mismatch")
    return mean + cov.chol @ rng.gen.standard_normal(cov.dim)


def sample_dirichlet(rng: RngStream, conc) -> np.ndarray:
    conc = np.asarray(conc, dtype=float)
    if np.any(conc <= 0):
        raise ValueError("dirichlet concentration must be positive")
    return rng.gen.dirichlet(conc)


def sample_beta(rng: RngStream, a: float, b: float) -> float:
    if a <= 0 or b <= 0:
        raise ValueError("beta parameters must be positive")
    return float(rng.gen.beta(a, b))


def sample_chisq(rng: RngStream, df: float) -> float:
    if df <= 0:
        raise ValueError("chi-squared df must be positive")
    return float(rng.gen.chisquare(df))


def sample_uniform_int(rng: RngStream, lo: int, hi: int) -> int:
    """Uniform integer on the inclusive range {lo, ..., hi}."""
    if hi < lo:
        raise ValueError("empty integer range")
    return int(rng.gen.integers(lo, hi + 1))


def sample_inverse_wishart(rng: RngStream, df: float, scale) -> np.ndarray:
    """Draw from the inverse Wishart with the given df and scale matrix.

    Uses the Bartlett decomposition of the Wishart distribution on the
    inverted scale: if W ~ Wishart(df, scale^{-1}) then W^{-1} follows
    the target law. The mean is scale / (df - p - 1) for df > p + 1.
    """
    scale = _as_spd(scale)
    p = scale.dim
    if df <= p - 1:
        raise ValueError(f"inverse-Wishart df must exceed p-1 = {p - 1}")
    inv_scale = scale.solve(np.eye(p))
    l_inv = np.linalg.cholesky(0.5 * (inv_scale + inv_scale.T))
    a = np.zeros((p, p))
    for i in range(p):
        a[i, i] = np.sqrt(rng.gen.chisquare(df - i))
        if i > 0:
            a[i, :i] = rng.gen.standard_normal(i)
    f = l_inv @ a
    w = f @ f.T
    draw = cho_solve((np.linalg.cholesky(w), True), np.eye(p))
    return 0.5 * (draw + draw.T)
