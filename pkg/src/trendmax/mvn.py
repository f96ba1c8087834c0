"""Multivariate normal rectangle probabilities for max-type tests.

The integrator is the separation-of-variables transform of Genz (1992)
evaluated on a randomly shifted rank-1 lattice (component-by-component
construction) with a baker's periodization. Randomization comes from a
seeded generator, so results are a deterministic function of
``(limits, R, seed, tol)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy.special import ndtr, ndtri

from .errors import NumericalError

# two-sided 99% normal quantile for the error estimate
_Z99 = 2.5758293035489004
_PSD_REPAIR_TOL = 1e-8
_PIVOT_TOL = 1e-10



def _is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def _prime_below(n):
    while not _is_prime(n):
        n -= 1
    return n


def _smooth(n, primes=(2, 3, 5, 7)):
    for p in primes:
        while n % p == 0:
            n //= p
    return n == 1


def _lattice_size(n):
    """Largest prime ``p <= n`` with 7-smooth ``p - 1`` (fast FFT length)."""
    p = max(int(n), 3)
    while not (_is_prime(p) and _smooth(p - 1)):
        p -= 1
    return p


def _prime_factors(n):
    out, f = set(), 2
    while f * f <= n:
        while n % f == 0:
            out.add(f)
            n //= f
        f += 1
    if n > 1:
        out.add(n)
    return out


def _primitive_root(p):
    factors = _prime_factors(p - 1)
    for g in range(2, p):
        if all(pow(g, (p - 1) // q, p) != 1 for q in factors):
            return g
    raise ValueError(f"no primitive root for {p}")


@lru_cache(maxsize=64)
def cbc_lattice(dim, n):
    """Rank-1 lattice generating vector by fast component-by-component search.

    ``n`` must be prime. The criterion is the worst-case error in a weighted
    Korobov space of smoothness one (kernel ``B2(x) = x^2 - x + 1/6``) with
    product weights ``0.8**j``; the circulant structure under a primitive
    root turns each component search into one FFT correlation.

    Returns the generator ``z / n`` as floats in ``(0, 1)``.
    """
    if not _is_prime(n):
        raise ValueError("lattice size must be prime")
    if dim == 0:
        return np.zeros(0)
    g = _primitive_root(n)
    block = int(np.sqrt(n)) + 1
    head = np.empty(block, dtype=np.int64)
    head[0] = 1
    for i in range(1, block):
        head[i] = head[i - 1] * g % n
    step = head[-1] * g % n
    starts = np.empty(block, dtype=np.int64)
    starts[0] = 1
    for i in range(1, block):
        starts[i] = starts[i - 1] * step % n
    powers = (starts[:, None] * head[None, :] % n).ravel()[:n - 1]
    x = powers / n
    omega = x * x - x + 1.0 / 6.0
    f_omega = np.fft.rfft(omega)
    prod = np.ones(n - 1)
    z = np.empty(dim, dtype=np.int64)
    half = max((n - 1) // 2, 1)
    for s in range(dim):
        gamma = 0.8 ** s
        if s == 0:
            j = 0
        else:
            corr = np.fft.irfft(np.conj(np.fft.rfft(prod)) * f_omega, n - 1)
            j = int(np.argmin(corr[:half]))
        z[s] = powers[j]
        prod *= 1.0 + gamma * np.roll(omega, -j)
    return z / n


def repair_correlation(R):
    """Return a valid correlation matrix close to ``R``.

    Matrices with smallest eigenvalue in ``(-1e-8, 0)`` are clipped to the
    PSD cone and rescaled to unit diagonal; anything more indefinite raises.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("correlation matrix must be square")
    R = 0.5 * (R + R.T)
    if not np.all(np.isfinite(R)):
        raise NumericalError("correlation matrix contains non-finite entries")
    eig, vec = np.linalg.eigh(R)
    if eig[0] < -_PSD_REPAIR_TOL:
        raise NumericalError(
            f"correlation matrix is not positive semidefinite "
            f"(smallest eigenvalue {eig[0]:.3g})"
        )
    if eig[0] < 0:
        R = (vec * np.clip(eig, 0.0, None)) @ vec.T
    d = np.sqrt(np.diag(R))
    if np.any(d <= 0):
        raise NumericalError("correlation matrix has a zero variance")
    R = R / np.outer(d, d)
    np.fill_diagonal(R, 1.0)
    return R


def _truncated_mean(a, b):
    """Mean of a standard normal truncated to ``[a, b]``."""
    pa, pb = ndtr(a), ndtr(b)
    mass = pb - pa
    da = np.exp(-0.5 * a * a) if np.isfinite(a) else 0.0
    db = np.exp(-0.5 * b * b) if np.isfinite(b) else 0.0
    if mass < 1e-300:
        return a if np.isfinite(a) and not np.isfinite(b) else (b if np.isfinite(b) else 0.0)
    return (da - db) / (np.sqrt(2 * np.pi) * mass)


def pivoted_cholesky(R, lower=None, upper=None, tol=_PIVOT_TOL):
    """Lower-triangular factor of a PSD matrix with diagonal pivoting.

    Returns ``(L, perm)`` with ``R[perm][:, perm] == L @ L.T``. With limits
    given, the pivot at each step is the variable with the smallest expected
    conditional interval probability (Genz & Bretz ordering); otherwise the
    largest remaining variance. Columns whose remaining variance falls below
    ``tol`` are left at zero, which is how exactly collinear statistics
    (e.g. duplicated family members) are handled.
    """
    A = np.array(R, dtype=float)
    m = A.shape[0]
    perm = np.arange(m)
    L = np.zeros_like(A)
    ordered = lower is not None
    if ordered:
        lo = np.array(lower, dtype=float)
        hi = np.array(upper, dtype=float)
        ey = np.zeros(m)
    for i in range(m):
        resid = np.diag(A)[i:] - np.sum(L[i:, :i] ** 2, axis=1)
        if ordered and np.any(resid > tol):
            mu = L[i:, :i] @ ey[:i]
            sd = np.sqrt(np.clip(resid, tol, None))
            prob = ndtr((hi[i:] - mu) / sd) - ndtr((lo[i:] - mu) / sd)
            prob[resid <= tol] = np.inf
            j = i + int(np.argmin(prob))
        else:
            j = i + int(np.argmax(resid))
        if j != i:
            A[[i, j]] = A[[j, i]]
            A[:, [i, j]] = A[:, [j, i]]
            L[[i, j]] = L[[j, i]]
            perm[[i, j]] = perm[[j, i]]
            if ordered:
                lo[[i, j]] = lo[[j, i]]
                hi[[i, j]] = hi[[j, i]]
        piv = A[i, i] - L[i, :i] @ L[i, :i]
        if piv <= tol:
            # remaining block is numerically rank zero
            break
        L[i, i] = np.sqrt(piv)
        L[i + 1:, i] = (A[i + 1:, i] - L[i + 1:, :i] @ L[i, :i]) / L[i, i]
        if ordered:
            mu = L[i, :i] @ ey[:i]
            ey[i] = _truncated_mean((lo[i] - mu) / L[i, i], (hi[i] - mu) / L[i, i])
    return L, perm


@dataclass(frozen=True)
class MvnResult:
    probability: float
    error: float
    n_points: int
    n_per_shift: int = 0
    n_shifts: int = 0


class MvnIntegrator:
    """Rectangle probabilities ``P(lower <= Z <= upper)`` for ``Z ~ N(0, R)``.

    A pilot integration at the Bonferroni point fixes the lattice size. Every
    later call starts from ``n_shifts`` random shifts of that lattice and
    adds shifts from the same seeded stream until the error estimate meets
    ``abs_tol``. Results are memoized per rectangle, so the quantile search
    and the per-member p-values share work.
    """

    def __init__(self, R, abs_tol=1e-4, seed=42, n_shifts=12,
                 start_points=None, max_points=2 ** 20, max_shifts=128,
                 pilot_level=0.95, pilot_two_sided=False):
        if abs_tol <= 0:
            raise ValueError("abs_tol must be positive")
        self.R = repair_correlation(R)
        self.dim = self.R.shape[0]
        self.abs_tol = float(abs_tol)
        self.seed = int(seed)
        self.n_shifts = int(n_shifts)
        if start_points is None:
            # 8192 points per shift suit the default 1e-4; the variance of the
            # estimate scales with 1/points, so coarser tolerances start smaller
            start_points = 8192 * self.n_shifts * min(1.0, (1e-4 / self.abs_tol) ** 2)
        self.start_points = max(int(start_points), 256 * self.n_shifts)
        self.max_points = int(max_points)
        self.max_shifts = max(int(max_shifts), self.n_shifts)
        self._n_rand = max(self.dim - 1, 1)
        self._rng = np.random.default_rng(self.seed)
        self._shifts = self._rng.random((self.n_shifts, self._n_rand))
        self._cache = {}
        self._memo = {}
        self._equi = {False: {}, True: {}}
        self._n = _lattice_size(max(3, self.start_points // self.n_shifts))
        if self.dim > 1:
            b = _bonferroni(pilot_level, self.dim, pilot_two_sided)
            self._n = self.equicoordinate(b, pilot_two_sided, _pilot=True).n_per_shift

    @staticmethod
    def _key(lower, upper):
        # statistics equal to 12 decimals share one integration
        return np.round(lower, 12).tobytes() + np.round(upper, 12).tobytes()

    def _shift_block(self, first, count):
        while self._shifts.shape[0] < first + count:
            more = self._rng.random((self._shifts.shape[0], self._n_rand))
            self._shifts = np.vstack([self._shifts, more])
        return self._shifts[first:first + count]

    def _points(self, n_per_shift, first, count):
        """Shifted, periodized points of shape ``(dim-1, count * n)``.

        The first ``n_shifts`` shifts are cached per lattice size.
        """
        cacheable = first == 0 and count == self.n_shifts
        if cacheable and n_per_shift in self._cache:
            return self._cache[n_per_shift]
        z = np.rint(cbc_lattice(self._n_rand, n_per_shift) * n_per_shift).astype(np.int64)
        base = np.outer(z, np.arange(n_per_shift, dtype=np.int64)) % n_per_shift
        base = base * (1.0 / n_per_shift)
        shifts = self._shift_block(first, count)
        pts = base[:, None, :] + shifts.T[:, :, None]
        pts -= pts >= 1.0
        # tent transform |2x - 1| periodizes the integrand
        pts *= 2.0
        pts -= 1.0
        np.abs(pts, out=pts)
        pts = pts.reshape(self._n_rand, -1)
        if cacheable:
            self._cache[n_per_shift] = pts
        return pts

    def _integrand(self, L, lower, upper, w):
        """SOV integrand values; ``w`` has one row per random coordinate."""
        npts = w.shape[1]
        f = np.ones(npts)
        y = np.empty((self.dim, npts))
        s = np.zeros(npts)
        tmp = np.empty(npts)
        for i in range(self.dim):
            lii = L[i, i]
            if lii == 0:
                # collinear with earlier variables: the constraint is an indicator
                np.dot(L[i, :i], y[:i], out=s)
                slack = 1e-9
                f *= (s >= lower[i] - slack) & (s <= upper[i] + slack)
                y[i] = 0.0
                continue
            if i == 0:
                # unconditioned: the limits are scalars
                d = float(ndtr(lower[0] / lii))
                width = float(ndtr(upper[0] / lii)) - d
                f *= width
            else:
                np.dot(L[i, :i], y[:i], out=s)
                if np.isfinite(lower[i]):
                    np.subtract(lower[i], s, out=tmp)
                    tmp /= lii
                    d = ndtr(tmp)
                else:
                    d = 0.0
                if np.isfinite(upper[i]):
                    np.subtract(upper[i], s, out=tmp)
                    tmp /= lii
                    width = ndtr(tmp, out=tmp)
                    width -= d
                else:
                    width = 1.0 - d
                f *= width
            if i < self.dim - 1:
                u = np.multiply(w[i], width, out=y[i])
                if not np.isscalar(d) or d != 0.0:
                    u += d
                np.clip(u, 1e-300, 1.0 - 1e-16, out=u)
                ndtri(u, out=y[i])
        return f

    def rectangle(self, lower, upper, min_shifts=None, _pilot=False) -> MvnResult:
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.dim,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.dim,))
        if np.any(lower > upper):
            return MvnResult(0.0, 0.0, 0)
        if self.dim == 1:
            return MvnResult(float(ndtr(upper[0]) - ndtr(lower[0])), 0.0, 0)
        key = self._key(lower, upper)
        if key not in self._memo:
            self._memo[key] = self._run(lower, upper, _pilot, min_shifts or self.n_shifts)
        return self._memo[key]

    def _run(self, lower, upper, grow_points, n_shifts):
        """Integrate over the rectangle to the absolute tolerance.

        The pilot (``grow_points``) doubles the lattice size while the total
        stays within ``max_points``. After that, and in every other call, the
        size is kept and shifts are added up to ``max_shifts``: shift means of
        one lattice are i.i.d., so earlier work is never discarded.
        """
        L, perm = pivoted_cholesky(self.R, lower, upper)
        lower, upper = lower[perm], upper[perm]
        n = self._n

        def shift_means(first, count):
            vals = self._integrand(L, lower, upper, self._points(n, first, count))
            return vals.reshape(count, n).mean(axis=1)

        means = shift_means(0, self.n_shifts)
        if n_shifts > self.n_shifts:
            means = np.concatenate([means, shift_means(self.n_shifts, n_shifts - self.n_shifts)])
        while True:
            k = means.size
            err = float(_Z99 * means.std(ddof=1) / np.sqrt(k))
            if err <= self.abs_tol:
                break
            if grow_points and 2 * n * k <= self.max_points:
                n = _lattice_size(2 * n)
                means = shift_means(0, self.n_shifts)
                continue
            # shifts needed if the spread stays put, with 10% headroom
            need = int(np.ceil(k * (err / self.abs_tol) ** 2 * 1.1))
            extra = min(max(need - k, 4), self.max_shifts - k)
            if extra <= 0:
                self._fail(err, n * k)
            means = np.concatenate([means, shift_means(k, extra)])
        est = min(max(float(means.mean()), 0.0), 1.0)
        return MvnResult(est, err, n * means.size, n, means.size)

    def _fail(self, err, total):
        raise NumericalError(
            f"MVN integration did not reach tolerance {self.abs_tol:g} "
            f"(achieved {err:.3g} with {total} points)",
            error_estimate=err,
        )

    def equicoordinate(self, b, two_sided=False, min_shifts=None, _pilot=False) -> MvnResult:
        """``P(Z_i <= b for all i)``, or ``P(|Z_i| <= b)`` when two-sided."""
        b = float(b)
        lo = -b if two_sided else -np.inf
        res = self.rectangle(np.full(self.dim, lo), np.full(self.dim, b),
                             min_shifts=min_shifts, _pilot=_pilot)
        self._equi[bool(two_sided)][b] = res
        return res

    def quantile(self, level, two_sided=False, tol=1e-6, prob_tol=1e-6):
        """Equicoordinate quantile ``q`` with ``P(max Z <= q) = level``.

        The root is bracketed by already computed evaluations where possible,
        else by the uncorrected and the Bonferroni quantile. Regula falsi
        (Illinois variant) then runs on the probit of the probability, which
        is close to linear in ``q``. New evaluations use one common shift
        count, so the estimated probability is a continuous function of
        ``q`` and the returned point reproduces ``level`` to ``prob_tol``.
        """
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        two_sided = bool(two_sided)
        if self.dim == 1:
            return float(ndtri(0.5 + level / 2) if two_sided else ndtri(level))
        target = ndtri(level)
        seen = self._equi[two_sided]
        shifts = self.n_shifts

        def evaluate(b):
            nonlocal shifts
            res = self.equicoordinate(b, two_sided, min_shifts=shifts)
            shifts = max(shifts, res.n_shifts)
            return res.probability

        def probit(p):
            return float(ndtri(min(max(p, 1e-300), 1.0 - 1e-16)) - target)

        for b, r in seen.items():
            if abs(r.probability - level) <= prob_tol:
                return b
        above = [(b, r.probability) for b, r in seen.items() if r.probability > level]
        if above:
            hi, p_hi = min(above)
        else:
            hi = _bonferroni(level, self.dim, two_sided) + 0.05
            p_hi = evaluate(hi)
            while p_hi < level:
                if hi > 10:
                    raise NumericalError("equicoordinate quantile exceeds 10")
                hi += 1.0
                p_hi = evaluate(hi)
        below = [(b, r.probability) for b, r in seen.items()
                 if r.probability < level and b < hi]
        if below:
            lo, p_lo = max(below)
        else:
            lo = (ndtri(0.5 + level / 2) if two_sided else ndtri(level)) - 0.05
            p_lo = evaluate(lo)
            while p_lo > level:
                lo -= 1.0
                p_lo = evaluate(lo)
        shifts = max(shifts, seen[lo].n_shifts, seen[hi].n_shifts)
        f_lo, f_hi = probit(p_lo), probit(p_hi)
        side = 0
        while hi - lo > tol:
            b = hi - f_hi * (hi - lo) / (f_hi - f_lo)
            if not lo < b < hi:
                b = 0.5 * (lo + hi)
            p = evaluate(b)
            if abs(p - level) <= prob_tol:
                return float(b)
            f = probit(p)
            if f < 0:
                lo, f_lo = b, f
                if side == -1:
                    f_hi *= 0.5
                side = -1
            else:
                hi, f_hi = b, f
                if side == 1:
                    f_lo *= 0.5
                side = 1
        return float(lo if abs(f_lo) < abs(f_hi) else hi)


def _bonferroni(level, dim, two_sided):
    alpha = 1.0 - level
    return float(ndtri(1 - alpha / (2 * dim)) if two_sided else ndtri(1 - alpha / dim))


def mvn_equicoordinate(b, R, abs_tol=1e-4, seed=42, two_sided=False):
    """Equicoordinate normal probability ``P(Z_1 <= b, ..., Z_M <= b)``."""
    return MvnIntegrator(R, abs_tol=abs_tol, seed=seed).equicoordinate(
        b, two_sided=two_sided).probability

