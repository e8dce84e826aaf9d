"""Log-space special functions: rising factorials, generalized factorial
coefficients, positive stable densities, incomplete gamma."""

import math

import mpmath
import numpy as np
from scipy import integrate, optimize, special

BRUTEFORCE_MAX_N = 15


def log_rising_factorial(a, n):
    """Log of the rising factorial (a)_n = Gamma(a+n)/Gamma(a).

    Args:
        a: base, must be positive.
        n: number of factors, a nonnegative integer.

    Returns:
        log[(a)_n]; exactly 0.0 when n == 0.
    """
    if a <= 0:
        raise ValueError(f"rising factorial base must be positive, got {a}")
    if n != int(n) or n < 0:
        raise ValueError(f"rising factorial order must be a nonnegative integer, got {n}")
    if n == 0:
        return 0.0
    return float(special.gammaln(a + n) - special.gammaln(a))


class GfcTable:
    """Triangular array of log generalized factorial coefficients.

    Holds log C(n, k; alpha) for 1 <= k <= n <= n_max. Every coefficient is
    strictly positive for alpha in (0, 1), so all stored logs are finite.
    Instances are immutable after construction and safe to share.
    """

    def __init__(self, n_max, alpha, log_entries):
        self.n_max = n_max
        self.alpha = alpha
        log_entries.flags.writeable = False
        self._log = log_entries

    def log_gfc(self, n, k):
        """log C(n, k; alpha); -inf where the coefficient is zero (k=0 with
        n >= 1, or k > n)."""
        if not 0 <= n <= self.n_max:
            raise ValueError(f"n must lie in [0, {self.n_max}], got {n}")
        if k < 0:
            raise ValueError(f"k must be nonnegative, got {k}")
        if k > n:
            return -np.inf
        return float(self._log[n, k])

    def log_row(self, n):
        """Row of log C(n, k; alpha) for k = 1..n as an array."""
        if not 1 <= n <= self.n_max:
            raise ValueError(f"n must lie in [1, {self.n_max}], got {n}")
        return self._log[n, 1:n + 1]


def build_gfc_table(n_max, alpha):
    """Build the triangular log-GFC table by the forward recursion.

    Seeds the diagonal with C(n, n; alpha) = alpha^n, then sweeps
    C(j+1, k) = (j - alpha k) C(j, k) + alpha C(j, k-1) in log space;
    both summands are positive for alpha in (0, 1).

    Args:
        n_max: largest n to tabulate, a positive integer.
        alpha: stability index in the open interval (0, 1).

    Returns:
        GfcTable with entries for 1 <= k <= n <= n_max.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n_max < 1 or n_max != int(n_max):
        raise ValueError(f"n_max must be a positive integer, got {n_max}")
    n_max = int(n_max)
    log_alpha = math.log(alpha)
    table = np.full((n_max + 1, n_max + 1), -np.inf)
    table[0, 0] = 0.0
    for n in range(1, n_max + 1):
        table[n, n] = n * log_alpha
    for n in range(1, n_max):
        k = np.arange(1, n + 1)
        # n - alpha*k > 0 for every k <= n since alpha < 1
        keep = np.log(n - alpha * k) + table[n, 1:n + 1]
        shift = log_alpha + table[n, 0:n]
        table[n + 1, 1:n + 1] = np.logaddexp(keep, shift)
    return GfcTable(n_max, alpha, table)


def gfc_bruteforce(n, k, alpha):
    """Generalized factorial coefficient by the explicit alternating sum.

    C(n, k; alpha) = (1/k!) sum_{i=0}^k (-1)^i binom(k, i) (-i alpha)_n,
    evaluated in extended precision: the alternating terms exceed the result
    by many orders (the corner C(n, n; alpha) = alpha^n is built from terms
    of size n!), so a double-precision sum keeps only the leading digits.
    Test oracle only; refused past n = 15.
    """
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"bruteforce sum is unreliable past n={BRUTEFORCE_MAX_N}, got {n}")
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    if k == 0:
        return 1.0 if n == 0 else 0.0
    with mpmath.workdps(60):
        a = mpmath.mpf(alpha)
        total = mpmath.mpf(0)
        for i in range(k + 1):
            total += (-1) ** i * mpmath.binomial(k, i) * mpmath.rf(-i * a, n)
        return float(total / mpmath.factorial(k))


def _zolotarev_a(u, alpha):
    # A(u) = [sin(alpha u)/sin u]^{alpha/(1-alpha)} sin((1-alpha)u)/sin u on (0, pi)
    sin_u = np.sin(u)
    ratio = np.sin(alpha * u) / sin_u
    return ratio ** (alpha / (1.0 - alpha)) * np.sin((1.0 - alpha) * u) / sin_u


def positive_stable_density(alpha, t):
    """Density f_alpha(t) of the positive stable law with Laplace transform
    exp(-lambda^alpha).

    Uses the closed form at alpha = 1/2 and the Zolotarev integral
    representation with adaptive quadrature otherwise. The integration
    variable is y = -log(pi - u), which keeps the quadrature accurate when
    the integrand concentrates near u = pi (large t), and the integral is
    split at the interior maximum where A(u) = alpha * t^{alpha/(1-alpha)}.

    Args:
        alpha: stability index in (0, 1).
        t: evaluation point, must be positive.

    Returns:
        f_alpha(t).
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if t <= 0:
        raise ValueError(f"density argument must be positive, got {t}")
    if alpha == 0.5:
        return t ** -1.5 * math.exp(-1.0 / (4.0 * t)) / (2.0 * math.sqrt(math.pi))
    scale = t ** (-alpha / (1.0 - alpha))
    log_t_term = -math.log(t) / (1.0 - alpha)
    lo = -math.log(math.pi)

    def integrand(y):
        a_u = _zolotarev_a(math.pi - np.exp(-y), alpha)
        # combine prefactor and exponent so tiny t cannot produce inf * 0
        return np.exp(-scale * a_u + np.log(a_u) + log_t_term - y)

    # the exponent -scale*A + log A peaks where A = alpha/scale, provided
    # that exceeds A(0+) = alpha^{alpha/(1-alpha)} (1-alpha)
    a_origin = alpha ** (alpha / (1.0 - alpha)) * (1.0 - alpha)
    target = alpha / scale
    if target > a_origin * (1.0 + 1e-9):
        # A(pi - e^{-y}) grows like K e^{y/(1-alpha)} near u = pi
        log_k = (alpha / (1.0 - alpha)) * math.log(math.sin(alpha * math.pi)) + math.log(
            math.sin((1.0 - alpha) * math.pi)
        )
        hi = max((1.0 - alpha) * (math.log(target) - log_k) + 10.0, lo + 1.0)
        y_peak = optimize.brentq(
            lambda y: math.log(_zolotarev_a(math.pi - math.exp(-y), alpha)) - math.log(target),
            lo + 1e-12,
            hi,
        )
        value = integrate.quad(integrand, lo, y_peak, limit=200)[0]
        value += integrate.quad(integrand, y_peak, np.inf, limit=200)[0]
    else:
        value = integrate.quad(integrand, lo, np.inf, limit=200)[0]
    return alpha / (1.0 - alpha) / math.pi * value


def log_upper_incomplete_gamma(x, a):
    """log of the upper incomplete gamma integral int_x^inf s^{a-1} e^{-s} ds.

    Args:
        x: lower integration limit, must be nonnegative.
        a: shape, must be positive.
    """
    if a <= 0:
        raise ValueError(f"shape must be positive, got {a}")
    if x < 0:
        raise ValueError(f"lower limit must be nonnegative, got {x}")
    if x == 0:
        return float(special.gammaln(a))
    return float(special.gammaln(a) + np.log(special.gammaincc(a, x)))
