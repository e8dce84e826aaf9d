"""Gibbs-type weight tables, black-box primitives, block-count
distributions, and hyperparameter calibration.

Every subclass is driven by the triangular weights V_{n,k} (V_{1,1} = 1,
forward recursion V_{n,k} = (n - alpha k) V_{n+1,k} + V_{n+1,k+1}) and the
primitives g_n(z1, z2) = sum_k V_{n+z1,k+z2} alpha^{-k} C(n,k;alpha).
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np
from scipy import optimize, special

from .special_functions import build_gfc_table, log_rising_factorial
from .stable_sampling import TiltedStableSpec, sample_tilted_stable

VARIANTS = ("DP", "PY", "NGG", "NIG")
SMALLN_MAX = 12
MIN_MC_SAMPLES = 10_000
_MC_CHUNK = 250_000
CACHE_DIR_ENV = "GIBBSIBP_CACHE_DIR"
TABLE_FORMAT_VERSION = 1


class McDegeneracyError(RuntimeError):
    """Monte Carlo weight estimation produced unusable (underflowed) values."""


class NormalizationError(RuntimeError):
    """A probability vector failed its normalization tolerance."""


@dataclass(frozen=True)
class McConfig:
    """Sample count and seed for Monte Carlo weight estimation."""

    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be positive, got {self.samples}")


@dataclass(frozen=True)
class GibbsModel:
    """One subclass of the Gibbs-type family with its parameters.

    Variants: DP(theta > 0); PY(alpha in (0,1), theta > -alpha);
    NGG(alpha in (0,1), beta > 0); NIG(beta > 0), which behaves identically
    to NGG(1/2, beta) in every operation. mc_config only matters for the
    Monte Carlo variants.
    """

    variant: str
    theta: float = None
    alpha: float = None
    beta: float = None
    mc_config: McConfig = field(default_factory=McConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "DP":
            if self.theta is None or self.theta <= 0:
                raise ValueError(f"DP requires theta > 0, got {self.theta}")
        elif self.variant == "PY":
            if self.alpha is None or not 0 < self.alpha < 1:
                raise ValueError(f"PY requires alpha in (0, 1), got {self.alpha}")
            if self.theta is None or self.theta <= -self.alpha:
                raise ValueError(f"PY requires theta > -alpha, got theta={self.theta}")
        elif self.variant == "NGG":
            if self.alpha is None or not 0 < self.alpha < 1:
                raise ValueError(f"NGG requires alpha in (0, 1), got {self.alpha}")
            if self.beta is None or self.beta <= 0:
                raise ValueError(f"NGG requires beta > 0, got {self.beta}")
        elif self.variant == "NIG":
            if self.beta is None or self.beta <= 0:
                raise ValueError(f"NIG requires beta > 0, got {self.beta}")
            if self.alpha not in (None, 0.5):
                raise ValueError("NIG fixes alpha = 1/2")

    @classmethod
    def dp(cls, theta):
        return cls(variant="DP", theta=theta)

    @classmethod
    def py(cls, alpha, theta):
        return cls(variant="PY", alpha=alpha, theta=theta)

    @classmethod
    def ngg(cls, alpha, beta, mc_config=McConfig()):
        return cls(variant="NGG", alpha=alpha, beta=beta, mc_config=mc_config)

    @classmethod
    def nig(cls, beta, mc_config=McConfig()):
        return cls(variant="NIG", beta=beta, mc_config=mc_config)

    @property
    def stable_index(self):
        """The discount alpha driving power-law behavior (0 for DP, 1/2 for NIG)."""
        if self.variant == "DP":
            return 0.0
        if self.variant == "NIG":
            return 0.5
        return self.alpha

    @property
    def is_closed_form(self):
        return self.variant in ("DP", "PY")

    @property
    def uses_monte_carlo(self):
        return self.variant in ("NGG", "NIG")

    def key(self):
        """Hashable identity used for table caching and serialization."""
        if self.variant == "DP":
            return ("DP", float(self.theta))
        if self.variant == "PY":
            return ("PY", float(self.alpha), float(self.theta))
        return (
            self.variant,
            self.stable_index,
            float(self.beta),
            int(self.mc_config.samples),
            int(self.mc_config.seed),
        )

    def describe(self):
        if self.variant == "DP":
            return f"DP(theta={self.theta:g})"
        if self.variant == "PY":
            return f"PY(alpha={self.alpha:g}, theta={self.theta:g})"
        if self.variant == "NGG":
            return f"NGG(alpha={self.alpha:g}, beta={self.beta:g})"
        return f"NIG(beta={self.beta:g})"

    def to_payload(self):
        payload = {"variant": self.variant}
        if self.theta is not None:
            payload["theta"] = float(self.theta)
        if self.variant in ("PY", "NGG"):
            payload["alpha"] = float(self.alpha)
        if self.beta is not None:
            payload["beta"] = float(self.beta)
        if self.uses_monte_carlo:
            payload["mc_samples"] = int(self.mc_config.samples)
            payload["mc_seed"] = int(self.mc_config.seed)
        return payload

    @classmethod
    def from_payload(cls, payload):
        mc = McConfig(
            samples=int(payload.get("mc_samples", McConfig().samples)),
            seed=int(payload.get("mc_seed", McConfig().seed)),
        )
        return cls(
            variant=payload["variant"],
            theta=payload.get("theta"),
            alpha=payload.get("alpha"),
            beta=payload.get("beta"),
            mc_config=mc,
        )


@dataclass(frozen=True)
class Provenance:
    """How a weight table was produced."""

    kind: str  # "closed-form" | "small-n-series" | "monte-carlo"
    samples: int = None
    seed: int = None

    def to_payload(self):
        payload = {"kind": self.kind}
        if self.kind == "monte-carlo":
            payload["samples"] = int(self.samples)
            payload["seed"] = int(self.seed)
        return payload


class WeightTable:
    """Triangular array of log Gibbs weights V_{n,k}, 1 <= k <= n <= n_max.

    Monte Carlo tables carry per-entry relative standard errors; closed-form
    and series tables have rel_se None. Immutable after construction.
    """

    def __init__(self, n_max, alpha, log_entries, provenance, rel_se=None):
        self.n_max = int(n_max)
        self.alpha = float(alpha)
        log_entries.flags.writeable = False
        self._log = log_entries
        self.provenance = provenance
        if rel_se is not None:
            rel_se.flags.writeable = False
        self._rel_se = rel_se

    def log_weight(self, n, k):
        if not 1 <= n <= self.n_max:
            raise ValueError(f"n must lie in [1, {self.n_max}], got {n}")
        if not 1 <= k <= n:
            raise ValueError(f"k must lie in [1, {n}], got {k}")
        return float(self._log[n, k])

    def weight(self, n, k):
        return math.exp(self.log_weight(n, k))

    def log_row(self, n):
        """log V_{n,k} for k = 1..n."""
        if not 1 <= n <= self.n_max:
            raise ValueError(f"n must lie in [1, {self.n_max}], got {n}")
        return self._log[n, 1:n + 1]

    def rel_se_row(self, n):
        """Relative standard errors for row n; None for exact tables."""
        if self._rel_se is None:
            return None
        return self._rel_se[n, 1:n + 1]


def _closed_form_log_weights(variant, alpha, theta, n_max):
    # PY: V_{n,k} = prod_{l=1}^{k-1}(theta + l alpha) / (theta+1)_{n-1};
    # DP is the alpha -> 0 limit with numerator theta^{k-1}
    table = np.full((n_max + 1, n_max + 1), -np.inf)
    if variant == "DP":
        log_num = np.arange(n_max) * math.log(theta)
    else:
        steps = np.log(theta + alpha * np.arange(1, n_max))
        log_num = np.concatenate(([0.0], np.cumsum(steps)))
    for n in range(1, n_max + 1):
        k = np.arange(1, n + 1)
        table[n, 1:n + 1] = log_num[k - 1] - log_rising_factorial(theta + 1.0, n - 1)
    return table


def ngg_last_row_mc(alpha, beta, n, samples, rng):
    """Monte Carlo estimates of the log weights in row n for the NGG subclass.

    Uses V_{n,k} = [alpha^{k-1} Gamma(k) / Gamma(n)] E[exp(beta^alpha - beta X/Y)]
    with X polynomially tilted stable (tilt k alpha) and Y ~ Beta(k alpha,
    n - k alpha), for every 1 <= k <= n. Accumulation is streamed in chunks
    with log-sum-exp so sample counts in the millions stay in bounded memory.

    Args:
        alpha: stability index in (0, 1).
        beta: exponential tilt parameter, positive.
        n: row index (>= 1).
        samples: Monte Carlo draws per entry, at least 10^4.
        rng: numpy Generator.

    Returns:
        (log_row, rel_se): arrays of length n holding log V-hat_{n,k} and the
        relative standard error of each estimate.

    Raises:
        McDegeneracyError: if an estimate underflowed to zero.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if samples < MIN_MC_SAMPLES:
        raise ValueError(f"need at least {MIN_MC_SAMPLES} samples, got {samples}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    samples = int(samples)
    tilt_const = beta ** alpha
    log_row = np.empty(n)
    rel_se = np.empty(n)
    log_samples = math.log(samples)
    for k in range(1, n + 1):
        spec = TiltedStableSpec(alpha=alpha, tilt=k * alpha)
        lse1_parts, lse2_parts = [], []
        remaining = samples
        while remaining > 0:
            m = min(remaining, _MC_CHUNK)
            x = sample_tilted_stable(spec, rng, size=m)
            y = rng.beta(k * alpha, n - k * alpha, size=m)
            log_terms = tilt_const - beta * x / np.maximum(y, 1e-300)
            lse1_parts.append(special.logsumexp(log_terms))
            lse2_parts.append(special.logsumexp(2.0 * log_terms))
            remaining -= m
        log_m1 = special.logsumexp(lse1_parts) - log_samples
        log_m2 = special.logsumexp(lse2_parts) - log_samples
        if not np.isfinite(log_m1):
            raise McDegeneracyError(
                f"all {samples} weight terms underflowed at (n={n}, k={k}, "
                f"alpha={alpha}, beta={beta})"
            )
        # var = m2 - m1^2 in log space; Jensen guarantees log_m2 >= 2 log_m1
        gap = log_m2 - 2.0 * log_m1
        if gap <= 1e-15:
            rel = 0.0
        else:
            log_var = log_m2 + math.log1p(-math.exp(-gap))
            rel = math.exp(0.5 * log_var - log_m1 - 0.5 * log_samples)
        log_row[k - 1] = (k - 1) * math.log(alpha) + special.gammaln(k) - special.gammaln(n) + log_m1
        rel_se[k - 1] = rel
    return log_row, rel_se


def _backward_sweep(n_max, alpha, last_log_row, last_rel_se):
    # V_{n,k} = (n - alpha k) V_{n+1,k} + V_{n+1,k+1}: positive summands, so
    # the relative error of each filled entry is a convex combination of the
    # two source errors and never grows going backward
    table = np.full((n_max + 1, n_max + 1), -np.inf)
    rel = np.zeros((n_max + 1, n_max + 1))
    table[n_max, 1:n_max + 1] = last_log_row
    rel[n_max, 1:n_max + 1] = last_rel_se
    for n in range(n_max - 1, 0, -1):
        k = np.arange(1, n + 1)
        w1 = np.log(n - alpha * k) + table[n + 1, 1:n + 1]
        w2 = table[n + 1, 2:n + 2]
        combined = np.logaddexp(w1, w2)
        table[n, 1:n + 1] = combined
        share1 = np.exp(w1 - combined)
        rel[n, 1:n + 1] = share1 * rel[n + 1, 1:n + 1] + (1.0 - share1) * rel[n + 1, 2:n + 2]
    return table, rel


def build_weight_table(model, n_max):
    """Construct the weight triangle for a model up to depth n_max.

    DP and PY rows come from the closed-form ratio of rising factorials. The
    Monte Carlo variants estimate the final row with ngg_last_row_mc, fill
    the rest by the (exact) backward recursion, and then rescale the whole
    triangle by the estimate of V_{1,1} so the required normalization
    V_{1,1} = 1 holds exactly; the rescaling preserves the recursion and its
    uncertainty is folded into the declared relative errors.

    Args:
        model: GibbsModel.
        n_max: table depth, a positive integer.

    Returns:
        WeightTable with provenance recorded.
    """
    if n_max < 1 or n_max != int(n_max):
        raise ValueError(f"n_max must be a positive integer, got {n_max}")
    n_max = int(n_max)
    if model.is_closed_form:
        log_entries = _closed_form_log_weights(
            model.variant, model.stable_index, model.theta, n_max
        )
        return WeightTable(
            n_max, model.stable_index, log_entries, Provenance("closed-form")
        )
    alpha, beta = model.stable_index, model.beta
    mc = model.mc_config
    rng = np.random.default_rng(mc.seed)
    last_log, last_rel = ngg_last_row_mc(alpha, beta, n_max, mc.samples, rng)
    table, rel = _backward_sweep(n_max, alpha, last_log, last_rel)
    norm, norm_rel = table[1, 1], rel[1, 1]
    tri = np.tril(np.ones_like(table, dtype=bool))
    table[tri] -= norm
    rel[tri] += norm_rel
    rel[1, 1] = 0.0
    return WeightTable(
        n_max, alpha, table, Provenance("monte-carlo", mc.samples, mc.seed), rel_se=rel
    )


def ngg_weights_smalln(alpha, beta, n_max):
    """NGG weight triangle from the explicit incomplete-gamma series.

    V_{n,k} = e^{beta^alpha} alpha^{k-1} / Gamma(n) *
    sum_{i=0}^{n-1} binom(n-1, i) (-1)^i beta^i Gamma(k - i/alpha; beta^alpha),
    where Gamma(.;.) is the upper incomplete gamma integral (shape first,
    lower limit second) continued to negative shapes. The alternating sum is
    evaluated in extended precision; this is a test oracle, refused past
    n_max = 12.
    """
    if n_max > SMALLN_MAX:
        raise ValueError(f"series is a small-n oracle, refusing n_max > {SMALLN_MAX}")
    if n_max < 1:
        raise ValueError(f"n_max must be positive, got {n_max}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    table = np.full((n_max + 1, n_max + 1), -np.inf)
    with mpmath.workdps(60):
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        lower = b ** a
        for n in range(1, n_max + 1):
            for k in range(1, n + 1):
                acc = mpmath.mpf(0)
                for i in range(n):
                    term = (
                        mpmath.binomial(n - 1, i)
                        * (-1) ** i
                        * b ** i
                        * mpmath.gammainc(k - i / a, lower, mpmath.inf)
                    )
                    acc += term
                value = mpmath.e ** lower * a ** (k - 1) / mpmath.gamma(n) * acc
                if value <= 0:
                    raise McDegeneracyError(
                        f"series produced a nonpositive weight at (n={n}, k={k})"
                    )
                table[n, k] = float(mpmath.log(value))
    return WeightTable(n_max, alpha, table, Provenance("small-n-series"))


def log_primitive(table, gfc, n, z1, z2):
    """log g_n(z1, z2) from tabulated weights and GFCs.

    g_n(z1, z2) = sum_{k=1..n} V_{n+z1, k+z2} alpha^{-k} C(n, k; alpha),
    evaluated by log-sum-exp (every summand is positive for alpha in (0,1));
    the log scale matters because g_n(s, 1) decays roughly like n^{alpha-s}.

    Args:
        table: WeightTable covering depth n + z1.
        gfc: GfcTable covering depth n, with matching alpha.
        n: base count, >= 1.
        z1, z2: nonnegative integer shifts.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if z1 < 0 or z2 < 0:
        raise ValueError("shifts must be nonnegative")
    if table.alpha <= 0.0:
        raise ValueError("primitives divide by alpha^k; use the dedicated closed forms for alpha = 0")
    if n + z1 > table.n_max:
        raise ValueError(f"weight table depth {table.n_max} cannot serve n+z1 = {n + z1}")
    if n > gfc.n_max:
        raise ValueError(f"GFC table depth {gfc.n_max} cannot serve n = {n}")
    if abs(gfc.alpha - table.alpha) > 1e-12:
        raise ValueError("weight and GFC tables disagree on alpha")
    k_count = min(n, n + z1 - z2)  # entries with k + z2 > n + z1 vanish
    if k_count < 1:
        return -math.inf
    k = np.arange(1, k_count + 1)
    log_v = table._log[n + z1, z2 + 1:z2 + k_count + 1]
    terms = log_v - k * math.log(table.alpha) + gfc.log_row(n)[:k_count]
    return float(special.logsumexp(terms))


def primitive(table, gfc, n, z1, z2):
    """The black-box primitive g_n(z1, z2); see log_primitive."""
    return math.exp(log_primitive(table, gfc, n, z1, z2))


def py_primitive_closed(alpha, theta, n, which):
    """Closed-form primitives for the PY family (alpha = 0 gives DP).

    g_n(1,0) = 1/(theta + n); g_n(1,1) = Gamma(theta+1) Gamma(theta+alpha+n)
    / [Gamma(theta+n+1) Gamma(theta+alpha)].

    Args:
        alpha: discount in [0, 1).
        theta: concentration, > -alpha (and nonzero domain for the gammas).
        n: count; >= 1 for (1,0), >= 0 for (1,1).
        which: the shift pair, (1, 0) or (1, 1).
    """
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if theta <= -alpha:
        raise ValueError(f"theta must exceed -alpha, got {theta}")
    which = tuple(which)
    if which == (1, 0):
        if n < 1:
            raise ValueError("g_n(1,0) requires n >= 1")
        return 1.0 / (theta + n)
    if which == (1, 1):
        if n < 0:
            raise ValueError("g_n(1,1) requires n >= 0")
        if alpha == 0.0 and theta == 0.0:
            raise ValueError("alpha = theta = 0 is outside the domain")
        return float(
            np.exp(
                special.gammaln(theta + 1.0)
                + special.gammaln(theta + alpha + n)
                - special.gammaln(theta + n + 1.0)
                - special.gammaln(theta + alpha)
            )
        )
    raise ValueError(f"which must be (1,0) or (1,1), got {which}")


def _py_log_gs1_closed(alpha, theta, r, s):
    # g_r(s, 1) = Gamma(theta+1) Gamma(theta+alpha+r) /
    #             [Gamma(theta+alpha) Gamma(theta+r+s)], valid for r >= 0
    return float(
        special.gammaln(theta + 1.0)
        + special.gammaln(theta + alpha + r)
        - special.gammaln(theta + alpha)
        - special.gammaln(theta + r + s)
    )


def _py_gs1_closed(alpha, theta, r, s):
    return math.exp(_py_log_gs1_closed(alpha, theta, r, s))


class PrimitiveCache:
    """Primitive evaluations a dataset of size n needs, precomputed.

    Fields: g10[j-1] = g_{j-1}(1,0) for j = 2..n (entry 0 is nan: an empty
    buffet has no occupied dishes so g_0(1,0) is never consumed);
    g11[j-1] = g_{j-1}(1,1) for j = 1..n with g_0(1,1) = 1;
    log_gs1[s-1] = log g_{n-s}(s,1) for s = 1..n, where the boundary case
    is g_0(n,1) = V_{n,1}.  Stored in log space: the values decay like
    n^{alpha-s} and underflow long before their logs do.
    """

    def __init__(self, model, n, g10, g11, log_gs1):
        self.model = model
        self.n = int(n)
        g10 = np.asarray(g10, dtype=float)
        g11 = np.asarray(g11, dtype=float)
        log_gs1 = np.asarray(log_gs1, dtype=float)
        g10.flags.writeable = False
        g11.flags.writeable = False
        log_gs1.flags.writeable = False
        self.g10 = g10
        self.g11 = g11
        self.log_gs1 = log_gs1

    @property
    def gs1(self):
        return np.exp(self.log_gs1)

    def g10_for(self, j):
        """g_{j-1}(1,0) for 2 <= j <= n."""
        if not 2 <= j <= self.n:
            raise ValueError(f"j must lie in [2, {self.n}], got {j}")
        return float(self.g10[j - 1])

    def g11_for(self, j):
        """g_{j-1}(1,1) for 1 <= j <= n."""
        if not 1 <= j <= self.n:
            raise ValueError(f"j must lie in [1, {self.n}], got {j}")
        return float(self.g11[j - 1])

    def gs1_for(self, s):
        """g_{n-s}(s,1) for 1 <= s <= n."""
        return math.exp(self.log_gs1_for(s))

    def log_gs1_for(self, s):
        """log g_{n-s}(s,1) for 1 <= s <= n."""
        if not 1 <= s <= self.n:
            raise ValueError(f"s must lie in [1, {self.n}], got {s}")
        return float(self.log_gs1[s - 1])


def build_primitive_cache(model, n, table=None, gfc=None):
    """Precompute the primitives required for a dataset of size n.

    DP and PY use their closed forms (which keeps large n cheap); NGG/NIG
    evaluate the generic log-sum-exp primitive from their weight and GFC
    tables (built on demand when not supplied; the weight table must reach
    depth n, the GFC table depth n-1).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    alpha = model.stable_index
    if model.variant in ("DP", "PY"):
        theta = model.theta
        g10 = np.concatenate([[math.nan], 1.0 / (theta + np.arange(1, n))])
        g11 = np.array(
            [py_primitive_closed(alpha, theta, j - 1, (1, 1)) for j in range(1, n + 1)]
        )
        log_gs1 = np.array(
            [_py_log_gs1_closed(alpha, theta, n - s, s) for s in range(1, n + 1)]
        )
        return PrimitiveCache(model, n, g10, g11, log_gs1)
    if table is None:
        table = build_weight_table(model, n)
    if table.n_max < n:
        raise ValueError(f"weight table depth {table.n_max} cannot serve n = {n}")
    if gfc is None:
        gfc = build_gfc_table(max(n - 1, 1), alpha)
    g10 = np.array(
        [math.nan] + [primitive(table, gfc, j - 1, 1, 0) for j in range(2, n + 1)]
    )
    g11 = np.array(
        [1.0] + [primitive(table, gfc, j - 1, 1, 1) for j in range(2, n + 1)]
    )
    log_gs1 = np.array(
        [log_primitive(table, gfc, n - s, s, 1) for s in range(1, n)]
        + [table.log_weight(n, 1)]
    )
    return PrimitiveCache(model, n, g10, g11, log_gs1)


def persistence_probability(cache, n, s):
    """g(n, s) = (1 - alpha)_{s-1} g_{n-s}(s, 1): the probability that one
    fixed dish is taken by all of the first s of n customers and no other
    dish is ever taken.

    The diagonal case is g(n, n) = (1 - alpha)_{n-1} V_{n,1}.
    """
    if n != cache.n:
        raise ValueError(f"cache was built for n = {cache.n}, got n = {n}")
    if not 1 <= s <= n:
        raise ValueError(f"s must lie in [1, {n}], got {s}")
    alpha = cache.model.stable_index
    return math.exp(log_rising_factorial(1.0 - alpha, s - 1) + cache.log_gs1_for(s))


def _log_unsigned_stirling_first(n):
    # |s(n+1, k)| = n |s(n, k)| + |s(n, k-1)| in log space
    table = np.full((n + 1, n + 1), -np.inf)
    table[0, 0] = 0.0
    for m in range(n):
        k = np.arange(1, m + 2)
        grow = (math.log(m) if m > 0 else -np.inf) + table[m, 1:m + 2]
        shift = table[m, 0:m + 1]
        table[m + 1, 1:m + 2] = np.logaddexp(grow, shift)
    return table


def block_count_distribution(model, n, table=None, gfc=None):
    """Distribution of the number of blocks B_n over k = 1..n.

    Pr{B_n = k} = V_{n,k} alpha^{-k} C(n, k; alpha); for DP the alpha -> 0
    closed form Pr{B_n = k} = |s(n, k)| theta^k / (theta)_n is used instead.
    The returned vector is the raw evaluation; a NormalizationError signals
    that it missed summing to one beyond tolerance (1e-8 for exact tables,
    three propagated standard errors for Monte Carlo tables).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if model.variant == "DP":
        theta = model.theta
        stirling = _log_unsigned_stirling_first(n)
        k = np.arange(1, n + 1)
        log_p = stirling[n, 1:n + 1] + k * math.log(theta) - log_rising_factorial(theta, n)
        probs = np.exp(log_p)
        tol = 1e-8
    else:
        alpha = model.stable_index
        if table is None:
            table = build_weight_table(model, n)
        if gfc is None:
            gfc = build_gfc_table(n, alpha)
        k = np.arange(1, n + 1)
        log_p = table.log_row(n) + gfc.log_row(n) - k * math.log(alpha)
        probs = np.exp(log_p)
        rel = table.rel_se_row(n)
        if rel is None:
            tol = 1e-8
        else:
            tol = max(3.0 * float(np.dot(probs, rel)), 1e-8)
    defect = abs(float(probs.sum()) - 1.0)
    if defect > tol:
        raise NormalizationError(
            f"block-count distribution for {model.describe()} at n={n} sums to "
            f"1{defect:+.3e}, beyond tolerance {tol:.3e}"
        )
    return probs


def expected_blocks(model, n, table=None, gfc=None):
    """E[B_n] = sum_k k Pr{B_n = k}."""
    probs = block_count_distribution(model, n, table=table, gfc=gfc)
    return float(np.dot(np.arange(1, n + 1), probs))


class NggWeightSampler:
    """Frozen Monte Carlo draws for re-evaluating NGG weights as beta moves.

    The stable and beta-distributed draws behind the last-row estimator do
    not involve beta, so freezing the ratios R = X/Y once per block count
    makes every subsequent beta evaluation a cheap deterministic reduction
    (used by calibration and by hyperparameter moves during inference).
    """

    def __init__(self, alpha, n, samples, seed):
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        self.alpha = float(alpha)
        self.n = int(n)
        self.samples = int(samples)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self._ratios = np.empty((n, self.samples))
        for k in range(1, n + 1):
            spec = TiltedStableSpec(alpha=alpha, tilt=k * alpha)
            x = sample_tilted_stable(spec, rng, size=self.samples)
            y = np.maximum(rng.beta(k * alpha, n - k * alpha, size=self.samples), 1e-300)
            self._ratios[k - 1] = x / y
        self._ratios.flags.writeable = False
        self._log_prefactor = (
            (np.arange(1, n + 1) - 1) * math.log(alpha)
            + special.gammaln(np.arange(1, n + 1))
            - special.gammaln(n)
        )

    def log_last_row(self, beta):
        """(log_row, rel_se) for row n at this beta, from the frozen draws."""
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        log_terms = beta ** self.alpha - beta * self._ratios
        log_m1 = special.logsumexp(log_terms, axis=1) - math.log(self.samples)
        log_m2 = special.logsumexp(2.0 * log_terms, axis=1) - math.log(self.samples)
        if not np.all(np.isfinite(log_m1)):
            raise McDegeneracyError(f"frozen-draw weight estimate underflowed at beta={beta}")
        gap = log_m2 - 2.0 * log_m1
        rel = np.zeros_like(gap)
        mask = gap > 1e-15
        log_var = log_m2[mask] + np.log1p(-np.exp(-gap[mask]))
        rel[mask] = np.exp(0.5 * log_var - log_m1[mask] - 0.5 * math.log(self.samples))
        return self._log_prefactor + log_m1, rel

    def block_distribution(self, beta, gfc):
        """Block-count probabilities at this beta (not normality-checked)."""
        log_row, _ = self.log_last_row(beta)
        k = np.arange(1, self.n + 1)
        log_p = log_row + gfc.log_row(self.n) - k * math.log(self.alpha)
        # the frozen estimator does not normalize V_{1,1}; rescale instead
        probs = np.exp(log_p - special.logsumexp(log_p))
        return probs


def weight_table_from_sampler(sampler, beta):
    """Weight triangle at `beta` from a sampler's frozen draws.

    Same construction as build_weight_table's Monte Carlo path (backward
    recursion from the last row, normalized so V_{1,1} = 1 exactly), but
    deterministic in beta given the sampler, which is what hyperparameter
    moves need: the draws are auxiliary variables held fixed while beta
    varies.
    """
    last_log, last_rel = sampler.log_last_row(beta)
    table, rel = _backward_sweep(sampler.n, sampler.alpha, last_log, last_rel)
    norm, norm_rel = table[1, 1], rel[1, 1]
    tri = np.tril(np.ones_like(table, dtype=bool))
    table[tri] -= norm
    rel[tri] += norm_rel
    rel[1, 1] = 0.0
    return WeightTable(
        sampler.n,
        sampler.alpha,
        table,
        Provenance("monte-carlo", sampler.samples, sampler.seed),
        rel_se=rel,
    )


def calibrate(family, target, n, alpha=None, mc_config=None):
    """Find the free parameter value giving E[B_n] = target within 0.05.

    DP and PY solve for theta; NGG and NIG solve for beta. The dependence of
    E[B_n] on the free parameter is monotone increasing, so the root is
    bracketed by doubling and polished with Brent's method. For the Monte
    Carlo variants the objective is evaluated on one frozen set of draws
    (common random numbers), making the search deterministic; the quoted
    tolerance is then relative to that Monte Carlo surface.

    Args:
        family: one of "DP", "PY", "NGG", "NIG".
        target: desired expected block count, inside (1, n).
        n: partition size the expectation refers to.
        alpha: discount, required for PY and NGG.
        mc_config: McConfig for the Monte Carlo variants.

    Returns:
        The calibrated parameter (theta or beta).
    """
    if family not in VARIANTS:
        raise ValueError(f"family must be one of {VARIANTS}, got {family!r}")
    if not 1.0 < target < n:
        raise ValueError(f"E[B_{n}] is confined to (1, {n}); target {target} is unreachable")
    if family in ("PY", "NGG") and alpha is None:
        raise ValueError(f"{family} calibration requires alpha")
    if family == "NIG":
        alpha = 0.5
    if family == "DP":
        alpha = 0.0

    if family in ("DP", "PY"):

        def make(t):
            # search over log(theta + alpha) keeps theta inside its domain
            theta = math.exp(t) - alpha
            if family == "DP":
                return GibbsModel.dp(theta)
            return GibbsModel.py(alpha, theta)

        def objective(t):
            return expected_blocks(make(t), n) - target

    else:
        mc = mc_config or McConfig()
        sampler = NggWeightSampler(alpha, n, mc.samples, mc.seed)
        gfc = build_gfc_table(n, alpha)
        k = np.arange(1, n + 1)

        def objective(t):
            probs = sampler.block_distribution(math.exp(t), gfc)
            return float(np.dot(k, probs)) - target

    lo, hi = 0.0, 1.0
    f_lo, f_hi = objective(lo), objective(hi)
    for _ in range(80):
        if f_lo <= 0.0:
            break
        hi, f_hi = lo, f_lo
        lo -= 2.0
        f_lo = objective(lo)
    else:
        raise ValueError(f"could not bracket target {target} from below")
    for _ in range(80):
        if f_hi >= 0.0:
            break
        lo, f_lo = hi, f_hi
        hi += 2.0
        f_hi = objective(hi)
    else:
        raise ValueError(f"could not bracket target {target} from above")
    t_star = optimize.brentq(objective, lo, hi, xtol=1e-12)
    residual = objective(t_star)
    if abs(residual) > 0.05:
        raise ValueError(
            f"calibration stalled: |E[B_{n}] - {target}| = {abs(residual):.4f} > 0.05"
        )
    param = math.exp(t_star) - alpha if family in ("DP", "PY") else math.exp(t_star)
    return float(param)


def default_cache_dir():
    """Directory for serialized weight tables, overridable by environment."""
    override = os.environ.get(CACHE_DIR_ENV)
    if override:
        return Path(override)
    return Path("~/.cache/gibbsibp").expanduser()


def _table_payload(table, model):
    rows = [list(map(float, table.log_row(n))) for n in range(1, table.n_max + 1)]
    payload = {
        "format_version": TABLE_FORMAT_VERSION,
        "model": model.to_payload() if model is not None else None,
        "n_max": table.n_max,
        "alpha": table.alpha,
        "provenance": table.provenance.to_payload(),
        "log_entries": rows,
    }
    if table._rel_se is not None:
        payload["rel_se"] = [
            list(map(float, table.rel_se_row(n))) for n in range(1, table.n_max + 1)
        ]
    else:
        payload["rel_se"] = None
    return payload


def weight_table_content_hash(table, model=None):
    """Stable content hash of a table for run manifests."""
    doc = json.dumps(_table_payload(table, model), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()


def primitive_cache_content_hash(cache):
    """Stable content hash of a primitive cache for run manifests."""
    doc = json.dumps(
        {
            "model": list(cache.model.key()),
            "n": cache.n,
            "g10": cache.g10.tolist(),
            "g11": cache.g11.tolist(),
            "log_gs1": cache.log_gs1.tolist(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(doc.encode()).hexdigest()


def table_cache_path(model, n_max, directory=None):
    """Cache file path keyed by (variant, parameters, n_max, mc_config)."""
    directory = Path(directory) if directory is not None else default_cache_dir()
    key = json.dumps(["weights", TABLE_FORMAT_VERSION, list(model.key()), int(n_max)])
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    return directory / f"weights_{model.variant.lower()}_{digest}.json"


def save_weight_table(table, model, path=None):
    """Serialize a table (with provenance) to a versioned JSON cache file."""
    if path is None:
        path = table_cache_path(model, table.n_max)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_table_payload(table, model), fh)
    return path


def load_weight_table(path):
    """Load a serialized table; returns (WeightTable, model-or-None)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != TABLE_FORMAT_VERSION:
        raise ValueError(
            f"unsupported table format version {payload.get('format_version')}"
        )
    n_max = int(payload["n_max"])
    log_entries = np.full((n_max + 1, n_max + 1), -np.inf)
    for n in range(1, n_max + 1):
        log_entries[n, 1:n + 1] = payload["log_entries"][n - 1]
    rel = None
    if payload["rel_se"] is not None:
        rel = np.zeros((n_max + 1, n_max + 1))
        for n in range(1, n_max + 1):
            rel[n, 1:n + 1] = payload["rel_se"][n - 1]
    prov_payload = payload["provenance"]
    provenance = Provenance(
        prov_payload["kind"],
        prov_payload.get("samples"),
        prov_payload.get("seed"),
    )
    table = WeightTable(n_max, payload["alpha"], log_entries, provenance, rel_se=rel)
    model = GibbsModel.from_payload(payload["model"]) if payload["model"] else None
    return table, model
