"""Sequential buffet-style simulation of Gibbs-type feature allocations.

Customers enter one at a time; customer n+1 takes existing dish k with
probability (S_{n,k} - alpha) g_n(1,0) and then tries a Poisson(gamma
g_n(1,1)) number of new dishes.  The module also evaluates the joint pmf
of an allocation, summarizes dish statistics, and reports the power-law
constants governing dish growth.
"""

import csv
import math

import numpy as np
from scipy import integrate, special

from .gibbs_weights import build_primitive_cache
from .special_functions import log_rising_factorial, positive_stable_density


class FeatureAllocation:
    """A binary customers-by-dishes matrix with dishes in order of appearance.

    Rows are customers, columns dishes; column k of the matrix records who
    took dish k.  Columns are ordered by the row of their first 1 (ties kept
    in draw order), every dish has at least one taker, and gamma records the
    mass parameter that produced the allocation.

    Args:
        matrix: n x K binary array.
        gamma: mass parameter, >= 0.
    """

    def __init__(self, matrix, gamma):
        matrix = np.ascontiguousarray(matrix, dtype=np.uint8)
        if matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
        if matrix.size and matrix.max() > 1:
            raise ValueError("matrix entries must be 0 or 1")
        if gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {gamma}")
        if matrix.shape[1]:
            counts = matrix.sum(axis=0)
            if counts.min() < 1:
                raise ValueError("every dish needs at least one taker")
            first = matrix.argmax(axis=0)
            if np.any(np.diff(first) < 0):
                raise ValueError("columns must be ordered by first appearance")
        matrix.flags.writeable = False
        self.matrix = matrix
        self.gamma = float(gamma)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def dishes(self):
        return self.matrix.shape[1]

    @property
    def counts(self):
        """Per-dish taker counts S_{n,k}."""
        return self.matrix.sum(axis=0).astype(np.int64)

    @classmethod
    def from_matrix(cls, matrix, gamma):
        """Build an allocation from a matrix in arbitrary column order."""
        matrix = np.asarray(matrix, dtype=np.uint8)
        if matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
        if matrix.shape[1]:
            if matrix.size and matrix.max() > 1:
                raise ValueError("matrix entries must be 0 or 1")
            if matrix.sum(axis=0).min() < 1:
                raise ValueError("every dish needs at least one taker")
            order = np.argsort(matrix.argmax(axis=0), kind="stable")
            matrix = matrix[:, order]
        return cls(matrix, gamma)


def simulate_ibp(model, gamma, n, seed, cache=None):
    """Simulate n customers of the buffet process.

    Args:
        model: GibbsModel supplying the primitives.
        gamma: mass parameter, >= 0.
        n: number of customers, >= 1.
        seed: RNG seed.
        cache: optional PrimitiveCache of depth >= n.

    Returns:
        FeatureAllocation with dishes in order of appearance (ties within a
        customer kept in draw order).
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if cache is None:
        cache = build_primitive_cache(model, n)
    if cache.n < n:
        raise ValueError(f"cache depth {cache.n} cannot serve n = {n}")
    alpha = model.stable_index
    rng = np.random.default_rng(seed)
    counts = np.zeros(16, dtype=np.int64)
    k_cur = 0
    steps = []
    for j in range(1, n + 1):
        if k_cur:
            probs = (counts[:k_cur] - alpha) * cache.g10_for(j)
            if probs.min() < 0.0 or probs.max() > 1.0:
                raise ValueError(
                    "per-dish probability left [0, 1]; the primitives are corrupt"
                )
            takes = rng.random(k_cur) < probs
            counts[:k_cur][takes] += 1
        else:
            takes = np.zeros(0, dtype=bool)
        fresh = int(rng.poisson(gamma * cache.g11_for(j)))
        if k_cur + fresh > counts.size:
            counts = np.concatenate([counts, np.zeros(counts.size + fresh, dtype=np.int64)])
        counts[k_cur:k_cur + fresh] = 1
        k_cur += fresh
        steps.append((takes, fresh))
    matrix = np.zeros((n, k_cur), dtype=np.uint8)
    seen = 0
    for i, (takes, fresh) in enumerate(steps):
        matrix[i, :takes.size] = takes
        matrix[i, seen:seen + fresh] = 1
        seen += fresh
    return FeatureAllocation(matrix, gamma)


def sample_feature_counts(model, gamma, n, replicates, seed, cache=None):
    """Dish totals K_n from `replicates` independent buffet runs.

    The dish-taking draws cannot change K_n, so each run reduces to its
    per-customer new-dish Poisson counts; those are drawn in lockstep across
    replicates.

    Returns:
        int array of shape (replicates,).
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if cache is None:
        cache = build_primitive_cache(model, n)
    if cache.n < n:
        raise ValueError(f"cache depth {cache.n} cannot serve n = {n}")
    rng = np.random.default_rng(seed)
    means = gamma * cache.g11[:n]
    return rng.poisson(np.broadcast_to(means, (replicates, n))).sum(axis=1)


def log_joint(allocation, model, gamma, cache=None):
    """Log joint pmf of the allocation, dishes labeled by order of appearance.

    K_n log(gamma) - gamma sum_{j<=n} g_{j-1}(1,1)
    + sum_k [log(1-alpha)_{S_k - 1} + log g_{n-S_k}(S_k, 1)],
    the pmf of the first n rows with the diffuse base-measure label
    differentials omitted (downstream uses only ratios and the gamma^{K_n}
    factor, both of which survive the omission).

    Args:
        allocation: FeatureAllocation.
        model: GibbsModel.
        gamma: mass parameter, >= 0.
        cache: optional PrimitiveCache built for exactly n = allocation.n.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    n = allocation.n
    if n < 1:
        raise ValueError("allocation must contain at least one customer")
    if cache is None:
        cache = build_primitive_cache(model, n)
    if cache.n != n:
        raise ValueError(f"cache was built for n = {cache.n}, need n = {n}")
    k_n = allocation.dishes
    if k_n == 0:
        base = 0.0
    elif gamma == 0.0:
        return -math.inf
    else:
        base = k_n * math.log(gamma)
    total = base - gamma * float(cache.g11[:n].sum())
    alpha = model.stable_index
    # summing in sorted order makes row-permutation invariance exact
    for s in sorted(allocation.counts.tolist()):
        total += log_rising_factorial(1.0 - alpha, s - 1) + cache.log_gs1_for(s)
    return total


def log_transition(counts, takes, fresh, gamma, alpha, g10, g11):
    """Log weight of one customer's choices given the dish counts before them.

    counts holds S_{n,k} after n customers, takes their decisions on those
    dishes, fresh the number of new dishes; g10 = g_n(1,0), g11 = g_n(1,1).
    The new-dish factor is exp(-gamma g11) (gamma g11)^fresh without the
    fresh! term: dish labels are fixed by order of appearance, matching
    log_joint.
    """
    counts = np.asarray(counts, dtype=float)
    takes = np.asarray(takes, dtype=bool)
    if counts.shape != takes.shape:
        raise ValueError("counts and takes must align")
    total = 0.0
    if counts.size:
        probs = (counts - alpha) * g10
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError(
                "per-dish probability left [0, 1]; the primitives are corrupt"
            )
        total += float(np.where(takes, np.log(probs), np.log1p(-probs)).sum())
    rate = gamma * g11
    if fresh:
        total += fresh * math.log(rate)
    return total - rate


def feature_statistics(allocation):
    """Summaries of an allocation for growth and multiplicity diagnostics.

    Returns:
        dict with keys:
            trajectory: K_j for j = 1..n (dishes seen among the first j rows).
            multiplicity_counts: entry j = number of dishes with exactly j
                takers, j = 0..n (entry 0 is always 0).
            frequencies: empirical dish frequencies S_{n,k}/n in dish order.
    """
    n = allocation.n
    counts = allocation.counts
    if allocation.dishes:
        first = allocation.matrix.argmax(axis=0)
        trajectory = np.searchsorted(first, np.arange(n), side="right")
    else:
        trajectory = np.zeros(n, dtype=np.int64)
    return {
        "trajectory": trajectory.astype(np.int64),
        "multiplicity_counts": np.bincount(counts, minlength=n + 1),
        "frequencies": counts / float(n) if n else counts.astype(float),
    }


def expected_features(model, gamma, n, cache=None):
    """E[K_n] = gamma sum_{j=1..n} g_{j-1}(1,1)."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if cache is None:
        cache = build_primitive_cache(model, n)
    if cache.n < n:
        raise ValueError(f"cache depth {cache.n} cannot serve n = {n}")
    return gamma * float(cache.g11[:n].sum())


def powerlaw_constant(model):
    """Leading constant C in E[K_n] ~ gamma C n^alpha.

    PY evaluates Gamma(theta+1)/(alpha Gamma(theta+alpha)); NIG the Bessel
    form (2/sqrt(pi)) sqrt(beta) e^{sqrt(beta)} K_1(sqrt(beta)); NGG the
    quadrature e^{beta^alpha} int t^{-alpha} e^{-beta t} f_alpha(t) dt.
    DP dish counts grow logarithmically, so no such constant exists and the
    result is None.
    """
    if model.variant == "DP":
        return None
    alpha = model.stable_index
    if model.variant == "PY":
        theta = model.theta
        return float(
            np.exp(special.gammaln(theta + 1.0) - special.gammaln(theta + alpha))
            / alpha
        )
    beta = model.beta
    if model.variant == "NIG":
        root = math.sqrt(beta)
        # k1e(x) = e^x K_1(x), stable for large beta
        return 2.0 / math.sqrt(math.pi) * root * float(special.k1e(root))

    def integrand(t):
        return t ** -alpha * math.exp(-beta * t) * positive_stable_density(alpha, t)

    head, _ = integrate.quad(integrand, 0.0, 1.0)
    tail, _ = integrate.quad(integrand, 1.0, np.inf)
    return math.exp(beta ** alpha) * (head + tail)


def export_allocation_csv(allocation, path):
    """Write the allocation as 0/1 rows, one per customer."""
    path = str(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["customer"] + [f"dish_{k}" for k in range(1, allocation.dishes + 1)])
        for i in range(allocation.n):
            writer.writerow([i + 1] + allocation.matrix[i].tolist())
    return path


def import_allocation_csv(path, gamma):
    """Read an allocation written by export_allocation_csv.

    Columns are re-sorted to order of appearance, so hand-edited files with
    shuffled dishes still load; empty dishes are rejected.
    """
    with open(str(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[int(cell) for cell in row[1:]] for row in reader]
    width = len(header) - 1
    matrix = np.array(rows, dtype=np.uint8).reshape(len(rows), width)
    return FeatureAllocation.from_matrix(matrix, gamma)


def export_statistics_csv(statistics, path):
    """Write feature_statistics output in long form: series,index,value."""
    path = str(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "index", "value"])
        for j, value in enumerate(statistics["trajectory"], start=1):
            writer.writerow(["dishes_by_customer", j, int(value)])
        for j, value in enumerate(statistics["multiplicity_counts"]):
            if j:
                writer.writerow(["dishes_with_multiplicity", j, int(value)])
        for k, value in enumerate(statistics["frequencies"], start=1):
            writer.writerow(["dish_frequency", k, float(value)])
    return path
