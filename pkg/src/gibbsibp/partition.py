"""Gibbs-type random partitions: urn-scheme simulation and the exchangeable
partition probability function."""

import csv
import math

import numpy as np

from .gibbs_weights import build_weight_table
from .special_functions import log_rising_factorial

CLOSED_FORM_STEP_TOL = 1e-10
MC_STEP_TOL = 1e-3


class PartitionState:
    """State of the urn scheme after n customers.

    block_sizes lists the occupancy N_{n,k} of each block in order of
    appearance; assignments optionally records each customer's block id
    (1-based, in appearance order). max_step_defect tracks the largest
    pre-normalization defect seen across Monte Carlo urn steps.
    """

    def __init__(self, n=0, block_sizes=(), assignments=None, max_step_defect=0.0):
        block_sizes = tuple(int(s) for s in block_sizes)
        if any(s < 1 for s in block_sizes):
            raise ValueError("every block must hold at least one customer")
        if sum(block_sizes) != n:
            raise ValueError(f"block sizes {block_sizes} do not sum to n = {n}")
        if assignments is not None:
            assignments = tuple(int(a) for a in assignments)
            if len(assignments) != n:
                raise ValueError("assignments must list one block per customer")
        self.n = int(n)
        self.block_sizes = block_sizes
        self.assignments = assignments
        self.max_step_defect = float(max_step_defect)

    @property
    def block_count(self):
        return len(self.block_sizes)

    def __repr__(self):
        return f"PartitionState(n={self.n}, block_sizes={self.block_sizes})"


def _step_ratios(table, n, b):
    # V_{n+1,b}/V_{n,b} and V_{n+1,b+1}/V_{n,b}
    log_vn = table.log_weight(n, b)
    same = math.exp(table.log_weight(n + 1, b) - log_vn)
    new = math.exp(table.log_weight(n + 1, b + 1) - log_vn)
    return same, new


def urn_step(state, table, alpha, rng):
    """Advance the urn by one customer and return the new state.

    Customer n+1 joins existing block k with probability
    (V_{n+1,B_n}/V_{n,B_n}) (N_{n,k} - alpha) and opens a new block with
    probability V_{n+1,B_n+1}/V_{n,B_n}. Closed-form weights must produce
    step probabilities summing to 1 within 1e-10; Monte Carlo weights are
    renormalized, with the defect recorded on the state (and refused past
    1e-3).
    """
    n, b = state.n, state.block_count
    if n == 0:
        assignments = (1,) if state.assignments is not None else None
        return PartitionState(1, (1,), assignments, state.max_step_defect)
    if table.n_max < n + 1:
        raise ValueError(f"weight table depth {table.n_max} cannot serve step to n = {n + 1}")
    same, new = _step_ratios(table, n, b)
    probs = np.empty(b + 1)
    probs[:b] = (np.asarray(state.block_sizes, dtype=float) - alpha) * same
    probs[b] = new
    total = probs.sum()
    defect = abs(total - 1.0)
    monte_carlo = table.provenance.kind == "monte-carlo"
    tol = MC_STEP_TOL if monte_carlo else CLOSED_FORM_STEP_TOL
    if defect > tol:
        raise ValueError(
            f"urn step probabilities sum to 1{total - 1.0:+.3e} at n={n}, beyond tolerance"
        )
    choice = int(rng.choice(b + 1, p=probs / total))
    sizes = list(state.block_sizes)
    if choice == b:
        sizes.append(1)
    else:
        sizes[choice] += 1
    assignments = None
    if state.assignments is not None:
        assignments = state.assignments + (choice + 1,)
    return PartitionState(
        n + 1, sizes, assignments, max(state.max_step_defect, defect if monte_carlo else 0.0)
    )


def sample_partition(model, n, seed, table=None):
    """Simulate a partition of [n] by iterating the urn from empty.

    Returns a PartitionState with per-customer assignments recorded.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if table is None:
        table = build_weight_table(model, n)
    rng = np.random.default_rng(seed)
    state = PartitionState(assignments=())
    for _ in range(n):
        state = urn_step(state, table, model.stable_index, rng)
    return state


def sample_block_counts(model, n, replicates, seed, table=None):
    """Vectorized urn simulation returning the block count B_n per replicate.

    Runs all replicates in lockstep, which keeps large Monte Carlo studies
    (10^5 partitions at n in the hundreds) tractable.
    """
    if n < 1 or replicates < 1:
        raise ValueError("n and replicates must be positive")
    if table is None:
        table = build_weight_table(model, n)
    if table.n_max < n:
        raise ValueError(f"weight table depth {table.n_max} cannot serve n = {n}")
    alpha = model.stable_index
    monte_carlo = table.provenance.kind == "monte-carlo"
    tol = MC_STEP_TOL if monte_carlo else CLOSED_FORM_STEP_TOL
    rng = np.random.default_rng(seed)
    # ratio_same[m, b] = V_{m+1,b}/V_{m,b}; ratio_new[m, b] = V_{m+1,b+1}/V_{m,b}
    ratio_same = np.zeros((n, n + 1))
    ratio_new = np.zeros((n, n + 1))
    for m in range(1, n):
        log_vm = table.log_row(m)
        log_next = table.log_row(m + 1)
        ratio_same[m, 1:m + 1] = np.exp(log_next[:m] - log_vm)
        ratio_new[m, 1:m + 1] = np.exp(log_next[1:m + 1] - log_vm)
    r = int(replicates)
    width = 8
    counts = np.zeros((r, width))
    counts[:, 0] = 1.0
    k_cur = np.ones(r, dtype=np.int64)
    rows = np.arange(r)
    for m in range(1, n):
        if k_cur.max() + 1 >= width:
            counts = np.hstack([counts, np.zeros((r, width))])
            width *= 2
        probs = np.where(counts > 0, counts - alpha, 0.0) * ratio_same[m, k_cur][:, None]
        probs[rows, k_cur] = ratio_new[m, k_cur]
        totals = probs.sum(axis=1)
        defect = float(np.max(np.abs(totals - 1.0)))
        if defect > tol:
            raise ValueError(
                f"urn step probabilities off by {defect:.3e} at n={m}, beyond tolerance"
            )
        u = rng.random(r) * totals
        idx = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
        idx = np.minimum(idx, k_cur)
        counts[rows, idx] += 1.0
        k_cur += idx == k_cur
    return k_cur


def log_eppf(model, block_sizes, table=None):
    """log of the exchangeable partition probability at a composition.

    log f = log V_{n,k} + sum_l log (1-alpha)_{n_l - 1}, n = sum of sizes.
    """
    sizes = tuple(int(s) for s in block_sizes)
    if len(sizes) == 0 or any(s < 1 for s in sizes):
        raise ValueError(f"block sizes must be positive integers, got {block_sizes}")
    n, k = sum(sizes), len(sizes)
    if table is None:
        table = build_weight_table(model, n)
    alpha = model.stable_index
    log_f = table.log_weight(n, k)
    # summing in sorted order makes permutation invariance exact, not just
    # up to float reassociation
    for s in sorted(sizes):
        log_f += log_rising_factorial(1.0 - alpha, s - 1)
    return float(log_f)


def export_partition_csv(state, path):
    """Write a sampled partition as rows of (customer, block)."""
    if state.assignments is None:
        raise ValueError("partition has no per-customer assignments to export")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["customer", "block"])
        for i, block in enumerate(state.assignments, start=1):
            writer.writerow([i, block])
    return path
