"""Instrumented floating-point operation counting for the attention paths.

Counters cover the mechanism-specific mixing computation downstream of the
shared query/key/value projections, so the two mechanisms are compared on
the work that actually distinguishes them. Sums of n terms are counted as
n additions (accumulation from zero), which keeps every stage an exact
multiple of its leading term: the canonical count is proportional to N^2
and the data-independent primal count is proportional to N, so doubling N
scales them by exactly 4 and 2.

Buffer-byte models follow the same scoping: the canonical mechanism must
keep the N x N weight matrix resident, the primal mechanism only its
feature rows, projection scores and folded weights.
"""

from __future__ import annotations

from contextlib import contextmanager

_active = None


class FlopCounter:
    def __init__(self):
        self.total = 0

    def add(self, n: int):
        self.total += int(n)


@contextmanager
def count_flops():
    """Activate a counter; attention forwards add their stage counts to it."""
    global _active
    previous = _active
    counter = FlopCounter()
    _active = counter
    try:
        yield counter
    finally:
        _active = previous


def add_flops(n: int):
    if _active is not None:
        _active.add(n)


def feature_map_flop_count(kind: str, n: int, p: int, input_dim: int) -> int:
    """Per-call cost of mapping n rows; every term is linear in n."""
    if kind == "identity":
        return 0
    if kind == "cosine":
        # square+accumulate (2p), sqrt+clamp (2), divide (p) per row
        return n * (3 * p + 2)
    # random_exponential: matvec (2 p input_dim), exp(p), squared norm
    # (2 input_dim), scale exp+mult (1 + p) per row
    return n * (2 * p * input_dim + 2 * p + 2 * input_dim + 1)


def canonical_flop_count(n: int, d_k: int, d_v: int) -> int:
    """Score products, softmax and value aggregation; exactly quadratic in n."""
    scores = n * n * (2 * d_k + 1)  # dot products + temperature scaling
    softmax = 4 * n * n  # shift, exp, row-sum accumulate, divide
    aggregation = 2 * n * n * d_v
    return scores + softmax + aggregation


def primal_flop_count(
    n: int,
    p: int,
    s: int,
    d_v: int,
    *,
    fmap_kind: str = "cosine",
    fmap_input_dim: int | None = None,
    fold_rows: int = 0,
    dhat: bool = False,
) -> int:
    """Feature maps, e/r score projections and the 2s -> d_v output map.

    ``fold_rows`` adds the one-time data-dependent weight fold (2 * rows *
    p * s per side); it is the only term not proportional to n, and is zero
    in data-independent mode.
    """
    input_dim = p if fmap_input_dim is None else fmap_input_dim
    total = 2 * feature_map_flop_count(fmap_kind, n, p, input_dim)
    total += 2 * fold_rows * p * s * 2  # fold F_X^T W into p x s, both sides
    total += 2 * (2 * n * p * s)  # e and r score projections
    if dhat:
        total += n * p + 2 * n * p + 2 * n + 2 * n * s  # colsum, dots, rsqrt, scale
    total += 2 * n * (2 * s) * d_v  # output map
    return total


def causal_data_dependent_flop_count(n: int, p: int, s: int, d_v: int, *, fmap_kind: str = "cosine") -> int:
    """Prefix-mixing variant: the score mixing is quadratic in n."""
    total = 2 * feature_map_flop_count(fmap_kind, n, p, p)
    total += 2 * (2 * n * n * p)  # feature-row x sequence-row inner products
    total += 2 * (2 * n * n * s)  # prefix-masked mixing into scores
    total += 2 * n * (2 * s) * d_v
    return total


def canonical_buffer_bytes(n: int, d_v: int) -> int:
    return 8 * (n * n + n * d_v)


def primal_buffer_bytes(n: int, p: int, s: int, d_v: int) -> int:
    return 8 * (2 * n * p + 2 * p * s + 2 * n * s + n * d_v)
