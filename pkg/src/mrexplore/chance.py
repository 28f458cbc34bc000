"""Pluggable randomness for generative transitions.

Every stochastic effect inside a transition is drawn through the two helpers
below instead of calling methods on ``random.Random`` directly.  A source is
normally a ``random.Random``; alternatively it may expose ``take_bernoulli``
/ ``take_binomial`` hooks, in which case those are dispatched to.  The exact
enumeration oracle uses such hooks to replay a transition down every one of
its stochastic branches.

Degenerate draws (p <= 0, p >= 1, n == 0) short-circuit without touching the
source, so deterministic effects neither consume entropy nor create spurious
enumeration branches.
"""

from __future__ import annotations


def bernoulli(source, p: float) -> bool:
    """True with probability ``p``."""
    if p <= 0.0:
        return False
    if p >= 1.0:
        return True
    take = getattr(source, "take_bernoulli", None)
    if take is not None:
        return take(p)
    return source.random() < p


def binomial(source, n: int, p: float) -> int:
    """Number of successes among ``n`` independent trials of probability ``p``."""
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    take = getattr(source, "take_binomial", None)
    if take is not None:
        return take(n, p)
    hits = 0
    for _ in range(n):
        if source.random() < p:
            hits += 1
    return hits
