"""Policy classes and a name -> class registry used by configs."""
from __future__ import annotations

import inspect

from ..numerics import InvalidParameter
from .contextual import (ContextualTS, HiddenLinUCB, HiddenLinUCBMean, HiddenLinUCBSample, LinUCB,
                         OFUL, SampLinUCB)
from .recurrent import FullInfoContextualTS, RecurrentRelationalTS, RecurrentStateTS
from .stochastic import (CUCB, CUCBV, MOSS, UCB, UCBV, DiscountedUCB, EpsilonGreedy, OraclePolicy,
                         RandomPolicy, SlidingWindowUCB, TsBernoulli, TsBounded, TsGaussian, UcbDelta)

REGISTRY = {cls.name: cls for cls in (
    RandomPolicy, UCB, CUCB, CUCBV, UCBV, UcbDelta, MOSS, EpsilonGreedy, TsBernoulli, TsBounded,
    TsGaussian, DiscountedUCB, SlidingWindowUCB, OraclePolicy,
    LinUCB, OFUL, ContextualTS, SampLinUCB, HiddenLinUCBMean, HiddenLinUCBSample, HiddenLinUCB,
    RecurrentRelationalTS, FullInfoContextualTS, RecurrentStateTS,
)}


def policy_params(name: str) -> dict:
    """Keyword parameters (with defaults) accepted by a registered policy."""
    cls = lookup(name)
    sig = inspect.signature(cls.__init__)
    return {p.name: p.default for p in sig.parameters.values()
            if p.name not in ("self", "K", "k", "rng", "env")}


def lookup(name: str):
    try:
        return REGISTRY[name]
    except KeyError:
        raise InvalidParameter(f"unknown policy {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


def make_policy(name: str, K: int, k: int, rng=None, env=None, **params):
    cls = lookup(name)
    allowed = policy_params(name)
    unknown = set(params) - set(allowed)
    if unknown:
        raise InvalidParameter(f"{name}: unknown parameter(s) {sorted(unknown)}")
    if cls is OraclePolicy:
        return cls(K, k, rng, env=env)
    return cls(K, k, rng, **params)


__all__ = ["REGISTRY", "lookup", "make_policy", "policy_params"] + [c.__name__ for c in REGISTRY.values()]
