"""Fault-injection switches used by the property suites to prove they bite.

Never touched in production runs; every value defaults to the correct one.
"""

from contextlib import contextmanager

_DEFAULTS = {"stab_sign": 1.0, "af_trace_scale": 1.0}
_state = dict(_DEFAULTS)


def get(name):
    return _state[name]


@contextmanager
def mutated(**changes):
    unknown = set(changes) - set(_DEFAULTS)
    if unknown:
        raise KeyError(f"unknown hooks: {sorted(unknown)}")
    old = dict(_state)
    _state.update(changes)
    try:
        yield
    finally:
        _state.clear()
        _state.update(old)
