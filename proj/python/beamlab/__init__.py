"""Gaussian-beam inverse problem toolkit: dict-based front end to the C++ core."""

import json as _json

from . import _core
from ._core import BeamlabError, ConfigError, SCHEMA_VERSION, __version__, subcommands

__all__ = [
    "BeamlabError",
    "ConfigError",
    "SCHEMA_VERSION",
    "__version__",
    "config_hash",
    "default_config",
    "recover",
    "run",
    "shoot",
    "subcommands",
    "validate",
]


def default_config():
    """Every configurable key with its default value."""
    return _json.loads(_core.default_config_json())


def validate(command, config=None):
    """List of violations for `config` merged over the defaults; empty if usable."""
    return _core.validate_json(command, _json.dumps(config or {}))


def config_hash(config):
    return _core.config_hash_json(_json.dumps(config))


def run(command, config=None, *, out="out", threads=None, seed=None):
    """Run a subcommand pipeline, writing reports under `out`; returns the manifest."""
    flags = {"out": str(out)}
    if threads is not None:
        flags["threads"] = threads
    if seed is not None:
        flags["seed"] = seed
    return _json.loads(_core.run_json(command, _json.dumps(config or {}), _json.dumps(flags)))


def _metric(metric):
    merged = default_config()["metric"]
    merged.update(metric or {})
    return _json.dumps(merged)


def shoot(t, x, xi, *, metric=None, covector=False, max_reflections=4):
    """Broken null geodesic from (t, x) along xi; node arrays plus end data."""
    return _core.shoot_json(_metric(metric), t, list(x), list(xi), covector, max_reflections)


def recover(V1, V2, t, x, rhos, *, order=3, metric=None, nt=321, nx=129, source="field", min_nodes=4, threads=1):
    """Estimate of V_order^(1) - V_order^(2) at (t, x) from the beam identity."""
    as_str = lambda V: {str(k): str(v) for k, v in V.items()}
    return _core.recover_json(order, _metric(metric), nt, nx, as_str(V1), as_str(V2), t, list(x), list(rhos),
                              source, min_nodes, threads)
