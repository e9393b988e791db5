"""TOML experiment configuration.

Keys may sit at top level or in the ``[scenario]``, ``[coding]`` and
``[simulation]`` tables; all of them map onto :class:`ExperimentConfig`
fields.  Two extra keys choose what ``design`` builds: ``mode`` (``"dec"`` or
``"ir"``) and ``resolution`` (the quantizer resolution ``L`` for IR).

Example (field)::

    [scenario]
    kind = "field"
    n = 100
    beta = 0.5

    [coding]
    rate = 1
    mode = "ir"
    resolution = 8
    S = 4
    A = 1
    B = 1

    [simulation]
    pmf_samples = 1000000
    eval_samples = 10000
    seed = 7

Example (CEO)::

    [scenario]
    kind = "ceo"
    n = 100
    sigma0_sq = 1.0
    lambda_sq = 0.1

    [coding]
    rate = 2
    mode = "dec"
"""
from __future__ import annotations

import sys
from dataclasses import dataclass

from .errors import ConfigError
from .scenarios import ExperimentConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = ("scenario", "coding", "simulation")


@dataclass
class DesignChoice:
    mode: str = "dec"
    resolution: int | None = None

    def L(self, config: ExperimentConfig) -> int | None:
        if self.mode == "dec":
            return None
        L = self.resolution if self.resolution is not None else max(config.ir_candidates(), default=None)
        if L is None or L <= config.K:
            raise ConfigError(f"IR needs a resolution above 2**rate = {config.K}")
        return L


def parse_config(data: dict) -> tuple[ExperimentConfig, DesignChoice]:
    flat = {}
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            dup = set(flat) & set(value)
            if dup:
                raise ConfigError(f"keys given twice: {sorted(dup)}")
            flat.update(value)
        elif isinstance(value, dict):
            raise ConfigError(f"unknown table [{key}]")
        else:
            if key in flat:
                raise ConfigError(f"key given twice: {key}")
            flat[key] = value
    mode = flat.pop("mode", "dec")
    if mode not in ("dec", "ir"):
        raise ConfigError(f"mode must be 'dec' or 'ir', got {mode!r}")
    resolution = flat.pop("resolution", None)
    if resolution is not None and (not isinstance(resolution, int) or resolution < 2):
        raise ConfigError("resolution must be an integer >= 2")
    config = ExperimentConfig.from_dict(flat)
    return config, DesignChoice(mode, resolution)


def load_config(path) -> tuple[ExperimentConfig, DesignChoice]:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(data)
