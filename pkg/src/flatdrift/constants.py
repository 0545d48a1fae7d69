"""Registry of the non-effective exponents and constants.

None of these numbers is pinned down by the theory; the defaults are
placeholders that experiments report next to the values they fit.  A JSON
file named by ``FLATDRIFT_CONFIG`` (or passed explicitly) overrides entries.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

ENV_VAR = "FLATDRIFT_CONFIG"


def _defaults() -> dict:
    d = {f"kappa{i}": 1.0 for i in range(1, 20)}
    d["kappa3"] = 0.5
    d["kappa6"] = 3.0
    d.update({
        "varpi": 1.0,
        "t1": 1.0, "t2": 1.0, "t3": 1.0, "t4": 1.0, "t5": 1.0,
        "C_F_cap": 1.0,               # multiplier in |F_z(t)| <= C e^{(3 kappa6 + 1) t}
        "lambda_plus": 1.0 / 3.0,     # surrogate for the expansion rate on H-perp
        "lambda_plus_margin": 0.1,
        "compact_threshold": 0.1,     # systole below which the surrogate is not used
        "flip_cap": 1_000_000,
        "window_cap": 2_000_000,
        "budget_candidates": 200_000,
        "word_budget": 200_000,
    })
    return d


DEFAULTS = _defaults()


@dataclass(frozen=True)
class Registry:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    source: str = "defaults"

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def snapshot(self) -> dict:
        """Sorted copy, safe to embed in outputs."""
        return {k: self.values[k] for k in sorted(self.values)}

    def with_overrides(self, **kw) -> "Registry":
        v = dict(self.values)
        v.update(kw)
        return Registry(v, self.source)


def _read(path: Path) -> dict:
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            raise ValidationError("TOML config needs Python >= 3.11; use JSON") from None
        return tomllib.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: {exc}") from None


def load_registry(path: str | os.PathLike | None = None) -> Registry:
    """Defaults overlaid with the config file (explicit path, else the env var)."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return Registry()
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    raw = _read(p)
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping")
    vals = dict(DEFAULTS)
    for k, v in raw.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ValidationError(f"config entry {k!r} must be a number")
        vals[k] = v
    return Registry(vals, str(p))
