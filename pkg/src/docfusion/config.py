"""Flat ``key=value`` run configuration with command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

from .core import FormatError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    """Every knob of the pipeline, with defaults such as beam 12,
    back-translation beam 4, k = 2 and grid step 0.1."""

    # randomness
    seed: int = 1
    # synthetic corpus
    n_parallel_docs: int = 400
    n_mono_docs: int = 1500
    n_tune_docs: int = 250
    n_challenge: int = 300
    n_valid_docs: int = 30
    n_test_docs: int = 100
    pronoun_rate: float = 0.6
    general_pronoun_rate: float = 0.1
    domain: int = 0
    # models
    k: int = 2
    order: int = 4
    discount: float = 0.75
    mu: float = 0.5
    ibm_iterations: int = 20
    # decoding
    beam: int = 12
    bt_beam: int = 4
    alpha: float = 1.0
    fusion_mode: str = "static"
    # scale tuning
    grid_step: float = 0.1
    grid_upper: float = 1.0
    restricted: bool = True
    objective: str = "bleu"
    lr: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    init_std: float = 0.01
    # back-translation
    pseudo_doc_min: int = 2
    pseudo_doc_max: int = 10

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def update(self, pairs: Iterable[tuple[str, str]], origin: str = "<override>") -> "RunConfig":
        """Return a copy with string values coerced to the field types."""
        types = {f.name: f.type for f in fields(self)}
        changes = {}
        for key, raw in pairs:
            if key not in types:
                raise KeyError(f"{origin}: unknown config key {key!r}")
            changes[key] = _coerce(key, raw, types[key], origin)
        return dataclasses.replace(self, **changes)

    def override(self, assignments: Iterable[str]) -> "RunConfig":
        pairs = []
        for a in assignments:
            key, sep, val = a.partition("=")
            if not sep:
                raise KeyError(f"override {a!r} is not key=value")
            pairs.append((key.strip(), val.strip()))
        return self.update(pairs)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        pairs = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise FormatError("expected key=value", path, n)
            pairs.append((key.strip(), val.strip()))
        try:
            return cls().update(pairs, origin=str(path))
        except (KeyError, ValueError) as exc:
            raise FormatError(exc.args[0], path) from None

    def dump(self) -> str:
        return "".join(f"{f.name}={_render(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump(), encoding="utf-8")


def _coerce(key: str, raw: str, typ, origin: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"{origin}: key {key!r} expects {typ}, got {raw!r}") from None


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)
