"""Versioned JSON envelope shared by linear, forest and blend artifacts."""

from __future__ import annotations

import json
from pathlib import Path

from . import blend, forest, linmod

FORMAT = "damvol-model"
VERSION = 1


def _encode(model) -> tuple[str, dict]:
    if isinstance(model, linmod.LinearFit):
        return "linear", linmod.to_dict(model)
    if isinstance(model, forest.Forest):
        return "forest", forest.to_dict(model)
    if isinstance(model, blend.BlendModel):
        return "blend", blend.to_dict(model)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def envelope(name: str, model, rendition: str = "", feature_params: dict | None = None,
             label: str | None = None) -> dict:
    family, body = _encode(model)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "name": name,
        "family": family,
        "rendition": rendition,
        "feature_params": feature_params or {},
        "model": body,
    }
    if label is not None:
        doc["label"] = label
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save(path: str | Path, name: str, model, rendition: str = "",
         feature_params: dict | None = None, label: str | None = None) -> dict:
    doc = envelope(name, model, rendition, feature_params, label)
    Path(path).write_text(dumps(doc), encoding="utf-8")
    return doc


def decode(doc: dict):
    if doc.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported artifact version {doc.get('version')}")
    family = doc["family"]
    if family == "linear":
        return linmod.from_dict(doc["model"])
    if family == "forest":
        return forest.from_dict(doc["model"])
    if family == "blend":
        return blend.from_dict(doc["model"])
    raise ValueError(f"unknown artifact family {family!r}")


def load(path: str | Path) -> tuple[dict, object]:
    """Return ``(envelope, model)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return doc, decode(doc)
