"""DOT and JSON serialization of kill chain attack graphs."""

from __future__ import annotations

import json
from importlib import resources
from types import MappingProxyType
from typing import Any

from .domain import AssetCategory, SecurityProperty
from .errors import SchemaError
from .graph import AssetRef, Kcag, KcagVertex, PhaseOrder, VertexKind
from .rules import parse_fact

FORMAT_VERSION = 1

# colors follow the usual KCAG legend
_STYLE = {
    VertexKind.CONTROL: 'shape=ellipse, color="forestgreen"',
    VertexKind.PROPERTY: 'shape=ellipse, color="blue"',
    VertexKind.COUNTERMEASURE: 'shape=ellipse, color="saddlebrown"',
    VertexKind.TECHNIQUE: 'shape=box, color="black"',
    VertexKind.GOAL: 'shape=doublecircle, color="darkred"',
}


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(kcag: Kcag, name: str = "kcag") -> str:
    lines = [f'digraph "{_dot_escape(name)}" {{', "  rankdir=LR;", '  node [fontname="Helvetica"];']
    for v in kcag.vertices:
        text = _dot_escape(f"{v.id}: {v.label}")
        if v.kind is VertexKind.TECHNIQUE:
            text += "\\n[" + _dot_escape(", ".join(v.phases)) + "]"
        lines.append(f'  n{v.id} [label="{text}", {_STYLE[v.kind]}, kind="{v.kind.value}"];')
    for u, w in kcag.edges:
        lines.append(f"  n{u} -> n{w};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _asset_dict(asset: AssetRef | None) -> dict | None:
    if asset is None:
        return None
    return {"category": asset.category.value, "ref": asset.ref, "level": asset.level,
            "property": asset.property.value if asset.property else None}


def to_dict(kcag: Kcag) -> dict:
    vertices = []
    for v in kcag.vertices:
        entry: dict[str, Any] = {"id": v.id, "kind": v.kind.value, "label": v.label,
                                 "phase": list(v.phases), "asset": _asset_dict(v.asset)}
        if v.fact is not None:
            entry["fact"] = str(v.fact)
        if v.attack_id is not None:
            entry["attack_id"] = v.attack_id
            entry["name"] = v.name
        if v.countermeasure is not None:
            entry["countermeasure"] = v.countermeasure
        vertices.append(entry)
    return {
        "format": "kcag",
        "version": FORMAT_VERSION,
        "phases": list(kcag.phases),
        "phase_order": kcag.order.value,
        "mapping": {k: sorted(v, key=_phase_rank(kcag)) for k, v in sorted(kcag.mapping.items())},
        "forbidden": [list(p) for p in sorted(kcag.forbidden)],
        "vertices": vertices,
        "edges": [list(e) for e in kcag.edges],
    }


def _phase_rank(kcag: Kcag):
    return lambda p: (kcag.phases.index(p) if p in kcag.phases else len(kcag.phases), p)


def to_json(kcag: Kcag) -> str:
    return json.dumps(to_dict(kcag), indent=2) + "\n"


def from_dict(doc: dict) -> Kcag:
    """Rebuild a :class:`Kcag` from :func:`to_dict` output."""
    if doc.get("format") != "kcag" or doc.get("version") != FORMAT_VERSION:
        raise SchemaError("not a version-1 KCAG document")
    vertices = []
    try:
        for e in doc["vertices"]:
            asset = None
            if e.get("asset"):
                a = e["asset"]
                prop = SecurityProperty(a["property"]) if a.get("property") else None
                asset = AssetRef(AssetCategory(a["category"]), a["ref"], a["level"], prop)
            vertices.append(KcagVertex(
                id=e["id"], kind=VertexKind(e["kind"]), label=e["label"],
                fact=parse_fact(e["fact"]) if "fact" in e else None, asset=asset,
                attack_id=e.get("attack_id"), name=e.get("name", ""), phases=tuple(e.get("phase", ())),
                countermeasure=e.get("countermeasure")))
        edges = tuple(sorted((int(u), int(w)) for u, w in doc["edges"]))
        mapping = {k: frozenset(v) for k, v in doc.get("mapping", {}).items()}
        return Kcag(tuple(sorted(vertices, key=lambda v: v.id)), edges, tuple(doc["phases"]),
                    MappingProxyType(mapping), frozenset(tuple(p) for p in doc.get("forbidden", ())),
                    PhaseOrder(doc.get("phase_order", "monotone")))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed KCAG document: {exc}") from exc


def from_json(text: str) -> Kcag:
    return from_dict(json.loads(text))


def json_schema() -> dict:
    return json.loads(resources.files("kcag").joinpath("data/kcag.schema.json").read_text(encoding="utf-8"))
