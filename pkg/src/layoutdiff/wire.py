"""JSON wire format for conditions, shared by the CLI and the HTTP service.

A generation request pins attributes per slot:

    {"n_components": 4,
     "condition": [
        {"index": 0, "class": "title"},
        {"index": 1, "class": "text", "box": [0.3, 0.5, 0.4, 0.6]},
        {"index": 2, "box": [0.7, 0.5, 0.4, 0.6], "size_only": true}
     ],
     "seed": 7, "num_samples": 2}

``box`` pins position and size; with ``size_only`` only the w/h half is
pinned.  Omitted attributes are generated.
"""
from __future__ import annotations

from .core import ConditionSpec, DatasetSchema, Layout, LayoutError


class WireError(ValueError):
    """Malformed request payload; carries a field path for error reporting."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field
        self.message = message


def condition_to_spec(
    n_components: int, condition: list[dict], schema: DatasetSchema
) -> ConditionSpec:
    if not isinstance(n_components, int) or not 1 <= n_components <= schema.n_max:
        raise WireError("n_components", f"must be an integer in [1, {schema.n_max}]")
    spec = ConditionSpec.empty(n_components)
    for pos, item in enumerate(condition or []):
        where = f"condition[{pos}]"
        if not isinstance(item, dict):
            raise WireError(where, "each condition entry must be an object")
        idx = item.get("index")
        if not isinstance(idx, int) or not 0 <= idx < n_components:
            raise WireError(f"{where}.index", f"must be an integer in [0, {n_components - 1}]")
        if "class" in item and item["class"] is not None:
            name = item["class"]
            try:
                label = schema.label(name)
            except LayoutError:
                raise WireError(
                    f"{where}.class",
                    f"unknown class {name!r}; schema classes: {list(schema.classes)}",
                ) from None
            spec.cond_cls[idx] = True
            spec.pin_cls[idx] = label.index
        box = item.get("box")
        if box is not None:
            if not isinstance(box, (list, tuple)) or len(box) != 4:
                raise WireError(f"{where}.box", "must be [cx, cy, w, h]")
            try:
                cx, cy, w, h = (float(v) for v in box)
            except (TypeError, ValueError):
                raise WireError(f"{where}.box", "entries must be numbers") from None
            if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
                raise WireError(f"{where}.box", "w and h must lie in (0, 1]")
            spec.cond_size[idx] = True
            spec.pin_size[idx] = (w, h)
            if not item.get("size_only", False):
                if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
                    raise WireError(f"{where}.box", "cx and cy must lie in [0, 1]")
                spec.cond_pos[idx] = True
                spec.pin_pos[idx] = (cx, cy)
        elif item.get("size_only", False):
            raise WireError(f"{where}.size_only", "size_only needs a box to take w/h from")
    try:
        spec.validate(schema)
    except LayoutError as exc:
        raise WireError("condition", str(exc)) from exc
    return spec


def spec_to_condition(spec: ConditionSpec, schema: DatasetSchema) -> list[dict]:
    """Inverse of condition_to_spec for pinned-attribute round trips."""
    items: list[dict] = []
    for i in range(spec.n_components):
        item: dict = {}
        if spec.cond_cls[i]:
            item["class"] = schema.classes[spec.pin_cls[i]]
        if spec.cond_size[i]:
            w, h = spec.pin_size[i]
            if spec.cond_pos[i]:
                cx, cy = spec.pin_pos[i]
                item["box"] = [cx, cy, w, h]
            else:
                item["box"] = [0.5, 0.5, w, h]
                item["size_only"] = True
        if item:
            item["index"] = i
            items.append(item)
    return items


def scenario_spec(layout: Layout, scenario: str) -> ConditionSpec:
    """The three named conditioning scenarios, built from a reference layout."""
    if scenario == "category":
        return ConditionSpec.from_layout(layout, cls_flags=True)
    if scenario == "category-size":
        return ConditionSpec.from_layout(layout, cls_flags=True, size_flags=True)
    if scenario == "unconditioned":
        return ConditionSpec.empty(layout.n)
    raise WireError("mode", f"unknown scenario {scenario!r}")
