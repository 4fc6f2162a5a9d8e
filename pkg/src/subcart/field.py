"""Derivations of the smooth functions on an ambient patch.

A tangent field is stored as one expression per ambient coordinate.  Acting
on a scalar expression contracts the components against exact partial
derivatives, and the commutator of two fields is again a field, computed
symbolically.  Tangency to any particular space is not checked at
construction; flow and stratification checks surface violations where they
matter.
"""

from __future__ import annotations

import json
from typing import Optional, Sequence

import numpy as np

from .expr import Expr, add, as_expr, compile_vector, diff, mul, parse, to_text, ZERO


class FieldError(ValueError):
    """Raised for malformed fields or dimension mismatches."""


class TangentField:
    """Vector of component expressions with a human-readable label."""

    def __init__(self, label: str, components: Sequence[Expr]):
        if not components:
            raise FieldError("a field needs at least one component")
        self.label = str(label)
        self.components: tuple[Expr, ...] = tuple(as_expr(c) for c in components)
        self.dim = len(self.components)
        self._value = compile_vector(self.components)
        self._jac_rows: Optional[tuple[tuple[Expr, ...], ...]] = None
        self._jac_value = None

    def __repr__(self) -> str:
        comps = ", ".join(to_text(c) for c in self.components)
        return f"TangentField({self.label!r}, [{comps}])"

    def __call__(self, point: Sequence[float]) -> np.ndarray:
        return np.array(self._value(point), dtype=float)

    def value(self, point: Sequence[float]) -> list[float]:
        return self._value(point)

    def apply(self, f: Expr) -> Expr:
        """Directional derivative of ``f`` along this field, as an expression."""
        out: Expr = ZERO
        for i, comp in enumerate(self.components):
            out = add(out, mul(comp, diff(f, i)))
        return out

    def jacobian_exprs(self) -> tuple[tuple[Expr, ...], ...]:
        """Rows J[i][j] = d component_i / d x_j, cached."""
        if self._jac_rows is None:
            self._jac_rows = tuple(
                tuple(diff(c, j) for j in range(self.dim)) for c in self.components
            )
        return self._jac_rows

    def jacobian_at(self, point: Sequence[float]) -> np.ndarray:
        if self._jac_value is None:
            rows = self.jacobian_exprs()
            flat = [e for row in rows for e in row]
            self._jac_value = compile_vector(flat)
        vals = self._jac_value(point)
        return np.array(vals, dtype=float).reshape(self.dim, self.dim)

    def scaled(self, factor, label: Optional[str] = None) -> "TangentField":
        """Pointwise multiple of this field by a scalar expression or number."""
        f = as_expr(factor)
        lab = label if label is not None else f"({to_text(f)})*{self.label}"
        return TangentField(lab, [mul(f, c) for c in self.components])

    def to_json_dict(self) -> dict:
        return {"label": self.label, "components": [to_text(c) for c in self.components]}

    @classmethod
    def from_json_dict(cls, d: dict, aliases: Optional[Sequence[str]] = None) -> "TangentField":
        comps = d["components"]
        return cls(d["label"], [parse(c, len(comps), aliases) for c in comps])

    @classmethod
    def from_json(cls, text: str, aliases: Optional[Sequence[str]] = None) -> "TangentField":
        return cls.from_json_dict(json.loads(text), aliases)


def lie_bracket(x: TangentField, y: TangentField, label: Optional[str] = None) -> TangentField:
    """Commutator field: component i is x(y_i) - y(x_i)."""
    if x.dim != y.dim:
        raise FieldError(f"bracket needs matching dimensions, got {x.dim} and {y.dim}")
    comps = [add(x.apply(yc), -y.apply(xc)) for xc, yc in zip(x.components, y.components)]
    lab = label if label is not None else f"[{x.label},{y.label}]"
    return TangentField(lab, comps)


def pushforward_at(space, x_field: TangentField, t: float, y_field: TangentField, point, options=None):
    """Transport y_field(point) along the time-t flow of x_field.

    Returns (image_point, transported_vector).  The vector is carried by the
    flow's derivative, integrated as a matrix-free variational system
    alongside the base trajectory.
    """
    from .flow import transport_vector

    return transport_vector(space, x_field, t, y_field, point, options)
