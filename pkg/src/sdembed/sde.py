"""Polynomial-coefficient SDE models dx = a(x) dt + B(x) dW.

The drift vector a and diffusion matrix B are sparse polynomials, which
keeps the image of any monomial under the backward-equation generator a
finite polynomial.  The generator acting on observables is

    L = sum_i a_i(x) d/dx_i + 1/2 sum_{i,j} [B(x) B(x)^T]_{i,j} d2/dx_i dx_j

and `adjoint_apply` returns L x^n exactly.  Two builtin models are
provided: the Ornstein-Uhlenbeck process (1-D, linear) and the noisy van
der Pol oscillator (2-D, cubic drift).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .polynomial import MultiIndex, Polynomial

__all__ = [
    "SdeModel",
    "DiffusionProduct",
    "ModelParseError",
    "builtin_model",
    "diffusion_product",
    "adjoint_apply",
    "shift_model_origin",
    "parse_model",
    "model_to_dict",
    "read_model",
    "write_model",
]


class ModelParseError(ValueError):
    """Malformed model document; the message carries the failing location."""


@dataclass(frozen=True)
class SdeModel:
    """SDE with polynomial drift vector and polynomial diffusion matrix."""

    dim: int
    drift: tuple[Polynomial, ...]
    diffusion: tuple[tuple[Polynomial, ...], ...]
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "drift", tuple(self.drift))
        object.__setattr__(self, "diffusion", tuple(tuple(row) for row in self.diffusion))
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if len(self.drift) != self.dim:
            raise ValueError(f"drift has {len(self.drift)} entries, expected {self.dim}")
        if len(self.diffusion) != self.dim or any(len(row) != self.dim for row in self.diffusion):
            raise ValueError(f"diffusion must be a {self.dim}x{self.dim} matrix")
        for p in self.drift:
            if p.dim != self.dim:
                raise ValueError("drift polynomial dimension mismatch")
        for row in self.diffusion:
            for p in row:
                if p.dim != self.dim:
                    raise ValueError("diffusion polynomial dimension mismatch")

    @cached_property
    def fingerprint(self) -> str:
        """Stable hex digest of the model content (name excluded)."""
        doc = model_to_dict(self)
        doc.pop("name", None)
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class DiffusionProduct:
    """The symmetric polynomial matrix B(x) B(x)^T."""

    entries: tuple[tuple[Polynomial, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(row) for row in self.entries))

    def __getitem__(self, ij: tuple[int, int]) -> Polynomial:
        i, j = ij
        return self.entries[i][j]


def _require_params(name: str, params: dict, required: tuple[str, ...]) -> dict[str, float]:
    missing = [k for k in required if k not in params]
    if missing:
        raise ValueError(f"model {name!r} is missing parameters {missing}")
    extra = [k for k in params if k not in required]
    if extra:
        raise ValueError(f"model {name!r} got unknown parameters {extra}")
    return {k: float(params[k]) for k in required}


def builtin_model(name: str, params: dict | None = None) -> SdeModel:
    """Construct one of the builtin models by name.

    "ornstein-uhlenbeck" (alias "ou") takes gamma and sigma:
        dx = -gamma x dt + sigma dW.
    "van-der-pol" (alias "vdp") takes epsilon, nu11, nu22:
        dx1 = x2 dt,  dx2 = (epsilon x2 (1 - x1^2) - x1) dt,
        with diffusion diag(nu11, nu22).
    """
    params = dict(params or {})
    key = name.strip().lower()
    if key in ("ornstein-uhlenbeck", "ou"):
        p = _require_params(name, params, ("gamma", "sigma"))
        drift = (Polynomial(1, {(1,): -p["gamma"]}),)
        diffusion = ((Polynomial.constant(1, p["sigma"]),),)
        return SdeModel(1, drift, diffusion, name="ornstein-uhlenbeck")
    if key in ("van-der-pol", "vdp"):
        p = _require_params(name, params, ("epsilon", "nu11", "nu22"))
        eps = p["epsilon"]
        drift = (
            Polynomial(2, {(0, 1): 1.0}),
            Polynomial(2, {(0, 1): eps, (2, 1): -eps, (1, 0): -1.0}),
        )
        diffusion = (
            (Polynomial.constant(2, p["nu11"]), Polynomial.zero(2)),
            (Polynomial.zero(2), Polynomial.constant(2, p["nu22"])),
        )
        return SdeModel(2, drift, diffusion, name="van-der-pol")
    raise ValueError(f"unknown builtin model {name!r}")


def diffusion_product(model: SdeModel) -> DiffusionProduct:
    """B B^T as exact polynomial products; symmetric by construction."""
    d = model.dim
    rows = []
    for i in range(d):
        row = []
        for j in range(d):
            acc = Polynomial.zero(d)
            for k in range(d):
                acc = acc + model.diffusion[i][k] * model.diffusion[j][k]
            row.append(acc)
        rows.append(tuple(row))
    return DiffusionProduct(tuple(rows))


def adjoint_apply(model: SdeModel, index: MultiIndex, product: DiffusionProduct | None = None) -> Polynomial:
    """Image of the monomial x^index under the backward-equation generator.

    Returns sum_i a_i(x) d(x^n)/dx_i + 1/2 sum_{i,j} [BB^T]_{i,j}(x)
    d2(x^n)/dx_i dx_j as an exact polynomial.  Pass a precomputed
    `product` to reuse BB^T across many monomials.
    """
    d = model.dim
    index = tuple(int(e) for e in index)
    if len(index) != d:
        raise ValueError(f"index length {len(index)} != model dimension {d}")
    if product is None:
        product = diffusion_product(model)
    mono = Polynomial.monomial(d, index)
    out = Polynomial.zero(d)
    firsts = [mono.derivative(i) for i in range(d)]
    for i in range(d):
        if not firsts[i].is_zero():
            out = out + model.drift[i] * firsts[i]
    for i in range(d):
        for j in range(d):
            entry = product[i, j]
            if entry.is_zero():
                continue
            second = firsts[i].derivative(j)
            if not second.is_zero():
                out = out + 0.5 * entry * second
    return out


def shift_model_origin(model: SdeModel, offset) -> SdeModel:
    """Model expressed in translated coordinates y = x - offset.

    A pure translation leaves the noise term structure unchanged, so both
    drift and diffusion are simply re-expanded around the new origin.
    """
    offset = tuple(float(c) for c in offset)
    if len(offset) != model.dim:
        raise ValueError(f"offset length {len(offset)} != model dimension {model.dim}")
    drift = tuple(p.shift(offset) for p in model.drift)
    diffusion = tuple(tuple(p.shift(offset) for p in row) for row in model.diffusion)
    return SdeModel(model.dim, drift, diffusion, name=model.name)


# -- serialization -----------------------------------------------------------


def _terms_to_list(p: Polynomial) -> list[dict]:
    return [{"coef": c, "powers": list(n)} for n, c in p.terms.items()]


def _terms_from_list(doc, dim: int, where: str) -> Polynomial:
    if not isinstance(doc, list):
        raise ModelParseError(f"{where}: expected a list of terms")
    acc: dict[MultiIndex, float] = {}
    for t, term in enumerate(doc):
        loc = f"{where}[{t}]"
        if not isinstance(term, dict) or "coef" not in term or "powers" not in term:
            raise ModelParseError(f"{loc}: expected an object with 'coef' and 'powers'")
        powers = term["powers"]
        if not isinstance(powers, list) or len(powers) != dim:
            raise ModelParseError(f"{loc}.powers: expected {dim} entries")
        if any(not isinstance(e, int) or e < 0 for e in powers):
            raise ModelParseError(f"{loc}.powers: exponents must be non-negative integers")
        if not isinstance(term["coef"], (int, float)):
            raise ModelParseError(f"{loc}.coef: expected a number")
        key = tuple(powers)
        acc[key] = acc.get(key, 0.0) + float(term["coef"])
    return Polynomial(dim, acc)


def model_to_dict(model: SdeModel) -> dict:
    doc = {
        "dim": model.dim,
        "drift": [_terms_to_list(p) for p in model.drift],
        "diffusion": [[_terms_to_list(p) for p in row] for row in model.diffusion],
    }
    if model.name is not None:
        doc["name"] = model.name
    return doc


def parse_model(doc: dict) -> SdeModel:
    """Build an SdeModel from a parsed config document.

    Raises ModelParseError with the offending location for malformed input.
    """
    if not isinstance(doc, dict):
        raise ModelParseError("top level: expected an object")
    if "dim" not in doc or not isinstance(doc["dim"], int) or doc["dim"] < 1:
        raise ModelParseError("dim: expected a positive integer")
    dim = doc["dim"]
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise ModelParseError("name: expected a string")
    drift_doc = doc.get("drift")
    if not isinstance(drift_doc, list) or len(drift_doc) != dim:
        raise ModelParseError(f"drift: expected a list of {dim} term lists")
    diff_doc = doc.get("diffusion")
    if not isinstance(diff_doc, list) or len(diff_doc) != dim:
        raise ModelParseError(f"diffusion: expected a {dim}x{dim} matrix of term lists")
    drift = tuple(_terms_from_list(row, dim, f"drift[{i}]") for i, row in enumerate(drift_doc))
    rows = []
    for i, row in enumerate(diff_doc):
        if not isinstance(row, list) or len(row) != dim:
            raise ModelParseError(f"diffusion[{i}]: expected {dim} term lists")
        rows.append(tuple(_terms_from_list(cell, dim, f"diffusion[{i}][{j}]") for j, cell in enumerate(row)))
    return SdeModel(dim, drift, tuple(rows), name=name)


def read_model(path) -> SdeModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: invalid JSON ({exc})") from exc
    return parse_model(doc)


def write_model(model: SdeModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")
