"""YAML problem-spec files with a strict schema.

Example::

    T: 1.0
    f:
      family: gaussian_like
      q: 0.7
      s: 1.0
    normalize: true            # optional, default true
    tolerances:                # optional
      rel_tail: 1.0e-14
    k_reach: 40                # optional override

Table densities use ``family: table`` with ``values`` and an optional
``extension`` (``geometric`` or ``ulc``) and ``k_max`` (keeps the first
``k_max + 1`` values). Unknown keys are errors.
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml

from .errors import InputError
from .poisson_core import SeriesTolerance
from .semigroup import DensityFunction, ProblemSpec

__all__ = ["parse_spec", "load_spec", "dump_spec", "spec_to_dict"]

_TOP_KEYS = {"T", "f", "normalize", "tolerances", "k_reach"}
_TOL_KEYS = {"rel_tail", "abs_floor"}
_FAMILY_KEYS = {
    "geometric": ({"a"}, {"b"}),
    "gaussian_like": ({"q"}, {"s"}),
    "poisson_kernel": ({"c"}, set()),
    "table": ({"values"}, {"extension", "k_max"}),
}


def _real(value, where: str) -> float:
    # YAML 1.1 reads "1e-14" (no dot) as a string, so numeric strings pass
    if isinstance(value, bool):
        raise InputError(f"{where}: expected a number, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise InputError(f"{where}: expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise InputError(f"{where}: must be finite, got {value!r}")
    return x


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InputError(f"{where}: expected an integer, got {value!r}")
    return value


def _mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise InputError(f"{where}: expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(d: dict, required: set, optional: set, where: str) -> None:
    unknown = set(d) - required - optional
    if unknown:
        raise InputError(f"{where}: unknown key(s) {sorted(map(str, unknown))}")
    missing = required - set(d)
    if missing:
        raise InputError(f"{where}: missing key(s) {sorted(missing)}")


def _density(d) -> DensityFunction:
    d = _mapping(d, "f")
    fam = d.get("family")
    if fam not in _FAMILY_KEYS:
        raise InputError(f"f.family must be one of {sorted(_FAMILY_KEYS)}, got {fam!r}")
    req, opt = _FAMILY_KEYS[fam]
    _check_keys(d, req | {"family"}, opt, "f")
    try:
        if fam == "geometric":
            return DensityFunction.geometric(_real(d["a"], "f.a"), _real(d.get("b", 0.0), "f.b"))
        if fam == "gaussian_like":
            return DensityFunction.gaussian_like(_real(d["q"], "f.q"), _real(d.get("s", 1.0), "f.s"))
        if fam == "poisson_kernel":
            return DensityFunction.poisson_kernel(_real(d["c"], "f.c"))
        values = d["values"]
        if not isinstance(values, list) or not values:
            raise InputError("f.values must be a non-empty list")
        values = [_real(v, f"f.values[{i}]") for i, v in enumerate(values)]
        if "k_max" in d:
            km = _integer(d["k_max"], "f.k_max")
            if not 0 <= km < len(values):
                raise InputError(f"f.k_max must lie in [0, {len(values) - 1}], got {km}")
            values = values[: km + 1]
        ext = d.get("extension", "geometric")
        return DensityFunction.table(values, extension=ext)
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"f: {exc}") from exc


def _tolerance(d) -> SeriesTolerance:
    d = _mapping(d, "tolerances")
    _check_keys(d, set(), _TOL_KEYS, "tolerances")
    kw = {k: _real(v, f"tolerances.{k}") for k, v in d.items()}
    try:
        return SeriesTolerance(**kw)
    except ValueError as exc:
        raise InputError(f"tolerances: {exc}") from exc


def spec_from_dict(data, rel_tail: float | None = None) -> ProblemSpec:
    """Build a :class:`ProblemSpec`; ``rel_tail`` overrides the file's value."""
    data = _mapping(data, "spec file")
    _check_keys(data, {"T", "f"}, _TOP_KEYS - {"T", "f"}, "spec file")
    T = _real(data["T"], "T")
    f = _density(data["f"])
    normalize = data.get("normalize", True)
    if not isinstance(normalize, bool):
        raise InputError(f"normalize must be true or false, got {normalize!r}")
    tol = _tolerance(data.get("tolerances", {}))
    if rel_tail is not None:
        try:
            tol = SeriesTolerance(rel_tail, tol.abs_floor)
        except ValueError as exc:
            raise InputError(f"--tol: {exc}") from exc
    k_reach = data.get("k_reach")
    if k_reach is not None:
        k_reach = _integer(k_reach, "k_reach")
    try:
        return ProblemSpec(T, f, normalize, tol, k_reach)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def parse_spec(text: str, rel_tail: float | None = None) -> ProblemSpec:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InputError(f"spec file is not valid YAML: {exc}") from exc
    return spec_from_dict(data, rel_tail)


def load_spec(path, rel_tail: float | None = None) -> ProblemSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read spec file {path}: {exc}") from exc
    return parse_spec(text, rel_tail)


def spec_to_dict(spec: ProblemSpec) -> dict:
    out = {"T": spec.T, "f": spec.f.to_dict(), "normalize": spec.normalize}
    out["tolerances"] = {"rel_tail": spec.tol.rel_tail, "abs_floor": spec.tol.abs_floor}
    if spec.k_reach != spec.default_reach():
        out["k_reach"] = spec.k_reach
    return out


def dump_spec(spec: ProblemSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False)
