"""Parsing of measures, coefficients, functionals, and experiment configs.

Measures come either as a shorthand ``name:arg[:arg]`` or as the
``kind=... key=value ...`` form used in config files.  Built-in
functionals are referenced by ``name`` or ``name(argument)``.
"""
from __future__ import annotations

import json
import re
from typing import Optional

from .errors import ConfigurationError
from .measures import (
    AffineCoeff,
    BrownianKL,
    ConstantCoeff,
    Diffusion,
    DiffusionSpec,
    LinearCoeff,
    MeasureSpec,
    SeedSpec,
    StdNormal,
    UniformCube,
    is_path_measure,
)
from .paths import (
    Functional,
    Grid,
    NormKind,
    l1_integral_functional,
    path_coord_functional,
    sup_norm_functional,
    vector_coord_functional,
)
from .quantize import dist_to_codebook_functional


def parse_seed(text, stream_index: int = 0) -> SeedSpec:
    try:
        return SeedSpec(int(text), stream_index)
    except (TypeError, ValueError):
        raise ConfigurationError(f"seed must be an integer, got {text!r}") from None


def parse_coefficient(text: str):
    """constant:c, linear:c, or affine:c0,c1."""
    name, _, args = text.partition(":")
    try:
        if name == "constant":
            return ConstantCoeff(float(args))
        if name == "linear":
            return LinearCoeff(float(args))
        if name == "affine":
            c0, c1 = (float(tok) for tok in args.split(","))
            return AffineCoeff(c0, c1)
    except ValueError:
        raise ConfigurationError(f"bad coefficient arguments in {text!r}") from None
    raise ConfigurationError(
        f"unknown coefficient family {name!r}; use constant/linear/affine"
    )


def _parse_kv(text: str) -> dict:
    fields = {}
    for token in text.split():
        if "=" not in token:
            raise ConfigurationError(f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    return fields


def parse_measure(text: str) -> MeasureSpec:
    """Parse 'uniform_cube:2' shorthand or 'kind=... key=value ...' form."""
    text = text.strip()
    if "=" in text:
        fields = _parse_kv(text)
        kind = fields.pop("kind", None)
        if kind is None:
            raise ConfigurationError("measure description needs kind=...")
        return _measure_from_fields(kind, fields)
    name, _, rest = text.partition(":")
    args = rest.split(":") if rest else []
    try:
        if name == "uniform_cube":
            return UniformCube(int(args[0]))
        if name == "std_normal":
            return StdNormal(int(args[0]))
        if name == "brownian_kl":
            k_terms = int(args[0]) if args else 200
            grid = Grid.uniform(int(args[1])) if len(args) > 1 else None
            return BrownianKL(k_terms, grid)
    except (IndexError, ValueError):
        raise ConfigurationError(f"bad measure shorthand {text!r}") from None
    raise ConfigurationError(
        f"unknown measure {name!r}; use uniform_cube, std_normal, brownian_kl, "
        f"or the kind=diffusion form"
    )


def _measure_from_fields(kind: str, fields: dict) -> MeasureSpec:
    try:
        if kind == "uniform_cube":
            return UniformCube(int(fields["d"]))
        if kind == "std_normal":
            return StdNormal(int(fields["d"]))
        if kind == "brownian_kl":
            grid = Grid.uniform(int(fields["grid"])) if "grid" in fields else None
            return BrownianKL(int(fields.get("k_terms", 200)), grid)
        if kind == "diffusion":
            spec = diffusion_from_fields(fields)
            grid = Grid.uniform(int(fields["grid"])) if "grid" in fields else None
            return Diffusion(spec, int(fields["k_steps"]), grid)
    except KeyError as exc:
        raise ConfigurationError(f"measure kind={kind} missing field {exc}") from None
    except ValueError as exc:
        raise ConfigurationError(f"measure kind={kind}: {exc}") from None
    raise ConfigurationError(f"unknown measure kind {kind!r}")


def diffusion_from_fields(fields: dict) -> DiffusionSpec:
    drift = parse_coefficient(fields["drift"])
    diffusion = parse_coefficient(fields["diffusion"])
    m = int(fields.get("m", 1))
    u0 = tuple(float(tok) for tok in str(fields["u0"]).split(","))
    if len(u0) == 1 and m > 1:
        u0 = u0 * m
    return DiffusionSpec(drift.drift, diffusion.diffusion, u0, m)


_FUNCTIONAL_RE = re.compile(r"^([a-z0-9_]+)(?:\((.*)\))?$")


def parse_functional(text: str, measure: Optional[MeasureSpec]) -> Functional:
    """Resolve a built-in functional name against the measure's space.

    Built-ins: coord_at(t), abs_coord_at(t), sup_norm, l1_integral,
    dist_to_codebook(file).
    """
    match = _FUNCTIONAL_RE.match(text.strip())
    if not match:
        raise ConfigurationError(f"bad functional expression {text!r}")
    name, arg = match.group(1), match.group(2)
    pathlike = measure is not None and is_path_measure(measure)
    if name in ("coord_at", "abs_coord_at"):
        if arg is None:
            raise ConfigurationError(f"{name} needs an argument")
        absolute = name == "abs_coord_at"
        if pathlike:
            return path_coord_functional(float(arg), measure.grid, absolute)
        return vector_coord_functional(int(float(arg)), absolute)
    if name == "sup_norm":
        return sup_norm_functional()
    if name == "l1_integral":
        if not pathlike:
            raise ConfigurationError("l1_integral needs a path measure")
        return l1_integral_functional(measure.grid)
    if name == "dist_to_codebook":
        if arg is None:
            raise ConfigurationError("dist_to_codebook needs a codebook file")
        from .storage import load_codebook

        return dist_to_codebook_functional(load_codebook(arg))
    raise ConfigurationError(f"unknown functional {name!r}")


def parse_norm(text: str) -> NormKind:
    return NormKind.parse(text)


def load_experiment_config(path: str, seed: Optional[SeedSpec] = None):
    """Build a RateExperimentConfig from a JSON file.

    Keys: name, algorithm, measure, functional, ladder, replications,
    reference {kind, value|budget|k_ref+n_ref}, slope_bracket [lo, hi],
    transform, codebooks {kind, ...}, diffusion {...}, profile {alpha,
    beta}, grid, seed.
    """
    from .experiments import RateExperimentConfig
    from .quadrature import SmallBallProfile
    from .quantize import lloyd, uniform_midpoint_codebook, voronoi_weights
    from .storage import load_codebook

    with open(path) as handle:
        raw = json.load(handle)
    try:
        algorithm = raw["algorithm"]
        ladder = tuple(int(v) for v in raw["ladder"])
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing config key {exc}") from None

    measure = parse_measure(raw["measure"]) if "measure" in raw else None
    grid = Grid.uniform(int(raw["grid"])) if "grid" in raw else None
    if grid is None and measure is not None and is_path_measure(measure):
        grid = measure.grid
    functional_measure = measure
    if functional_measure is None and grid is not None:
        functional_measure = BrownianKL(200, grid)
    functional = parse_functional(raw["functional"], functional_measure)

    ref_raw = raw.get("reference", {"kind": "mc", "budget": 1_000_000})
    kind = ref_raw["kind"]
    if kind == "analytic":
        reference = ("analytic", float(ref_raw["value"]))
    elif kind == "mc":
        reference = ("mc", int(ref_raw["budget"]))
    elif kind == "euler":
        reference = ("euler", int(ref_raw["k_ref"]), int(ref_raw["n_ref"]))
    else:
        raise ConfigurationError(f"{path}: unknown reference kind {kind!r}")

    if seed is None:
        seed = SeedSpec(int(raw.get("seed", 0)))

    codebooks = None
    if algorithm == "vrmc":
        cb_raw = raw.get("codebooks", {"kind": "midpoint-grid"})
        codebooks = {}
        if cb_raw["kind"] == "midpoint-grid":
            if not isinstance(measure, UniformCube):
                raise ConfigurationError(
                    "midpoint-grid codebooks need a uniform_cube measure"
                )
            d = measure.d
            for n in ladder:
                per_axis = round(n ** (1.0 / d))
                if per_axis**d != n:
                    raise ConfigurationError(
                        f"ladder size {n} is not a {d}-th power; midpoint-grid "
                        f"codebooks need per-axis^d sizes"
                    )
                codebooks[n] = uniform_midpoint_codebook(d, per_axis)
        elif cb_raw["kind"] == "files":
            for n in ladder:
                codebooks[n] = load_codebook(cb_raw["paths"][str(n)])
        elif cb_raw["kind"] == "lloyd":
            w_samples = int(cb_raw.get("weight_samples", 200_000))
            for i, n in enumerate(ladder):
                cb = lloyd(measure, n, int(cb_raw.get("r", 2)),
                           seed=seed.child(900_000 + i))
                voronoi_weights(cb, measure, w_samples, seed.child(910_000 + i))
                codebooks[n] = cb
        else:
            raise ConfigurationError(f"unknown codebook source {cb_raw['kind']!r}")

    diffusion = None
    if algorithm == "euler":
        if "diffusion" in raw:
            diffusion = diffusion_from_fields(raw["diffusion"])
        elif isinstance(measure, Diffusion):
            diffusion = measure.spec
        else:
            raise ConfigurationError("euler experiments need a diffusion entry")

    profile = None
    if algorithm == "gauss-sub":
        prof = raw.get("profile", {"alpha": 2.0, "beta": 0.0})
        profile = SmallBallProfile(float(prof["alpha"]), float(prof.get("beta", 0.0)))

    bracket = raw.get("slope_bracket")
    return RateExperimentConfig(
        name=raw.get("name", "experiment"),
        algorithm=algorithm,
        ladder=ladder,
        functional=functional,
        measure=measure,
        replications=int(raw.get("replications", 200)),
        reference=reference,
        slope_bracket=tuple(bracket) if bracket else None,
        transform=raw.get("transform", "loglog"),
        seed=seed,
        codebooks=codebooks,
        diffusion=diffusion,
        profile=profile,
        grid=grid,
    )
