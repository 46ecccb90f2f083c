"""Scenario configuration: a single YAML file describing one model instance.

Model parameters carry no defaults -- every field must be spelled out --
and all construction invariants are re-validated here so that error
messages point at the offending file, line and key.  Run options (seed,
path counts, output directory) live under ``run`` and may be overridden
by CLI flags.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .contracts import Contract
from .criterion import EconomicParams
from .errors import ConfigError, ErgodicityError
from .hawkes import HawkesParams
from .marks import ImpactSpec, MarkLaw

__all__ = ["ScenarioConfig", "RunOptions", "load_config", "parse_contract_spec"]


class _LineDict(dict):
    """Mapping that remembers the source line of each key."""

    def __init__(self):
        super().__init__()
        self.key_lines: dict[str, int] = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader: _LineLoader, node):
    out = _LineDict()
    loader.flatten_mapping(node)
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass(frozen=True)
class RunOptions:
    seed: int | None = None
    n_paths: int = 10_000
    output_dir: Path = Path("out")
    grid_points: int = 200
    qp_atoms: int = 400
    lambda_grid: tuple[float, ...] = ()
    dump_events: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    path: Path
    sha256: str
    hawkes: HawkesParams
    economic: EconomicParams
    contract: Contract | None
    run: RunOptions = field(default_factory=RunOptions)

    @property
    def marks(self) -> MarkLaw:
        return self.hawkes.marks

    @property
    def impact(self) -> ImpactSpec:
        return self.hawkes.impact

    def require_seed(self, subcommand: str) -> int:
        if self.run.seed is None:
            raise ConfigError(
                f"{self.path}: run.seed is required for the stochastic "
                f"'{subcommand}' subcommand (wall-clock seeding is not allowed)"
            )
        return self.run.seed


class _Section:
    """Typed access into one mapping of the config with located errors."""

    def __init__(self, path: Path, name: str, raw):
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: section '{name}' must be a mapping")
        self.path = path
        self.name = name
        self.raw = raw

    def _where(self, key: str) -> str:
        line = getattr(self.raw, "key_lines", {}).get(key)
        loc = f"{self.path}:{line}" if line else f"{self.path}"
        return f"{loc}: {self.name}.{key}"

    def require(self, key: str):
        if key not in self.raw:
            raise ConfigError(f"{self.path}: {self.name}.{key} is required")
        return self.raw[key]

    def number(self, key: str) -> float:
        val = self.require(key)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{self._where(key)}: expected a number, got {val!r}")
        if not math.isfinite(float(val)):
            raise ConfigError(f"{self._where(key)}: must be finite, got {val!r}")
        return float(val)

    def integer(self, key: str, default=None):
        if key not in self.raw and default is not None:
            return default
        val = self.require(key)
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{self._where(key)}: expected an integer, got {val!r}")
        return val

    def string(self, key: str) -> str:
        val = self.require(key)
        if not isinstance(val, str):
            raise ConfigError(f"{self._where(key)}: expected a string, got {val!r}")
        return val

    def reject_unknown(self, allowed: set[str]) -> None:
        unknown = set(self.raw) - allowed
        if unknown:
            raise ConfigError(
                f"{self.path}: unknown keys in '{self.name}': {sorted(unknown)}"
            )


def _build_marks(path: Path, raw) -> MarkLaw:
    sec = _Section(path, "marks", raw)
    family = sec.string("family").lower()
    mass = sec.number("total_mass") if "total_mass" in raw else 1.0
    try:
        if family == "exponential":
            sec.reject_unknown({"family", "mean", "total_mass"})
            return MarkLaw.exponential(sec.number("mean"), total_mass=mass)
        if family == "lognormal":
            sec.reject_unknown({"family", "mu", "sigma", "total_mass"})
            return MarkLaw.lognormal(sec.number("mu"), sec.number("sigma"), total_mass=mass)
        if family == "discrete":
            sec.reject_unknown({"family", "atoms", "total_mass"})
            atoms = sec.require("atoms")
            if not isinstance(atoms, list) or not all(
                isinstance(p, list) and len(p) == 2 for p in atoms
            ):
                raise ConfigError(f"{sec._where('atoms')}: expected a list of [z, weight] pairs")
            return MarkLaw.discrete(
                [(float(z), float(w)) for z, w in atoms],
                total_mass=mass if "total_mass" in raw else None,
            )
    except ValueError as exc:
        raise ConfigError(f"{path}: marks: {exc}") from exc
    raise ConfigError(f"{sec._where('family')}: unknown mark family {family!r}")


def _build_impact(path: Path, raw) -> ImpactSpec:
    sec = _Section(path, "hawkes.impact", raw)
    sec.reject_unknown({"kind", "value"})
    kind = sec.string("kind").lower()
    try:
        return ImpactSpec(kind=kind, value=sec.number("value"))
    except ValueError as exc:
        raise ConfigError(f"{path}: hawkes.impact: {exc}") from exc


def _build_contract(path: Path, raw) -> Contract:
    sec = _Section(path, "contract", raw)
    shape = sec.string("shape").lower()
    try:
        if shape == "zero":
            return Contract.zero()
        if shape == "full":
            return Contract.full()
        if shape == "deductible":
            return Contract.deductible(sec.number("a"))
        if shape == "proportional":
            return Contract.proportional(sec.number("k"))
        if shape == "three_piece":
            return Contract.three_piece(sec.number("a"), sec.number("b"))
        if shape == "tabulated":
            knots = sec.require("knots")
            return Contract.tabulated([(float(z), float(v)) for z, v in knots])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: contract: {exc}") from exc
    raise ConfigError(f"{sec._where('shape')}: unknown contract shape {shape!r}")


def parse_contract_spec(spec: str) -> Contract:
    """Contract from a CLI shorthand like ``three_piece:a=1,b=3``."""
    name, _, rest = spec.partition(":")
    kwargs: dict[str, float] = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ConfigError(f"bad contract spec item {item!r} in {spec!r}")
            kwargs[key.strip()] = float(val)
    name = name.strip().lower()
    try:
        if name == "zero":
            return Contract.zero()
        if name == "full":
            return Contract.full()
        if name == "deductible":
            return Contract.deductible(kwargs["a"])
        if name == "proportional":
            return Contract.proportional(kwargs["k"])
        if name == "three_piece":
            return Contract.three_piece(kwargs["a"], kwargs["b"])
    except KeyError as exc:
        raise ConfigError(f"contract spec {spec!r} is missing parameter {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"contract spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown contract shape {name!r} in spec {spec!r}")


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and fully validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    digest = hashlib.sha256(text).hexdigest()
    try:
        raw = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - {"hawkes", "marks", "economic", "contract", "run"}
    if unknown:
        raise ConfigError(f"{path}: unknown top-level sections: {sorted(unknown)}")

    for section in ("hawkes", "marks", "economic"):
        if section not in raw:
            raise ConfigError(f"{path}: missing required section '{section}'")

    marks = _build_marks(path, raw["marks"])
    hsec = _Section(path, "hawkes", raw["hawkes"])
    hsec.reject_unknown({"lambda0", "lambda_bar", "beta", "impact"})
    impact = _build_impact(path, hsec.require("impact"))
    try:
        hawkes = HawkesParams(
            lambda0=hsec.number("lambda0"),
            lambda_bar=hsec.number("lambda_bar"),
            beta=hsec.number("beta"),
            impact=impact,
            marks=marks,
        )
    except (ValueError, ErgodicityError) as exc:
        raise ConfigError(f"{path}: hawkes: {exc}") from exc

    esec = _Section(path, "economic", raw["economic"])
    esec.reject_unknown({"r0", "rho", "c", "gamma", "horizon"})
    try:
        econ = EconomicParams(
            r0=esec.number("r0"),
            rho=esec.number("rho"),
            c=esec.number("c"),
            gamma=esec.number("gamma"),
            horizon=esec.number("horizon"),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: economic: {exc}") from exc

    contract = _build_contract(path, raw["contract"]) if "contract" in raw else None

    run = RunOptions()
    if "run" in raw:
        rsec = _Section(path, "run", raw["run"])
        rsec.reject_unknown(
            {"seed", "n_paths", "output_dir", "grid_points", "qp_atoms", "lambda_grid",
             "dump_events"}
        )
        lambda_grid = raw["run"].get("lambda_grid", [])
        if lambda_grid and not all(isinstance(v, (int, float)) for v in lambda_grid):
            raise ConfigError(f"{path}: run.lambda_grid must be a list of numbers")
        run = RunOptions(
            seed=rsec.integer("seed") if "seed" in raw["run"] else None,
            n_paths=rsec.integer("n_paths", RunOptions.n_paths),
            output_dir=Path(raw["run"].get("output_dir", RunOptions.output_dir)),
            grid_points=rsec.integer("grid_points", RunOptions.grid_points),
            qp_atoms=rsec.integer("qp_atoms", RunOptions.qp_atoms),
            lambda_grid=tuple(float(v) for v in lambda_grid),
            dump_events=bool(raw["run"].get("dump_events", False)),
        )

    return ScenarioConfig(
        path=path, sha256=digest, hawkes=hawkes, economic=econ, contract=contract, run=run
    )
