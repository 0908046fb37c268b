"""Run configuration: TOML sections surface, curvature, solver, experiment, output."""
from __future__ import annotations

import hashlib
import json
import pathlib
import sys
from dataclasses import dataclass, field, fields

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from . import curvature
from .exceptions import ConfigError, MeshError
from .meanfield import ProblemSpec
from .mesh import gen_flat_cylinder, gen_flat_grid, gen_hemisphere, gen_pair_of_pants
from .minimize import SolverConfig

GENERATORS = {
    "hemisphere": {"k": 2, "refinement": 16},
    "cylinder": {"length": 1.0, "n_axial": 64, "n_circ": 16},
    "pants": {"boundary_lengths": [1.0, 1.0, 1.0], "refinement": 3},
    "grid": {"nx": 8, "ny": 8, "width": 1.0, "height": 1.0},
}
EMBEDDED = {"hemisphere", "cylinder", "grid"}
AZIMUTHAL = {"hemisphere", "cylinder"}
EXPERIMENTS = ("solve", "verify", "tm", "trace", "sharpness", "lambda_sweep", "perturb")
SOLVER_KEYS = {f.name for f in fields(SolverConfig)}


@dataclass
class RunConfig:
    surface: dict
    curvature: dict
    solver: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: pathlib.Path = field(default_factory=pathlib.Path.cwd)

    @property
    def generator(self) -> str:
        return self.surface["generator"]

    @property
    def kind(self) -> str:
        return self.experiment.get("kind", "solve")

    @property
    def seed(self) -> int:
        return int(self.solver.get("seed", 0))

    @property
    def out_dir(self) -> pathlib.Path:
        d = pathlib.Path(self.output.get("directory", "out"))
        return d if d.is_absolute() else self.base_dir / d

    @property
    def formats(self) -> set:
        return set(self.output.get("formats", ["json", "csv", "off"]))

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[solver]: {exc}") from None

    def surface_params(self) -> dict:
        params = dict(GENERATORS[self.generator])
        params.update({k: v for k, v in self.surface.items() if k != "generator"})
        return params

    def spec_hash(self, spec: ProblemSpec) -> str:
        h = hashlib.sha256()
        h.update(json.dumps({"surface": self.surface_params(), "generator": self.generator,
                             "curvature": self.curvature}, sort_keys=True, default=str).encode())
        h.update(np.ascontiguousarray(spec.K).tobytes())
        h.update(np.ascontiguousarray(spec.h).tobytes())
        return h.hexdigest()[:16]


def _section(raw, name, required=False) -> dict:
    if name not in raw:
        if required:
            raise ConfigError(f"missing required section [{name}]")
        return {}
    sec = raw[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def validate(cfg: RunConfig) -> RunConfig:
    gen = cfg.surface.get("generator")
    if gen not in GENERATORS:
        raise ConfigError(f"[surface] generator must be one of {sorted(GENERATORS)}, got {gen!r}")
    unknown = set(cfg.surface) - set(GENERATORS[gen]) - {"generator"}
    if unknown:
        raise ConfigError(f"[surface] unknown keys for {gen}: {sorted(unknown)}")
    for key in ("K", "h"):
        if key not in cfg.curvature:
            raise ConfigError(f"[curvature] missing {key}")
        entry = cfg.curvature[key]
        if isinstance(entry, dict) and entry.get("family") == "azimuthal_cosine" and gen not in AZIMUTHAL:
            raise ConfigError(f"[curvature] {key}: azimuthal families need a hemisphere or cylinder, not {gen}")
    bad = set(cfg.solver) - SOLVER_KEYS
    if bad:
        raise ConfigError(f"[solver] unknown keys: {sorted(bad)}")
    cfg.solver_config()
    if cfg.solver.get("symmetric"):
        if gen != "hemisphere":
            raise ConfigError("[solver] symmetric=true needs the hemisphere generator (k-fold symmetry)")
        k = int(cfg.surface_params()["k"])
        for key in ("K", "h"):
            if not curvature.is_symmetric_family(cfg.curvature[key], k):
                raise ConfigError(f"[curvature] {key} is not {k}-symmetric but symmetric=true was requested")
    if cfg.kind not in EXPERIMENTS:
        raise ConfigError(f"[experiment] kind must be one of {list(EXPERIMENTS)}, got {cfg.kind!r}")
    return cfg


def load_config(path, *, seed=None, out=None, refinement=None) -> RunConfig:
    path = pathlib.Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = RunConfig(
        surface=_section(raw, "surface", required=True),
        curvature=_section(raw, "curvature", required=True),
        solver=_section(raw, "solver"),
        experiment=_section(raw, "experiment"),
        output=_section(raw, "output"),
        base_dir=path.resolve().parent,
    )
    if seed is not None:
        cfg.solver["seed"] = int(seed)
    if out is not None:
        cfg.output["directory"] = str(pathlib.Path(out).resolve())
    if refinement is not None:
        gen = cfg.surface.get("generator")
        cfg.surface["n_axial" if gen == "cylinder" else "nx" if gen == "grid" else "refinement"] = int(refinement)
    return validate(cfg)


def build_surface(cfg: RunConfig):
    """(mesh, orbits or None)."""
    p = cfg.surface_params()
    try:
        if cfg.generator == "hemisphere":
            return gen_hemisphere(int(p["k"]), int(p["refinement"]))
        if cfg.generator == "cylinder":
            return gen_flat_cylinder(float(p["length"]), int(p["n_axial"]), int(p["n_circ"])), None
        if cfg.generator == "pants":
            return gen_pair_of_pants(tuple(float(x) for x in p["boundary_lengths"]), int(p["refinement"])), None
        return gen_flat_grid(int(p["nx"]), int(p["ny"]), float(p["width"]), float(p["height"])), None
    except (MeshError, TypeError, ValueError) as exc:
        raise ConfigError(f"[surface] {cfg.generator}: {exc}") from None


def build_spec(cfg: RunConfig) -> ProblemSpec:
    mesh, orbits = build_surface(cfg)
    K = curvature.evaluate(cfg.curvature["K"], mesh, where="interior", base_dir=cfg.base_dir)
    h = curvature.evaluate(cfg.curvature["h"], mesh, where="boundary", base_dir=cfg.base_dir)
    return ProblemSpec.create(mesh, K, h, orbits=orbits)
