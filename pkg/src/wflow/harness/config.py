"""JSON experiment configuration: schema, semantic checks and construction of library objects."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .. import schemes
from ..functionals import Barycenter, BranchingEnergy, InteractionEnergy, MmdToTarget, RieszKernel
from ..measures import ParticleCloud, RandomSource, read_points
from .images import sample_image_target

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "preset_names", "preset_path", "SCHEMA"]


class ConfigError(ValueError):
    """Every problem found in a configuration, reported at once."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_INIT = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["dirac", "dirac_sum", "uniform_square", "circle", "gaussian", "ellipse", "cross", "square_boundary"]},
        "center": _vector,
        "centers": {"type": "array", "items": _vector, "minItems": 1},
        "radius": {"type": "number"},
        "stddev": {"type": "number"},
        "semi_axes": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
}

_SOURCE = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["points", "image", "sample"]},
        "path": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "init": _INIT,
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scheme", "functional", "d", "n", "init", "tau", "horizon"],
    "properties": {
        "description": {"type": "string"},
        "scheme": {"enum": list(schemes.SCHEMES)},
        "functional": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["interaction", "mmd", "branching", "barycenter"]},
                "r": {"type": "number"},
                "norm": {"enum": [1, 2]},
                "target": _SOURCE,
                "components": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["weight", "target"],
                        "additionalProperties": False,
                        "properties": {"weight": {"type": "number"}, "target": _SOURCE},
                    },
                },
            },
        },
        "d": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "init": _INIT,
        "tau": {
            "oneOf": [
                {"type": "number"},
                {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                },
            ]
        },
        "horizon": {"type": "number"},
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "iterations": {"type": "integer", "minimum": 1},
                "lr": {"type": "number"},
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "batch_size": {"type": ["integer", "null"], "minimum": 1},
                "first_steps": {"type": "integer", "minimum": 0},
                "first_iterations": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "seed": {"type": "integer"},
        "output": {"type": "string"},
        "deterministic": {"type": "boolean"},
        "reference": {"enum": ["none", "analytic", "line_flow", "target"]},
        "metrics": {
            "type": "array",
            "items": {"enum": ["functional", "mmd_to_reference", "w2_radial_to_reference"]},
        },
        "svg": {"type": "boolean"},
    },
}

_INIT_CLASSES = {
    "dirac": (schemes.Dirac, ("center",)),
    "dirac_sum": (schemes.DiracSum, ("centers", "radius")),
    "uniform_square": (schemes.UniformSquare, ("center", "radius")),
    "circle": (schemes.Circle, ("center", "radius")),
    "gaussian": (schemes.Gaussian, ("center", "stddev")),
    "ellipse": (schemes.Ellipse, ("center", "semi_axes")),
    "cross": (schemes.Cross, ("center", "radius")),
    "square_boundary": (schemes.SquareBoundary, ("center", "radius")),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment. ``raw`` keeps the JSON document; paths are already resolved."""

    raw: dict
    base_dir: Path
    scheme: str
    d: int
    n: int
    schedule: schemes.StepSchedule
    horizon: float
    train: schemes.TrainConfig | None
    seed: int
    output: Path
    deterministic: bool
    reference: str
    metrics: tuple
    svg: bool

    @property
    def kernel(self) -> RieszKernel:
        spec = self.raw["functional"]
        return RieszKernel(spec.get("r", 1.0), spec.get("norm", 2))

    def initializer(self):
        return _make_init(self.raw["init"])

    def build_functional(self, rng: RandomSource):
        spec = self.raw["functional"]
        kind = spec["kind"]
        if kind == "interaction":
            return InteractionEnergy(self.kernel)
        if kind == "branching":
            return BranchingEnergy()
        if kind == "mmd":
            return MmdToTarget(self.kernel, self.load_source(spec["target"], rng.spawn()).points)
        comps = tuple((c["weight"], self.load_source(c["target"], rng.spawn()).points) for c in spec["components"])
        return Barycenter(self.kernel, comps)

    def load_source(self, spec, rng: RandomSource) -> ParticleCloud:
        if spec["kind"] == "points":
            return read_points(self.base_dir / spec["path"])[0]
        if spec["kind"] == "image":
            return sample_image_target(self.base_dir / spec["path"], spec.get("n", self.n), rng)
        return schemes.make_initial(_make_init(spec["init"]), spec.get("n", self.n), rng)


def _make_init(spec):
    cls, fields = _INIT_CLASSES[spec["kind"]]
    kwargs = {}
    for name in fields:
        if name in spec:
            value = spec[name]
            if name == "centers":
                value = tuple(tuple(c) for c in value)
            elif isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
    return cls(**kwargs)


def _init_dim(spec):
    if "centers" in spec:
        return {len(c) for c in spec["centers"]}
    return {len(spec.get("center", (0.0, 0.0)))}


def _init_problems(spec, d, where):
    out = []
    dims = _init_dim(spec)
    if dims != {d}:
        out.append(f"{where}: coordinates have dimension {sorted(dims)}, expected {d}")
    for key in ("radius", "stddev"):
        if key in spec and not spec[key] > 0 and not (spec["kind"] == "dirac_sum" and spec[key] == 0):
            out.append(f"{where}: {key} must be > 0")
    if spec["kind"] in ("circle", "ellipse", "cross", "square_boundary") and d != 2:
        out.append(f"{where}: '{spec['kind']}' is planar and needs d = 2")
    if "semi_axes" in spec and min(spec["semi_axes"]) <= 0:
        out.append(f"{where}: semi_axes must be > 0")
    if spec["kind"] == "dirac_sum" and "centers" not in spec:
        out.append(f"{where}: dirac_sum needs 'centers'")
    return out


def _source_problems(spec, d, base_dir, where):
    if spec["kind"] in ("points", "image"):
        if "path" not in spec:
            return [f"{where}: '{spec['kind']}' source needs 'path'"]
        path = base_dir / spec["path"]
        if not path.is_file():
            return [f"{where}: file not found: {path}"]
        if spec["kind"] == "image" and d != 2:
            return [f"{where}: image targets are planar and need d = 2"]
        return []
    if "init" not in spec:
        return [f"{where}: 'sample' source needs 'init'"]
    return _init_problems(spec["init"], d, f"{where}.init")


def _is_collapsed(init, n):
    if init["kind"] == "dirac":
        return n > 1
    if init["kind"] == "dirac_sum":
        return init.get("radius", 0.0) == 0.0 and n > len(init.get("centers", ()))
    return False


def _semantic_problems(doc, base_dir):
    out = []
    d, n = doc["d"], doc["n"]
    func = doc["functional"]
    kind = func["kind"]
    r = func.get("r", 1.0)
    if not 0 < r < 2:
        out.append(f"functional.r must lie in (0, 2), got {r}")
    if kind == "branching":
        if d != 2:
            out.append("functional: the branching energy is planar and needs d = 2")
        if "r" in func or "norm" in func:
            out.append("functional: the branching energy takes no kernel parameters")
    if kind == "mmd":
        if "target" not in func:
            out.append("functional: 'mmd' needs a 'target'")
        else:
            out.extend(_source_problems(func["target"], d, base_dir, "functional.target"))
    if kind == "barycenter":
        comps = func.get("components")
        if not comps:
            out.append("functional: 'barycenter' needs 'components'")
        else:
            weights = [c["weight"] for c in comps]
            if min(weights) < 0 or not math.isclose(sum(weights), 1.0, rel_tol=0, abs_tol=1e-12):
                out.append(f"functional.components: weights must be >= 0 and sum to 1, got {weights}")
            for k, c in enumerate(comps):
                out.extend(_source_problems(c["target"], d, base_dir, f"functional.components[{k}].target"))
    if kind in ("interaction", "branching") and ("target" in func or "components" in func):
        out.append(f"functional: '{kind}' takes no target")
    out.extend(_init_problems(doc["init"], d, "init"))
    if doc["scheme"] == "particle" and _is_collapsed(doc["init"], n):
        out.append(
            "init: the particle scheme needs pairwise distinct starting particles; "
            "start from a small uniform_square (or dirac_sum with radius > 0) instead of a Dirac"
        )
    tau = doc["tau"]
    entries = [(0.0, tau)] if isinstance(tau, (int, float)) else tau
    try:
        schemes.StepSchedule(tuple(tuple(e) for e in entries))
    except ValueError as exc:
        out.append(f"tau: {exc}")
    if not doc["horizon"] > 0:
        out.append("horizon must be > 0")
    train = doc.get("train")
    if doc["scheme"] != "particle":
        if train is None:
            out.append(f"train: the {doc['scheme']} scheme needs a 'train' section")
        else:
            if "lr" in train and not train["lr"] > 0:
                out.append("train.lr must be > 0")
            if (train.get("batch_size") or 0) > n:
                out.append(f"train.batch_size {train['batch_size']} exceeds n = {n}")
    ref = doc.get("reference", "none")
    if ref == "analytic":
        if kind != "interaction" or func.get("norm", 2) != 2:
            out.append("reference 'analytic' needs the interaction energy with the 2-norm")
        if any(abs(c) > 1e-6 for c in doc["init"].get("center", [0.0])) or doc["init"]["kind"] not in ("dirac", "uniform_square"):
            out.append("reference 'analytic' needs a start at (or within 1e-6 of) the origin")
    if ref == "line_flow":
        if d != 1 or kind != "mmd" or func.get("r", 1.0) != 1.0:
            out.append("reference 'line_flow' needs d = 1 and the r = 1 discrepancy to delta_0")
    if ref == "target" and kind not in ("mmd", "barycenter"):
        out.append("reference 'target' needs an 'mmd' or 'barycenter' functional")
    metrics = doc.get("metrics", [])
    if "w2_radial_to_reference" in metrics and ref != "analytic":
        out.append("metric 'w2_radial_to_reference' needs reference 'analytic'")
    if "mmd_to_reference" in metrics and ref == "none":
        out.append("metric 'mmd_to_reference' needs a reference")
    if doc.get("svg") and d != 2:
        out.append("svg output needs d = 2")
    return out


def parse_config(doc: dict, base_dir=".", output=None, seed=None, deterministic=None) -> ExperimentConfig:
    """Validate a configuration document; raises :class:`ConfigError` listing every problem."""
    base_dir = Path(base_dir)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    problems = [
        f"{'/'.join(str(p) for p in err.absolute_path) or '<root>'}: {err.message}"
        for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    ]
    if problems:
        raise ConfigError(problems)
    problems = _semantic_problems(doc, base_dir)
    if problems:
        raise ConfigError(problems)
    tau = doc["tau"]
    entries = ((0.0, tau),) if isinstance(tau, (int, float)) else tuple(tuple(e) for e in tau)
    train = None
    if doc["scheme"] != "particle":
        spec = dict(doc["train"])
        if "hidden" in spec:
            spec["hidden"] = tuple(spec["hidden"])
        train = schemes.TrainConfig(**spec)
    ref = doc.get("reference", "none")
    default_metrics = ["functional"] + (["mmd_to_reference"] if ref != "none" else [])
    if ref == "analytic":
        default_metrics.append("w2_radial_to_reference")
    return ExperimentConfig(
        raw=doc,
        base_dir=base_dir,
        scheme=doc["scheme"],
        d=doc["d"],
        n=doc["n"],
        schedule=schemes.StepSchedule(entries),
        horizon=float(doc["horizon"]),
        train=train,
        seed=int(doc.get("seed", 0) if seed is None else seed),
        output=Path(output if output is not None else doc.get("output", "runs/experiment")),
        deterministic=bool(doc.get("deterministic", True) if deterministic is None else deterministic),
        reference=ref,
        metrics=tuple(doc.get("metrics", default_metrics)),
        svg=bool(doc.get("svg", False)),
    )


def preset_names() -> list[str]:
    root = resources.files("wflow.harness") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def preset_path(name: str) -> Path:
    path = Path(str(resources.files("wflow.harness") / "presets" / f"{name}.json"))
    if not path.is_file():
        raise ConfigError([f"unknown preset {name!r}; available: {', '.join(preset_names())}"])
    return path


def load_config(source, **overrides) -> ExperimentConfig:
    """Load a config file, or a shipped preset by name. Relative input paths resolve against the file's directory."""
    path = Path(source)
    if not path.is_file():
        if str(source) not in preset_names():
            raise ConfigError([f"no config file or preset named {str(source)!r}; presets: {', '.join(preset_names())}"])
        path = preset_path(str(source))
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc.msg} at line {exc.lineno}, column {exc.colno})"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return parse_config(doc, path.parent, **overrides)
