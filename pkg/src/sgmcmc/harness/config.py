"""JSON experiment configuration.

Schema (all keys optional unless marked)::

    {
      "model": {"kind": "linear_regression",          # required
                "prior_variance": 10.0,
                "dim": 10,                             # gaussian_toy only
                "noise_cov": [[...], ...]},            # gaussian_toy only
      "data": {"source": "synthetic", "n": 10000, "dim": 100, "seed": 1}
            | {"source": "npz", "path": "linreg.npz"}
            | {"source": "idx", "train_images": ..., "train_labels": ...,
               "test_images": ..., "test_labels": ..., "digits": [7, 9]}
            | {"source": "libsvm", "train": ..., "test": ...}
            | {"source": "none"},
      "projection": {"out_dim": 100, "seed": 0},
      "samplers": ["sghmc", "sgnht", "ccadl", "mccadl"],
      "h": [0.001], "friction": [1.0],
      "beta": 1.0, "thermal_mass": null, "mass_diag": null,
      "batch": 500, "seed": 0, "passes": 100, "steps": null,
      "burn_in_fraction": 0.5, "checkpoint_every": 10,
      "init": "zero",                                  # or "posterior_mean"
      "out": "runs/linreg", "jobs": null
    }

``h`` and ``friction`` may be scalars or lists; every (sampler, h, friction)
combination is run as its own chain. ``steps`` overrides the pass count
(needed for gaussian_toy, which has no dataset). ``init`` picks the starting
theta; "posterior_mean" needs linear_regression. Relative data paths are
resolved against ``$SGMCMC_DATA_DIR`` or else the config file's directory.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field

from ..exceptions import InvalidInputError
from ..models import MODEL_KINDS
from ..samplers import SAMPLER_KINDS

DATA_SOURCES = ("synthetic", "npz", "idx", "libsvm", "none")
INIT_MODES = ("zero", "posterior_mean")
_PATH_KEYS = {
    "npz": ("path",),
    "idx": ("train_images", "train_labels", "test_images", "test_labels"),
    "libsvm": ("train", "test"),
}


class ConfigError(InvalidInputError):
    pass


def _as_list(value, name):
    values = value if isinstance(value, list) else [value]
    try:
        values = [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number or a list of numbers") from None
    if not values:
        raise ConfigError(f"{name} must not be empty")
    return values


@dataclass
class ExperimentConfig:
    model: dict
    data: dict = field(default_factory=lambda: {"source": "none"})
    projection: dict = None
    samplers: list = field(default_factory=lambda: list(SAMPLER_KINDS))
    h: list = field(default_factory=lambda: [1e-3])
    friction: list = field(default_factory=lambda: [1.0])
    beta: float = 1.0
    thermal_mass: float = None
    mass_diag: list = None
    batch: int = 500
    seed: int = 0
    passes: float = 1.0
    steps: int = None
    burn_in_fraction: float = 0.5
    checkpoint_every: float = 1.0
    init: str = "zero"
    out: str = "runs"
    jobs: int = None
    base_dir: str = field(default=None, compare=False)

    def __post_init__(self):
        self.h = _as_list(self.h, "h")
        self.friction = _as_list(self.friction, "friction")
        if isinstance(self.samplers, str):
            self.samplers = [self.samplers]

    def validate(self):
        """Check values and that every referenced file exists. Returns self."""
        if not isinstance(self.model, dict) or self.model.get("kind") not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
        source = self.data.get("source")
        if source not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}")
        kind = self.model["kind"]
        if kind == "gaussian_toy":
            if source != "none":
                raise ConfigError("gaussian_toy takes data.source 'none'")
            if "dim" not in self.model:
                raise ConfigError("gaussian_toy needs model.dim")
            if self.steps is None:
                raise ConfigError("gaussian_toy needs an explicit 'steps' count")
        elif source == "none":
            raise ConfigError(f"{kind} needs a data source")
        if kind == "logistic_regression" and source in ("synthetic",):
            raise ConfigError("synthetic data is for linear_regression")
        if kind == "linear_regression" and source in ("idx",):
            raise ConfigError("IDX data is for logistic_regression")
        bad = [s for s in self.samplers if s not in SAMPLER_KINDS]
        if bad or not self.samplers:
            raise ConfigError(f"unknown samplers {bad}; choose from {SAMPLER_KINDS}")
        if any(h <= 0 for h in self.h):
            raise ConfigError("every h must be positive")
        if any(a < 0 for a in self.friction):
            raise ConfigError("every friction must be non-negative")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.passes < 0 or (self.steps is not None and self.steps < 0):
            raise ConfigError("passes and steps must be non-negative")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must lie in [0, 1)")
        if not self.checkpoint_every > 0:
            raise ConfigError("checkpoint_every must be positive")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}")
        if self.init == "posterior_mean" and kind != "linear_regression":
            raise ConfigError("init 'posterior_mean' needs linear_regression")
        if self.projection is not None and int(self.projection.get("out_dim", 0)) < 1:
            raise ConfigError("projection.out_dim must be >= 1")
        if self.jobs is not None and int(self.jobs) < 1:
            raise ConfigError("jobs must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for path in self.data_paths().values():
            if not os.path.isfile(path):
                raise ConfigError(f"data file not found: {path}")
        return self

    def data_paths(self):
        from .io import resolve_data_path

        source = self.data.get("source")
        paths = {}
        for key in _PATH_KEYS.get(source, ()):
            if key not in self.data:
                if source == "libsvm" and key == "test":
                    continue
                raise ConfigError(f"data.{key} is required for source {source!r}")
            paths[key] = resolve_data_path(self.data[key], self.base_dir)
        return paths

    def cells(self):
        """All (index, sampler, h, friction) combinations, in a fixed order."""
        out = []
        for h in self.h:
            for a in self.friction:
                for s in self.samplers:
                    out.append((len(out), s, h, a))
        return out

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d, base_dir=None):
        names = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "model" not in d:
            raise ConfigError("config needs a 'model' section")
        return cls(**d, base_dir=base_dir)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                d = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))
