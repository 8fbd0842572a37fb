"""Experiment configuration: nested dataclasses with a JSON round trip.

Every constraint checked by the modules downstream is also checked here, so a
bad file fails at parse time with the offending key in the message.
"""

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from dataclasses import field as dc_field


class ConfigError(ValueError):
    pass


MEASURE_KINDS = ("cantor", "two_plateau", "graph", "file")
FIELD_KINDS = ("identity", "diag", "sin_perturbation")


@dataclass
class MeasureSpec:
    kind: str = "two_plateau"
    generations: int = 6
    ratios: list = None
    low: float = 0.25
    high: float = 1.0 / 12.0
    block: int = 2
    num_atoms: int = 512
    slope: float = 0.0
    dim: int = 2
    path: str = None

    def validate(self):
        if self.kind not in MEASURE_KINDS:
            raise ConfigError(f"measure.kind must be one of {MEASURE_KINDS}, got {self.kind!r}")
        if self.dim not in (2, 3):
            raise ConfigError("measure.dim must be 2 or 3")
        if self.kind in ("cantor", "two_plateau") and not 1 <= self.generations <= 12:
            raise ConfigError("measure.generations must lie in [1, 12]")
        if self.kind == "cantor" and self.ratios is not None:
            if len(self.ratios) < self.generations:
                raise ConfigError("measure.ratios has fewer entries than generations")
            if not all(0 < r < 0.5 for r in self.ratios):
                raise ConfigError("measure.ratios must lie in (0, 1/2)")
        if self.kind == "two_plateau":
            if not (0 < self.low < 0.5 and 0 < self.high < 0.5):
                raise ConfigError("measure.low and measure.high must lie in (0, 1/2)")
            if self.block < 1:
                raise ConfigError("measure.block must be >= 1")
        if self.kind == "graph" and (self.num_atoms < 2 or self.slope < 0):
            raise ConfigError("measure.num_atoms must be >= 2 and measure.slope >= 0")
        if self.kind == "file" and not self.path:
            raise ConfigError("measure.path is required for kind 'file'")


@dataclass
class FieldSpec:
    type: str = "identity"
    entries: list = None
    Lambda: float = None
    alpha: float = 1.0
    epsilon: float = 0.2
    omega: float = 2 * math.pi

    def validate(self):
        if self.type not in FIELD_KINDS:
            raise ConfigError(f"field.type must be one of {FIELD_KINDS}, got {self.type!r}")
        if not 0 < self.alpha <= 1:
            raise ConfigError("field.alpha must lie in (0, 1]")
        if not 0 <= self.epsilon <= 0.3:
            raise ConfigError("field.epsilon must lie in [0, 0.3]")
        if self.entries is not None and not all(e > 0 for e in self.entries):
            raise ConfigError("field.entries must be positive")


@dataclass
class LatticeSpec:
    C0: float = 2.0
    A0: float = 8.0
    depth: int = 30

    def validate(self):
        if not self.C0 > 1:
            raise ConfigError("lattice.C0 must exceed 1")
        if not self.A0 >= 4:
            raise ConfigError(f"lattice.A0 must be >= 4, got {self.A0}")
        if self.depth < 1:
            raise ConfigError("lattice.depth must be >= 1")


@dataclass
class StoppingSpec:
    tau: float = None
    delta: float = None
    A: float = 20.0
    eps0: float = 0.01
    kappa0: float = 0.05
    max_generations: int = 4

    def validate(self):
        if self.tau is not None and not self.tau > 0:
            raise ConfigError("stopping.tau must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("stopping.delta must be positive")
        if self.tau is not None and self.delta is not None and not self.delta < self.tau:
            raise ConfigError("stopping.delta must be below stopping.tau")
        if not self.A >= 2:
            raise ConfigError("stopping.A must be >= 2")
        if not 0 < self.eps0 < 1:
            raise ConfigError("stopping.eps0 must lie in (0, 1)")
        if not 0 <= self.kappa0 < 1:
            raise ConfigError("stopping.kappa0 must lie in [0, 1)")
        if self.max_generations < 0:
            raise ConfigError("stopping.max_generations must be >= 0")


@dataclass
class OperatorSpec:
    eps: float = None

    def validate(self):
        if self.eps is not None and self.eps < 0:
            raise ConfigError("operator.eps must be >= 0")


@dataclass
class VariationalSpec:
    lambdas: list = dc_field(default_factory=lambda: [1e-3, 1e-2, 1e-1])
    budget: int = 2000
    quad_per_cell: int = None
    refine: int = 1

    def validate(self):
        if not self.lambdas or not all(v > 0 for v in self.lambdas):
            raise ConfigError("variational.lambdas must be a nonempty list of positive values")
        if self.budget < 1:
            raise ConfigError("variational.budget must be >= 1")
        if self.quad_per_cell is not None and self.quad_per_cell < 8:
            raise ConfigError("variational.quad_per_cell must be >= 8")
        if self.refine < 1:
            raise ConfigError("variational.refine must be >= 1")


@dataclass
class SweepSpec:
    N: list = dc_field(default_factory=lambda: [2, 3, 4, 5, 6])

    def validate(self):
        if list(self.N) != sorted(self.N):
            raise ConfigError("sweep.N must be ascending")


SECTIONS = {
    "measure": MeasureSpec,
    "field": FieldSpec,
    "lattice": LatticeSpec,
    "stopping": StoppingSpec,
    "operator": OperatorSpec,
    "variational": VariationalSpec,
    "sweep": SweepSpec,
}


@dataclass
class ExperimentConfig:
    measure: MeasureSpec = dc_field(default_factory=MeasureSpec)
    field: FieldSpec = dc_field(default_factory=FieldSpec)
    lattice: LatticeSpec = dc_field(default_factory=LatticeSpec)
    stopping: StoppingSpec = dc_field(default_factory=StoppingSpec)
    operator: OperatorSpec = dc_field(default_factory=OperatorSpec)
    variational: VariationalSpec = dc_field(default_factory=VariationalSpec)
    sweep: SweepSpec = dc_field(default_factory=SweepSpec)
    seed: int = 0
    out: str = None

    def validate(self):
        for name in SECTIONS:
            getattr(self, name).validate()
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        return self

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kwargs = {}
        for key, value in data.items():
            if key in SECTIONS:
                spec = SECTIONS[key]
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                allowed = {f.name for f in fields(spec)}
                bad = set(value) - allowed
                if bad:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
                kwargs[key] = spec(**value)
            else:
                kwargs[key] = value
        return cls(**kwargs).validate()

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def with_measure(self, **changes):
        return replace(self, measure=replace(self.measure, **changes))


def preset(name):
    """Named configurations used by the acceptance run and the demos.

    ``two_plateau``: the default instance, spec default thresholds.
    ``two_plateau_deep``: same measure with ``A`` large enough that ``Sigma_1``
    fires below the root, used for the variational and contradiction runs.
    ``segment``: the flat graph measure.
    ``cantor_quarter``: the AD-regular 1/4 Cantor set.
    """
    if name == "two_plateau":
        return ExperimentConfig().validate()
    if name == "two_plateau_deep":
        return ExperimentConfig(
            lattice=LatticeSpec(C0=20.0, A0=8.0),
            stopping=StoppingSpec(tau=0.0008919642429, delta=0.000468114286, A=1e7, kappa0=1e-3),
        ).validate()
    if name == "segment":
        return ExperimentConfig(
            measure=MeasureSpec(kind="graph", num_atoms=512),
            sweep=SweepSpec(N=[64, 128, 256, 512]),
        ).validate()
    if name == "cantor_quarter":
        return ExperimentConfig(
            measure=MeasureSpec(kind="cantor", ratios=[0.25] * 12),
            sweep=SweepSpec(N=[2, 3, 4, 5, 6]),
        ).validate()
    raise ConfigError(f"unknown preset {name!r}")


PRESETS = ("two_plateau", "two_plateau_deep", "segment", "cantor_quarter")
