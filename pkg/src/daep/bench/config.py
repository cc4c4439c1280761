from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ConfigError
from ..sim.worlds import BUILDERS

MODES = ("static", "dynamic")


@dataclass(frozen=True)
class Variant:
    name: str
    predict: bool = True  # False freezes predictions at the last observation
    zeta: float = 0.5
    use_tracks: bool = True


VARIANTS = {
    "daep": Variant("daep"),
    "daep-no-predict": Variant("daep-no-predict", predict=False),
    "daep-no-dfm": Variant("daep-no-dfm", zeta=0.0),
    "static-aep-like": Variant("static-aep-like", zeta=0.0, use_tracks=False),
}


@dataclass(frozen=True)
class CostModel:
    """Simulated planning time charged per unit of planner work, in seconds.

    Planning time is modeled from operation counts rather than measured so
    that runs are reproducible bit for bit on any machine. The defaults are
    the per-operation wall times of this implementation on a single core of
    the development machine.
    """

    per_call: float = 2e-3
    per_sample: float = 1e-4
    per_gain: float = 2.5e-4
    per_static_check: float = 5e-6
    per_timed_check: float = 2.5e-5
    per_reevaluation: float = 3e-4
    per_dijkstra_pop: float = 2e-5

    def local(self, stats) -> float:
        return (self.per_call + stats.samples * self.per_sample + stats.gain_evals * self.per_gain
                + stats.static_checks * self.per_static_check + stats.timed_checks * self.per_timed_check)

    def global_(self, stats) -> float:
        return (self.per_call + stats.reevaluations * self.per_reevaluation
                + stats.dijkstra_pops * self.per_dijkstra_pop
                + stats.static_checks * self.per_static_check + stats.timed_checks * self.per_timed_check)


@dataclass
class RunConfig:
    scenario: str
    planner: str = "daep"
    mode: str = "dynamic"
    start: int = 0
    seed: int = 0
    time_limit: float = 1200.0
    repeats: int = 5
    max_extensions: int = 300
    scan_period: float = 0.25
    dfm_period: float = 1.0
    series_period: float = 1.0
    cost_model: CostModel = field(default_factory=CostModel)

    def validate(self) -> None:
        if self.scenario not in BUILDERS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.planner not in VARIANTS:
            raise ConfigError(f"unknown planner variant {self.planner!r}; known: {', '.join(VARIANTS)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0 <= self.start <= 4:
            raise ConfigError("start index must be in 0..4")
        if not self.time_limit > 0:
            raise ConfigError("time_limit must be positive")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")

    @property
    def variant(self) -> Variant:
        return VARIANTS[self.planner]

    @property
    def run_id(self) -> str:
        return f"{self.scenario}__{self.planner}__{self.mode}__s{self.start}__seed{self.seed}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("cost_model")
        return d

    def repeat(self, r: int) -> "RunConfig":
        """The r-th repeat: start locations rotate and the seed advances."""
        d = self.to_dict()
        d.update(start=(self.start + r) % 5, seed=self.seed + r, repeats=1)
        return RunConfig(**d, cost_model=self.cost_model)
