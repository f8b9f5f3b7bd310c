"""Run configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli

from .errors import ConfigError, SingCtrlError
from .ocp import ControlProblem, Mesh
from .problems import FisheryParams, PlantParams, SirParams, fishery_problem, plant_problem, sir_problem
from .problems.plant import PLANT_CASES
from .solver import SolverConfig
from .tv import TVWeights

__all__ = ["RunConfig", "load_config", "PROBLEMS"]

PROBLEMS = ("fishery", "plant", "sir")
_BACKENDS = ("polyhedral", "prox-tv")

# tolerance used when none is given
_DEFAULT_TOL = {"fishery": 1e-10, "plant": 1e-10, "sir": 1e-8}
# penalty used when none is given
_DEFAULT_RHO = {"fishery": 1e-2, "plant": 0.0, "sir": 0.0}
# a single penalty value applies to these channels only (treatment is never penalized)
_PENALIZED = {"fishery": (0,), "plant": (0,), "sir": (0,)}
_PARAMS = {"fishery": FisheryParams, "plant": PlantParams, "sir": SirParams}

_KEYS = {"problem", "case", "n", "tol", "rho", "u0", "out", "backend", "max_iters", "params"}


@dataclass
class RunConfig:
    """Everything needed to reproduce one run.

    ``rho`` and ``u0`` hold one value per control channel after
    :meth:`validate`; a single ``rho`` is spread over the penalized channels
    and a single ``u0`` over all of them.
    """

    problem: str = "fishery"
    case: Optional[str] = None
    params: dict = field(default_factory=dict)
    n: int = 750
    tol: Optional[float] = None
    rho: Optional[tuple] = None
    u0: tuple = (0.0,)
    out: str = "out"
    backend: str = "polyhedral"
    max_iters: int = 50000

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError("problem", f"expected one of {PROBLEMS}, got {self.problem!r}")
        if self.case is not None and self.problem != "plant":
            raise ConfigError("case", "only the plant problem has cases")
        if self.case is not None and self.case not in PLANT_CASES:
            raise ConfigError("case", f"expected one of {sorted(PLANT_CASES)}, got {self.case!r}")
        if self.backend not in _BACKENDS:
            raise ConfigError("backend", f"expected one of {_BACKENDS}, got {self.backend!r}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise ConfigError("n", f"need an integer N >= 2, got {self.n!r}")
        self.n = int(self.n)
        if self.tol is None:
            self.tol = _DEFAULT_TOL[self.problem]
        if not (isinstance(self.tol, (int, float)) and self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigError("tol", f"must be a positive number, got {self.tol!r}")
        self.tol = float(self.tol)
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError("max_iters", f"must be a positive integer, got {self.max_iters!r}")
        m = self.build_problem().m
        rho = _DEFAULT_RHO[self.problem] if self.rho is None else self.rho
        self.rho = self._spread("rho", rho, m, _PENALIZED[self.problem])
        for r in self.rho:
            if not 0.0 <= r < 1.0:
                raise ConfigError("rho", f"each penalty must lie in [0, 1), got {r}")
        self.u0 = self._spread("u0", self.u0, m, range(m))
        if self.backend == "prox-tv" and m != 1:
            raise ConfigError("backend", "prox-tv needs a single control channel")
        return self

    @staticmethod
    def _spread(name, value, m, channels):
        vals = value if isinstance(value, (list, tuple)) else (value,)
        try:
            vals = tuple(float(v) for v in vals)
        except (TypeError, ValueError):
            raise ConfigError(name, f"expected numbers, got {value!r}") from None
        if len(vals) == m:
            return vals
        if len(vals) == 1:
            out = [0.0] * m
            for j in channels:
                out[j] = vals[0]
            return tuple(out)
        raise ConfigError(name, f"expected 1 or {m} values, got {len(vals)}")

    def build_params(self):
        cls = _PARAMS[self.problem]
        names = {f.name for f in dataclasses.fields(cls)}
        base = PlantParams.case(self.case) if self.case else cls()
        unknown = set(self.params) - names
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"params.{key}", f"unknown parameter for {self.problem}")
        try:
            return dataclasses.replace(base, **{k: float(v) for k, v in self.params.items()})
        except (SingCtrlError, TypeError, ValueError) as exc:
            raise ConfigError("params", str(exc)) from None

    def build_problem(self) -> ControlProblem:
        params = self.build_params()
        try:
            if self.problem == "fishery":
                return fishery_problem(params)
            if self.problem == "plant":
                return plant_problem(params)
            return sir_problem(params)
        except SingCtrlError as exc:
            raise ConfigError("params", str(exc)) from None

    def mesh(self, problem: ControlProblem) -> Mesh:
        return problem.mesh(self.n)

    def weights(self) -> TVWeights:
        return TVWeights(self.rho)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, max_iters=int(self.max_iters))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rho"], d["u0"] = list(self.rho), list(self.u0)
        d["params"] = dataclasses.asdict(self.build_params())
        return d


def load_config(path=None, **overrides) -> RunConfig:
    """Read a TOML file (top-level keys plus an optional ``[params]`` table),
    apply non-``None`` overrides and validate."""
    data = {}
    if path is not None:
        try:
            with open(Path(path), "rb") as fh:
                data = tomli.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("config", f"invalid TOML in {path}: {exc}") from None
    for key in data:
        if key not in _KEYS:
            raise ConfigError(key, "unknown configuration key")
    if "params" in data and not isinstance(data["params"], dict):
        raise ConfigError("params", "must be a table")
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    return RunConfig(**data).validate()
