"""Problem configuration: source terms, INI-style parsing, validation.

A config file has sections ``[problem]``, ``[source.i]``, ``[initial.i]``
and ``[tolerances]``.  Sources are sums of primitive terms (``const c``,
``gauss amp c_x [c_y] sigma``, ``sinprod amp k_x [k_y]``) plus an optional
transient term list that decays like exp(-lambda*t).  Initial data are
evaluated on the grid and projected onto the ordered cone at parse time;
a repair is recorded as a warning, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .grid import GridSpec, MultiField, ScalarField, make_grid, project_columns
from .plap import PFluxParams

__all__ = [
    "ConfigError",
    "SourceTerm",
    "SourceSpec",
    "ProblemConfig",
    "parse_config",
    "load_config",
    "evaluate_source",
    "initial_state",
    "refined_config",
]

DEFAULT_DELTA_REG = 1e-6


class ConfigError(ValueError):
    """Configuration problem, annotated with the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SourceTerm:
    kind: str  # const | gauss | sinprod
    params: tuple[float, ...]


@dataclass(frozen=True)
class SourceSpec:
    """Per-component source f_i(x, t) = base(x) + transient(x) * exp(-lambda*t)."""

    base: tuple[SourceTerm, ...] = ()
    transient: tuple[SourceTerm, ...] = ()
    decay: float = 0.0


def _evaluate_term(term: SourceTerm, grid: GridSpec) -> np.ndarray:
    coords = grid.coordinates()
    x = coords[0]
    if term.kind == "const":
        (c,) = term.params
        return np.full(grid.n_nodes, c)
    if term.kind == "gauss":
        if grid.dimension == 1:
            amp, cx, sigma = term.params
            r2 = (x - cx) ** 2
        else:
            amp, cx, cy, sigma = term.params
            r2 = (x - cx) ** 2 + (coords[1] - cy) ** 2
        return amp * np.exp(-r2 / (2.0 * sigma ** 2))
    if term.kind == "sinprod":
        if grid.dimension == 1:
            amp, kx = term.params
            return amp * np.sin(kx * math.pi * x / grid.length_x)
        amp, kx, ky = term.params
        return (amp * np.sin(kx * math.pi * x / grid.length_x)
                * np.sin(ky * math.pi * coords[1] / grid.length_y))
    raise ConfigError(f"unknown source term kind '{term.kind}'")


def _evaluate_terms(terms: Sequence[SourceTerm], grid: GridSpec) -> np.ndarray:
    out = np.zeros(grid.n_nodes)
    for t in terms:
        out += _evaluate_term(t, grid)
    return out


def evaluate_source(spec: SourceSpec, grid: GridSpec, t: float) -> np.ndarray:
    out = _evaluate_terms(spec.base, grid)
    if spec.transient:
        out = out + _evaluate_terms(spec.transient, grid) * math.exp(-spec.decay * t)
    return out


@dataclass(frozen=True)
class ProblemConfig:
    grid: GridSpec
    n_membranes: int = 1
    p: float = 2.0
    t_final: float = 1.0
    dt: float = 0.01
    epsilon: float = 1e-4
    sources: tuple[SourceSpec, ...] = ()
    initials: tuple[SourceSpec, ...] = ()
    newton_tol: float = 1e-9
    oracle_tol: float = 1e-9
    tol_c: float = 1e-2
    gap_tol: float = 1e-9
    snapshot_times: tuple[float, ...] = ()
    seed: int = 0
    delta_reg: float = DEFAULT_DELTA_REG
    warnings: tuple[str, ...] = ()
    epsilon_given: bool = True
    tol_c_given: bool = True

    def __post_init__(self):
        if self.n_membranes < 1:
            raise ValueError("n_membranes must be >= 1")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if len(self.sources) != self.n_membranes:
            raise ValueError("need one SourceSpec per membrane")
        if len(self.initials) != self.n_membranes:
            raise ValueError("need one initial SourceSpec per membrane")

    @property
    def pflux(self) -> PFluxParams:
        return PFluxParams(self.p, self.delta_reg)

    @property
    def n_steps(self) -> int:
        return max(1, round(self.t_final / self.dt))

    def source_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Base stack, transient stack and decay rates, shapes (N, n), (N, n), (N,)."""
        base = np.stack([_evaluate_terms(s.base, self.grid) for s in self.sources])
        trans = np.stack([_evaluate_terms(s.transient, self.grid)
                          for s in self.sources])
        lam = np.array([s.decay for s in self.sources])
        return base, trans, lam

    def f_values(self, t: float) -> np.ndarray:
        base, trans, lam = self.source_arrays()
        return base + trans * np.exp(-lam * t)[:, None]

    def f_multifield(self, t: float) -> MultiField:
        return MultiField.from_stack(self.grid, self.f_values(t))

    def stationary_source(self) -> MultiField:
        """Long-time source limit: transients with positive decay vanish."""
        base, trans, lam = self.source_arrays()
        values = base + np.where(lam == 0.0, 1.0, 0.0)[:, None] * trans
        return MultiField.from_stack(self.grid, values)


def initial_state(config: ProblemConfig) -> tuple[MultiField, list[str]]:
    """Evaluate initial data and project it onto the ordered cone.

    Returns the admissible state plus a warning when the raw data violated
    the ordering and had to be repaired.
    """
    raw = np.stack([evaluate_source(s, config.grid, 0.0) for s in config.initials])
    projected = project_columns(raw)
    warnings = []
    worst = float(np.max(np.abs(projected - raw))) if config.n_membranes > 1 else 0.0
    if worst > 0.0:
        warnings.append(
            f"initial data violated the ordering constraint; repaired by "
            f"projection (max change {worst:.3e})")
    return MultiField.from_stack(config.grid, projected), warnings


def refined_config(config: ProblemConfig, space: bool = True,
                   time: bool = True) -> ProblemConfig:
    """Halve the grid spacing (n -> 2n+1) and/or the time step.

    Defaulted tolerances that track the grid (tol_c) are recomputed unless
    they were given explicitly.
    """
    grid = config.grid
    if space:
        grid = make_grid(grid.dimension, 2 * grid.n_x + 1, grid.length_x,
                         None if grid.dimension == 1 else 2 * grid.n_y + 1,
                         grid.length_y)
    out = replace(config, grid=grid, dt=config.dt / 2 if time else config.dt)
    if not config.tol_c_given:
        out = replace(out, tol_c=max(10.0 * out.epsilon, out.grid.h_x))
    return out


# --- INI-style parsing -------------------------------------------------

_PROBLEM_KEYS = {
    "dimension", "n_x", "n_y", "length_x", "length_y", "n_membranes", "p",
    "t_final", "dt", "epsilon", "snapshot_times", "seed",
}
_TOLERANCE_KEYS = {"newton_tol", "oracle_tol", "tol_c", "gap_tol"}


def _parse_sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: dict[str, tuple[str, int]] | None = None
    current_name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            name = line[1:-1].strip()
            if not name:
                raise ConfigError("empty section name", lineno)
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", lineno)
            current = {}
            current_name = name
            sections[name] = current
            continue
        if "=" not in line:
            raise ConfigError("expected key = value", lineno)
        if current is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in current:
            raise ConfigError(f"duplicate key '{key}' in [{current_name}]", lineno)
        current[key] = (value, lineno)
    return sections


def _take(section: dict[str, tuple[str, int]], key: str,
          conv, default=None, required: bool = False, section_line: int | None = None):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key '{key}'", section_line)
        return default, None
    value, lineno = section[key]
    try:
        return conv(value), lineno
    except ConfigError:
        raise
    except Exception:
        raise ConfigError(f"cannot parse '{key} = {value}'", lineno)


def _parse_float_list(value: str) -> tuple[float, ...]:
    parts = [p for chunk in value.split(",") for p in chunk.split()]
    return tuple(float(p) for p in parts)


def _parse_terms(value: str, dimension: int, lineno: int) -> tuple[SourceTerm, ...]:
    terms = []
    for chunk in value.split("+"):
        tokens = chunk.split()
        if not tokens:
            raise ConfigError("empty source term", lineno)
        kind, args = tokens[0], tokens[1:]
        try:
            params = tuple(float(a) for a in args)
        except ValueError:
            raise ConfigError(f"non-numeric parameter in '{chunk.strip()}'", lineno)
        if kind == "const":
            want = 1
        elif kind == "gauss":
            want = 3 if dimension == 1 else 4
            if params and params[-1] <= 0:
                raise ConfigError("gauss sigma must be positive", lineno)
        elif kind == "sinprod":
            want = 2 if dimension == 1 else 3
            for k in params[1:]:
                if k < 1 or k != int(k):
                    raise ConfigError("sinprod wave numbers must be integers >= 1",
                                      lineno)
        else:
            raise ConfigError(f"unknown source term kind '{kind}'", lineno)
        if len(params) != want:
            raise ConfigError(
                f"term '{kind}' takes {want} parameters in {dimension}D, "
                f"got {len(params)}", lineno)
        terms.append(SourceTerm(kind, params))
    return tuple(terms)


def _parse_component_section(name: str, body: dict[str, tuple[str, int]],
                             dimension: int, allow_transient: bool) -> SourceSpec:
    allowed = {"base"} | ({"transient", "lambda"} if allow_transient else set())
    for key, (_, lineno) in body.items():
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{name}]", lineno)
    base: tuple[SourceTerm, ...] = ()
    transient: tuple[SourceTerm, ...] = ()
    decay = 0.0
    if "base" in body:
        value, lineno = body["base"]
        base = _parse_terms(value, dimension, lineno)
    if "transient" in body:
        value, lineno = body["transient"]
        transient = _parse_terms(value, dimension, lineno)
    if "lambda" in body:
        value, lineno = body["lambda"]
        try:
            decay = float(value)
        except ValueError:
            raise ConfigError(f"cannot parse 'lambda = {value}'", lineno)
        if decay < 0:
            raise ConfigError("lambda must be >= 0", lineno)
    return SourceSpec(base, transient, decay)


def parse_config(text: str) -> ProblemConfig:
    """Parse and validate a config; raises ConfigError with a line number."""
    sections = _parse_sections(text)
    if "problem" not in sections:
        raise ConfigError("missing [problem] section")
    problem = sections.pop("problem")
    for key, (_, lineno) in problem.items():
        if key not in _PROBLEM_KEYS:
            raise ConfigError(f"unknown key '{key}' in [problem]", lineno)

    dimension, _ = _take(problem, "dimension", int, default=1)
    if dimension not in (1, 2):
        raise ConfigError("dimension must be 1 or 2",
                          problem["dimension"][1] if "dimension" in problem else None)
    n_x, nx_line = _take(problem, "n_x", int, required=True)
    length_x, _ = _take(problem, "length_x", float, default=1.0)
    n_y, _ = _take(problem, "n_y", int)
    length_y, _ = _take(problem, "length_y", float,
                        default=1.0 if dimension == 2 else None)
    try:
        if dimension == 1:
            grid = make_grid(1, n_x, length_x)
        else:
            if n_y is None:
                raise ConfigError("2D problem requires n_y")
            grid = make_grid(2, n_x, length_x, n_y, length_y)
    except ValueError as exc:
        raise ConfigError(str(exc), nx_line)

    n_membranes, nm_line = _take(problem, "n_membranes", int, default=1)
    if n_membranes < 1:
        raise ConfigError("n_membranes must be >= 1", nm_line)
    p, p_line = _take(problem, "p", float, default=2.0)
    if not p > 1:
        raise ConfigError("p must exceed 1", p_line)
    t_final, tf_line = _take(problem, "t_final", float, default=1.0)
    if not t_final > 0:
        raise ConfigError("t_final must be positive", tf_line)
    dt, dt_line = _take(problem, "dt", float, default=0.01)
    if not dt > 0:
        raise ConfigError("dt must be positive", dt_line)
    if dt > t_final:
        raise ConfigError("dt must not exceed t_final", dt_line)
    epsilon, eps_line = _take(problem, "epsilon", float)
    epsilon_given = epsilon is not None
    if epsilon is None:
        epsilon = grid.h_x ** 2
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive", eps_line)
    snapshot_times, _ = _take(problem, "snapshot_times", _parse_float_list,
                              default=(t_final,))
    seed, _ = _take(problem, "seed", int, default=0)

    sources: list[SourceSpec] = [SourceSpec() for _ in range(n_membranes)]
    initials: list[SourceSpec] = [SourceSpec() for _ in range(n_membranes)]
    for name in list(sections):
        if not (name.startswith("source.") or name.startswith("initial.")):
            continue
        prefix, _, index_text = name.partition(".")
        try:
            index = int(index_text)
        except ValueError:
            raise ConfigError(f"bad component index in [{name}]")
        if index < 1 or index > n_membranes:
            raise ConfigError(
                f"[{name}] refers to a nonexistent component "
                f"(n_membranes = {n_membranes})")
        spec = _parse_component_section(name, sections.pop(name), dimension,
                                        allow_transient=(prefix == "source"))
        if prefix == "source":
            sources[index - 1] = spec
        else:
            initials[index - 1] = spec

    tolerances = sections.pop("tolerances", {})
    for key, (_, lineno) in tolerances.items():
        if key not in _TOLERANCE_KEYS:
            raise ConfigError(f"unknown key '{key}' in [tolerances]", lineno)
    newton_tol, _ = _take(tolerances, "newton_tol", float, default=1e-9)
    oracle_tol, _ = _take(tolerances, "oracle_tol", float, default=1e-9)
    tol_c, _ = _take(tolerances, "tol_c", float)
    gap_tol, _ = _take(tolerances, "gap_tol", float, default=1e-9)
    tol_c_given = tol_c is not None
    if tol_c is None:
        tol_c = max(10.0 * epsilon, grid.h_x)

    if sections:
        leftover = next(iter(sections))
        raise ConfigError(f"unknown section [{leftover}]")

    config = ProblemConfig(
        grid=grid, n_membranes=n_membranes, p=p, t_final=t_final, dt=dt,
        epsilon=epsilon, sources=tuple(sources), initials=tuple(initials),
        newton_tol=newton_tol, oracle_tol=oracle_tol, tol_c=tol_c,
        gap_tol=gap_tol, snapshot_times=tuple(snapshot_times), seed=seed,
        epsilon_given=epsilon_given, tol_c_given=tol_c_given,
    )
    # evaluate initial data once so ordering repairs surface as warnings
    _, warnings = initial_state(config)
    if warnings:
        config = replace(config, warnings=tuple(warnings))
    return config


def load_config(path) -> ProblemConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())
