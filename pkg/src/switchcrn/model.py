"""Reaction networks in switching environments.

A model is a list of mass-action reaction networks over a shared set of
species plus a base rate matrix Q for the environment chain.  The switching
speed kappa is not part of the model; it is supplied at analysis time.

The text format is line oriented::

    # comment
    species S1 S2
    environment 1
    0 -> S1 @ 1
    S1 -> 4 S2 @ 0.01
    environment 2
    ...
    switching
    q 1 2 1.0
    q 2 1 1.0

Diagonal entries of Q are derived from the off-diagonal rates.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Q_ROW_SUM_TOL = 1e-12

_NAME = r"[A-Za-z_][A-Za-z0-9_']*"
_TERM_RE = re.compile(rf"^\s*(\d+)?\s*({_NAME})\s*$")


class ModelError(ValueError):
    """Raised for malformed model text or a model violating its invariants."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class Complex:
    """Sparse non-negative integer combination of species.

    ``terms`` holds ``(species_index, count)`` pairs sorted by index with
    count > 0.  The empty tuple is the zero complex.
    """

    terms: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        seen = set()
        for idx, count in self.terms:
            if idx < 0 or count <= 0:
                raise ModelError(f"invalid complex term ({idx}, {count})")
            if idx in seen:
                raise ModelError(f"species index {idx} repeated in complex")
            seen.add(idx)
        object.__setattr__(self, "terms", tuple(sorted(self.terms)))

    @classmethod
    def from_mapping(cls, counts: Mapping[int, int]) -> "Complex":
        return cls(tuple((int(k), int(v)) for k, v in counts.items() if v != 0))

    def __getitem__(self, idx: int) -> int:
        for k, c in self.terms:
            if k == idx:
                return c
        return 0

    @property
    def order(self) -> int:
        return sum(c for _, c in self.terms)

    def as_dict(self) -> dict[int, int]:
        return dict(self.terms)

    def dense(self, d: int) -> np.ndarray:
        out = np.zeros(d, dtype=np.int64)
        for k, c in self.terms:
            out[k] = c
        return out

    def max_index(self) -> int:
        return max((k for k, _ in self.terms), default=-1)


@dataclass(frozen=True)
class Reaction:
    source: Complex
    product: Complex
    rate: float

    def __post_init__(self):
        if self.source == self.product:
            raise ModelError("reaction source and product must differ")
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ModelError(f"rate constant must be positive and finite, got {self.rate!r}")

    def change(self, d: int) -> np.ndarray:
        return self.product.dense(d) - self.source.dense(d)


@dataclass(frozen=True)
class CrnSpec:
    n_species: int
    reactions: tuple[Reaction, ...] = ()

    def __post_init__(self):
        if self.n_species < 1:
            raise ModelError("a network needs at least one species")
        object.__setattr__(self, "reactions", tuple(self.reactions))
        for r in self.reactions:
            if max(r.source.max_index(), r.product.max_index()) >= self.n_species:
                raise ModelError("reaction refers to a species index out of range")


@dataclass(frozen=True)
class SwitchedModel:
    """n environments over d shared species, switched by a base rate matrix Q."""

    species: tuple[str, ...]
    environments: tuple[CrnSpec, ...]
    q: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "environments", tuple(self.environments))
        object.__setattr__(self, "q", tuple(tuple(float(v) for v in row) for row in self.q))
        d = len(self.species)
        if d == 0:
            raise ModelError("no species declared")
        if len(set(self.species)) != d:
            raise ModelError("duplicate species names")
        n = len(self.environments)
        if n == 0:
            raise ModelError("no environments declared")
        for env in self.environments:
            if env.n_species != d:
                raise ModelError("environments disagree on the species set")
        validate_rate_matrix(self.q, n)

    @property
    def n_env(self) -> int:
        return len(self.environments)

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def q_matrix(self) -> np.ndarray:
        return np.array(self.q, dtype=float).reshape(self.n_env, self.n_env)

    def scaled(self, c: float) -> "SwitchedModel":
        """Copy with every rate constant and every Q entry multiplied by c."""
        envs = tuple(
            CrnSpec(e.n_species, tuple(Reaction(r.source, r.product, r.rate * c) for r in e.reactions))
            for e in self.environments
        )
        return SwitchedModel(self.species, envs, tuple(tuple(v * c for v in row) for row in self.q))


def validate_rate_matrix(q: Sequence[Sequence[float]], n: int) -> None:
    if len(q) != n or any(len(row) != n for row in q):
        raise ModelError(f"Q must be {n}x{n}")
    for i, row in enumerate(q):
        for j, v in enumerate(row):
            if not math.isfinite(v):
                raise ModelError(f"Q[{i + 1}][{j + 1}] is not finite")
            if i != j and v < 0:
                raise ModelError(f"Q has negative off-diagonal entry at ({i + 1}, {j + 1})")
        if abs(math.fsum(row)) > Q_ROW_SUM_TOL:
            raise ModelError(f"Q row {i + 1} sums to {math.fsum(row)!r}, not 0")
    if not is_irreducible(q):
        raise ModelError("Q is not irreducible")


def is_irreducible(q: Sequence[Sequence[float]]) -> bool:
    n = len(q)

    def reach(adj):
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in range(n):
                if j not in seen and adj(i, j):
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n

    return reach(lambda i, j: i != j and q[i][j] != 0) and reach(lambda i, j: i != j and q[j][i] != 0)


def rate_matrix_from_offdiag(n: int, rates: Mapping[tuple[int, int], float]) -> tuple[tuple[float, ...], ...]:
    """Build Q from off-diagonal rates keyed by 0-based (i, j); diagonals make rows sum to 0."""
    rows = [[0.0] * n for _ in range(n)]
    for (i, j), v in rates.items():
        rows[i][j] += float(v)
    for i in range(n):
        rows[i][i] = -math.fsum(rows[i][j] for j in range(n) if j != i)
    return tuple(tuple(r) for r in rows)


# -- linearization -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearData:
    """Linear part M and constant inflow of one environment's mean drift."""

    matrix: np.ndarray
    inflow: np.ndarray
    is_mass_action: bool
    is_at_most_monomolecular: bool
    is_linear_generator: bool


def linearize(crn: CrnSpec) -> LinearData:
    """Extract M and the inflow vector so that the drift is M x + inflow.

    Column l of M collects reactions whose source is a single molecule of
    species l.  Sources of order two or more are allowed only if their net
    drift cancels; otherwise the generator is not linear.
    """
    d = crn.n_species
    m = np.zeros((d, d))
    inflow = np.zeros(d)
    higher: dict[Complex, list[np.ndarray]] = {}
    for r in crn.reactions:
        order = r.source.order
        if order == 0:
            inflow += r.rate * r.product.dense(d)
        elif order == 1:
            (l, _), = r.source.terms
            m[:, l] += r.rate * r.change(d)
        else:
            higher.setdefault(r.source, []).append(r.rate * r.change(d))
    mono = not higher
    linear = True
    for terms in higher.values():
        net = np.sum(terms, axis=0)
        scale = sum(np.abs(t).sum() for t in terms)
        if np.abs(net).max() > 1e-12 * scale:
            linear = False
    m.setflags(write=False)
    inflow.setflags(write=False)
    return LinearData(m, inflow, True, mono, linear)


def falling_factorial(x: int, k: int) -> int:
    out = 1
    for j in range(k):
        out *= x - j
    return out


def propensities(crn: CrnSpec, x: Sequence[int]) -> np.ndarray:
    """Mass-action rates kappa_r * prod_m x_m (x_m - 1) ... (x_m - y_m + 1)."""
    out = np.empty(len(crn.reactions))
    for k, r in enumerate(crn.reactions):
        lam = r.rate
        for idx, count in r.source.terms:
            if x[idx] < count:
                lam = 0.0
                break
            lam *= falling_factorial(int(x[idx]), count)
        out[k] = lam
    return out


# -- text format -------------------------------------------------------------


def _parse_complex(text: str, names: Mapping[str, int], line: int, col: int) -> Complex:
    stripped = text.strip()
    if stripped == "0":
        return Complex()
    counts: dict[int, int] = {}
    offset = 0
    for part in text.split("+"):
        m = _TERM_RE.match(part)
        if not m:
            raise ModelError(f"cannot parse complex term {part.strip()!r}", line, col + offset + 1)
        coeff = int(m.group(1)) if m.group(1) else 1
        name = m.group(2)
        if name not in names:
            raise ModelError(f"undeclared species {name!r}", line, col + offset + part.index(name) + 1)
        if coeff == 0:
            raise ModelError("zero coefficient in complex", line, col + offset + 1)
        counts[names[name]] = counts.get(names[name], 0) + coeff
        offset += len(part) + 1
    return Complex.from_mapping(counts)


def _parse_rate(text: str, line: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ModelError(f"cannot parse rate {text.strip()!r}", line, col) from None
    if not (math.isfinite(value) and value > 0):
        raise ModelError(f"rate constant must be positive, got {text.strip()}", line, col)
    return value


def parse_model(text: str) -> SwitchedModel:
    """Parse the line-oriented model format into a validated SwitchedModel."""
    species: list[str] | None = None
    names: dict[str, int] = {}
    envs: list[list[Reaction]] = []
    offdiag: dict[tuple[int, int], float] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        indent = len(body) - len(body.lstrip())
        tokens = body.split()
        head = tokens[0]
        if species is None:
            if head != "species":
                raise ModelError("first statement must be 'species'", lineno, indent + 1)
            species = tokens[1:]
            if not species:
                raise ModelError("no species names given", lineno, indent + 1)
            for k, name in enumerate(species):
                if not re.fullmatch(_NAME, name) or name == "0":
                    raise ModelError(f"invalid species name {name!r}", lineno, body.index(name) + 1)
                if name in names:
                    raise ModelError(f"species {name!r} declared twice", lineno, body.index(name) + 1)
                names[name] = k
            continue
        if head == "species":
            raise ModelError("'species' may appear only once", lineno, indent + 1)
        if head == "environment":
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise ModelError("expected 'environment <k>'", lineno, indent + 1)
            k = int(tokens[1])
            if section == "switching":
                raise ModelError("environments must precede 'switching'", lineno, indent + 1)
            if k != len(envs) + 1:
                raise ModelError(f"expected environment {len(envs) + 1}, got {k}", lineno, body.index(tokens[1]) + 1)
            envs.append([])
            section = "env"
            continue
        if head == "switching":
            if len(tokens) != 1:
                raise ModelError("unexpected tokens after 'switching'", lineno, indent + 1)
            if section == "switching":
                raise ModelError("'switching' may appear only once", lineno, indent + 1)
            section = "switching"
            continue
        if section == "switching":
            if head != "q" or len(tokens) != 4:
                raise ModelError("expected 'q <i> <j> <rate>'", lineno, indent + 1)
            try:
                i, j = int(tokens[1]), int(tokens[2])
            except ValueError:
                raise ModelError("environment indices must be integers", lineno, indent + 1) from None
            n = len(envs)
            if not (1 <= i <= n and 1 <= j <= n):
                raise ModelError(f"environment index out of range 1..{n}", lineno, indent + 1)
            if i == j:
                raise ModelError("diagonal entries of Q are derived, not given", lineno, indent + 1)
            try:
                rate = float(tokens[3])
            except ValueError:
                raise ModelError(f"cannot parse rate {tokens[3]!r}", lineno, body.index(tokens[3]) + 1) from None
            if not math.isfinite(rate) or rate < 0:
                raise ModelError("switching rates must be non-negative", lineno, body.index(tokens[3]) + 1)
            offdiag[(i - 1, j - 1)] = offdiag.get((i - 1, j - 1), 0.0) + rate
            continue
        if section != "env":
            raise ModelError("reaction outside an environment block", lineno, indent + 1)
        arrow = body.find("->")
        at = body.find("@")
        if arrow < 0 or at < 0 or at < arrow:
            raise ModelError("expected '<complex> -> <complex> @ <rate>'", lineno, indent + 1)
        src = _parse_complex(body[:arrow], names, lineno, 0)
        prod = _parse_complex(body[arrow + 2:at], names, lineno, arrow + 2)
        rate = _parse_rate(body[at + 1:], lineno, at + 2)
        if src == prod:
            raise ModelError("reaction source and product must differ", lineno, indent + 1)
        envs[-1].append(Reaction(src, prod, rate))
    if species is None:
        raise ModelError("empty model: missing 'species'")
    if not envs:
        raise ModelError("no environment declared")
    d = len(species)
    q = rate_matrix_from_offdiag(len(envs), offdiag)
    return SwitchedModel(tuple(species), tuple(CrnSpec(d, tuple(rs)) for rs in envs), q)


def format_float(x: float) -> str:
    """Shortest round-trip decimal, with integral values printed without '.0'."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _format_complex(c: Complex, species: Sequence[str]) -> str:
    if not c.terms:
        return "0"
    return " + ".join(species[k] if n == 1 else f"{n} {species[k]}" for k, n in c.terms)


def emit_model(model: SwitchedModel) -> str:
    lines = ["species " + " ".join(model.species)]
    for k, env in enumerate(model.environments, start=1):
        lines.append(f"environment {k}")
        for r in env.reactions:
            lines.append(
                f"{_format_complex(r.source, model.species)} -> "
                f"{_format_complex(r.product, model.species)} @ {format_float(r.rate)}"
            )
    if model.n_env > 1:
        lines.append("switching")
        for i, row in enumerate(model.q):
            for j, v in enumerate(row):
                if i != j and v != 0:
                    lines.append(f"q {i + 1} {j + 1} {format_float(v)}")
    return "\n".join(lines) + "\n"


# -- JSON mirror ---------------------------------------------------------------


def model_to_dict(model: SwitchedModel) -> dict:
    def cx(c: Complex) -> dict:
        return {model.species[k]: n for k, n in c.terms}

    return {
        "species": list(model.species),
        "environments": [
            {"reactions": [{"source": cx(r.source), "product": cx(r.product), "rate": r.rate} for r in env.reactions]}
            for env in model.environments
        ],
        "q": [list(row) for row in model.q],
    }


def model_from_dict(data: Mapping) -> SwitchedModel:
    try:
        species = tuple(data["species"])
        names = {s: k for k, s in enumerate(species)}
        d = len(species)

        def cx(obj) -> Complex:
            if isinstance(obj, str):
                return _parse_complex(obj, names, None, 0)
            unknown = [s for s in obj if s not in names]
            if unknown:
                raise ModelError(f"undeclared species {unknown[0]!r}")
            return Complex.from_mapping({names[s]: int(c) for s, c in obj.items()})

        envs = []
        for env in data["environments"]:
            rs = tuple(Reaction(cx(r["source"]), cx(r["product"]), float(r["rate"])) for r in env["reactions"])
            envs.append(CrnSpec(d, rs))
        q = data.get("q")
        if q is None:
            if len(envs) != 1:
                raise ModelError("missing 'q' for a multi-environment model")
            q = [[0.0]]
        return SwitchedModel(species, tuple(envs), tuple(tuple(float(v) for v in row) for row in q))
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model JSON: {exc}") from None


def model_to_json(model: SwitchedModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def model_from_json(text: str) -> SwitchedModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return model_from_dict(data)


def load_model(path: str) -> SwitchedModel:
    """Read a model file; JSON if it parses as a JSON object, else the text format."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return model_from_json(text)
    return parse_model(text)


def reaction_changes(model: SwitchedModel) -> list[np.ndarray]:
    """Distinct net change vectors y' - y over all environments, in first-seen order."""
    seen: dict[tuple, np.ndarray] = {}
    for env in model.environments:
        for r in env.reactions:
            ch = r.change(model.n_species)
            seen.setdefault(tuple(ch), ch)
    return list(seen.values())


def build_model(
    species: Iterable[str],
    environments: Sequence[Sequence[tuple[Mapping[str, int], Mapping[str, int], float]]],
    q: Sequence[Sequence[float]] | None = None,
) -> SwitchedModel:
    """Convenience constructor from name-keyed complexes.

    Each environment is a list of ``(source, product, rate)`` with complexes
    given as ``{name: count}`` dictionaries.
    """
    species = tuple(species)
    names = {s: k for k, s in enumerate(species)}
    d = len(species)
    envs = tuple(
        CrnSpec(d, tuple(
            Reaction(
                Complex.from_mapping({names[s]: c for s, c in src.items()}),
                Complex.from_mapping({names[s]: c for s, c in prod.items()}),
                float(rate),
            )
            for src, prod, rate in env
        ))
        for env in environments
    )
    if q is None:
        q = [[0.0]]
    return SwitchedModel(species, envs, tuple(tuple(float(v) for v in row) for row in q))


__all__ = [
    "Complex", "Reaction", "CrnSpec", "SwitchedModel", "LinearData", "ModelError",
    "parse_model", "emit_model", "linearize", "propensities", "model_to_dict", "model_from_dict",
    "model_to_json", "model_from_json", "load_model", "format_float", "rate_matrix_from_offdiag",
    "reaction_changes", "build_model", "is_irreducible", "validate_rate_matrix",
]
