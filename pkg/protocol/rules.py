"""
Security rule engine for active products.

Four rule families classify a product into G / B / D:
- static: sensed value against [v_min, v_max] with a safety margin
- dynamic: persistence of a bad static state, or too many G->B switches
- community: distance to a chemically incompatible neighbor
- global: worst level over the other three

Everything here is pure: no I/O, no clock, no simulator imports.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterable, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

logger = logging.getLogger(__name__)


class RuleError(Exception):
    """Base class for rule-engine errors."""


class InvalidRuleConfig(RuleError, ValueError):
    """A rule configuration violates its invariants."""


class UnknownSymbolError(RuleError, KeyError):
    """A chemical symbol is not part of the compatibility matrix."""


class EmptyLevelsError(RuleError, ValueError):
    """combine_global was called without any level."""


class SecurityLevel(IntEnum):
    """Escalation order is the integer order: G < B < D."""

    G = 0
    B = 1
    D = 2

    def __str__(self) -> str:
        return self.name


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

def _check_static(v_min: float, v_max: float, delta_v: float) -> None:
    if delta_v < 0:
        raise InvalidRuleConfig(f"delta_v must be >= 0, got {delta_v}")
    if v_min + delta_v > v_max - delta_v:
        raise InvalidRuleConfig(
            f"empty good band: v_min+delta_v={v_min + delta_v} > v_max-delta_v={v_max - delta_v}"
        )


def _rule_error(exc: ValidationError) -> Exception:
    for error in exc.errors():
        cause = (error.get("ctx") or {}).get("error")
        if isinstance(cause, InvalidRuleConfig):
            return cause
    return exc


class StaticRuleConfig(BaseModel):
    """Thresholds of the static rule, in sensor units (degrees C)."""

    model_config = ConfigDict(frozen=True)

    v_min: float = 0.0
    v_max: float = 40.0
    delta_v: float = 1.0

    def __init__(self, **data: Any) -> None:
        # pydantic wraps validator errors; direct construction surfaces ours
        try:
            super().__init__(**data)
        except ValidationError as exc:
            raise _rule_error(exc) from None

    @model_validator(mode="after")
    def _validate(self) -> "StaticRuleConfig":
        _check_static(self.v_min, self.v_max, self.delta_v)
        return self


class DynamicRuleConfig(BaseModel):
    """Critical persistence period (s) and allowed G->B switch count."""

    model_config = ConfigDict(frozen=True)

    t_cr: float = Field(default=30.0, gt=0)
    n_c: int = Field(default=3, ge=1)


class CompatibilityMatrix:
    """
    Symmetric compatibility relation over opaque chemical symbols.

    Pairs not listed explicitly are Compatible, and every symbol is
    compatible with itself.
    """

    def __init__(self, symbols: Iterable[str] = (), incompatible: Iterable[tuple[str, str]] = ()):
        self._symbols = set(symbols)
        self._incompatible: set[frozenset[str]] = set()
        for a, b in incompatible:
            self._symbols.update((a, b))
            if a != b:
                self._incompatible.add(frozenset((a, b)))

    @property
    def symbols(self) -> frozenset[str]:
        return frozenset(self._symbols)

    def incompatible_pairs(self) -> list[tuple[str, str]]:
        return sorted(tuple(sorted(pair)) for pair in self._incompatible)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._symbols

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CompatibilityMatrix):
            return NotImplemented
        return self._symbols == other._symbols and self._incompatible == other._incompatible

    def __repr__(self) -> str:
        return f"CompatibilityMatrix(symbols={sorted(self._symbols)}, incompatible={self.incompatible_pairs()})"

    def is_compatible(self, a: str, b: str) -> bool:
        for symbol in (a, b):
            if symbol not in self._symbols:
                raise UnknownSymbolError(symbol)
        return a == b or frozenset((a, b)) not in self._incompatible

    @classmethod
    def from_text(cls, text: str) -> "CompatibilityMatrix":
        """
        Parse `SYMBOL_A SYMBOL_B incompatible|compatible` lines.

        Blank lines and `#` comments are skipped. A single symbol on a line
        only declares the symbol.
        """
        symbols: set[str] = set()
        incompatible: list[tuple[str, str]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) == 1:
                symbols.add(parts[0])
                continue
            if len(parts) != 3 or parts[2].lower() not in ("compatible", "incompatible"):
                raise InvalidRuleConfig(f"line {lineno}: expected 'A B compatible|incompatible', got {raw!r}")
            a, b, relation = parts[0], parts[1], parts[2].lower()
            symbols.update((a, b))
            if relation == "incompatible":
                incompatible.append((a, b))
        return cls(symbols, incompatible)

    @classmethod
    def load(cls, path: str | Path) -> "CompatibilityMatrix":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = [f"{a} {b} incompatible" for a, b in self.incompatible_pairs()]
        paired = {s for pair in self._incompatible for s in pair}
        lines += sorted(s for s in self._symbols if s not in paired)
        return "\n".join(lines) + "\n"


class CommunityRuleConfig(BaseModel):
    """Critical distance (m), distance margin (m) and the compatibility matrix."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d_min: float = Field(default=5.0, gt=0)
    delta_d: float = Field(default=3.0, ge=0)
    matrix: CompatibilityMatrix = Field(default_factory=CompatibilityMatrix)


# ---------------------------------------------------------------------------
# Dynamic rule state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicRuleState:
    """
    Occur counter, start of the current contiguous B episode, and last
    static level seen. `latched` keeps a dynamic D until an operator reset.
    """

    occur_count: int = 0
    bad_since: Optional[float] = None
    last_level: SecurityLevel = SecurityLevel.G
    latched: bool = False


def reset_dynamic() -> DynamicRuleState:
    """Fresh dynamic state; the only way to clear a latched D."""
    return DynamicRuleState()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def eval_static(value: float, cfg: StaticRuleConfig) -> SecurityLevel:
    """
    Classify a sensed value.

    G owns the closed band [v_min+dv, v_max-dv], B the half-open remainders
    inside [v_min, v_max], D the strict exterior.
    """
    _check_static(cfg.v_min, cfg.v_max, cfg.delta_v)
    if cfg.v_min + cfg.delta_v <= value <= cfg.v_max - cfg.delta_v:
        return SecurityLevel.G
    if cfg.v_min <= value <= cfg.v_max:
        return SecurityLevel.B
    return SecurityLevel.D


def update_dynamic(
    state: DynamicRuleState,
    s_sr: SecurityLevel,
    now: float,
    cfg: DynamicRuleConfig,
) -> tuple[DynamicRuleState, SecurityLevel]:
    """
    Feed one static-rule sample into the dynamic rule.

    Returns the new state and the dynamic level: D when B has lasted t_cr
    since the episode started, when the G->B switch count reached n_c, or
    when a previous D is still latched; otherwise s_sr unchanged.
    """
    entering_bad = s_sr == SecurityLevel.B and state.last_level == SecurityLevel.G
    occur = state.occur_count + (1 if entering_bad else 0)

    if s_sr == SecurityLevel.B:
        bad_since = state.bad_since if state.last_level == SecurityLevel.B else now
    else:
        bad_since = None

    persisted = bad_since is not None and now - bad_since >= cfg.t_cr
    oscillating = occur >= cfg.n_c
    latched = state.latched or persisted or oscillating

    new_state = replace(
        state,
        occur_count=occur,
        bad_since=bad_since,
        last_level=s_sr,
        latched=latched,
    )
    return new_state, (SecurityLevel.D if latched else s_sr)


def eval_community(
    symb_i: str,
    symb_j: str,
    distance: float,
    cfg: CommunityRuleConfig,
) -> SecurityLevel:
    """Classify one pair of products from their symbols and separation (m)."""
    if distance < 0:
        raise InvalidRuleConfig(f"distance must be >= 0, got {distance}")
    if cfg.matrix.is_compatible(symb_i, symb_j):
        return SecurityLevel.G
    if distance > cfg.d_min + cfg.delta_d:
        return SecurityLevel.G
    if distance >= cfg.d_min:
        return SecurityLevel.B
    return SecurityLevel.D


def combine_global(levels: Iterable[SecurityLevel]) -> SecurityLevel:
    """Worst level of the rule families."""
    levels = list(levels)
    if not levels:
        raise EmptyLevelsError("combine_global needs at least one level")
    return SecurityLevel(max(levels))
