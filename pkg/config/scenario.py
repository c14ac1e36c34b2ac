"""
Scenario configuration models.

A scenario file is parsed by config.grammar into sections of raw strings;
each section is validated by its pydantic model here. Errors carry the
line number of the offending key.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.grammar import Document, ScenarioError, format_document, parse_document
from protocol.events import OPERATOR_ACTIONS
from protocol.product import ProductConfig
from protocol.rules import (
    CommunityRuleConfig,
    CompatibilityMatrix,
    DynamicRuleConfig,
    RuleError,
    StaticRuleConfig,
)
from protocol.sink import ProductProvision
from simulation.channel import ChannelModel
from simulation.energy import EnergyModel
from simulation.mac import MacConfig

logger = logging.getLogger(__name__)

Protocol = Literal["ours", "rrr"]
TrafficName = Literal["none", "congested", "not-congested"]
Flavor = Literal["ncf0", "ncf1", "ncf2", "full"]
Point = tuple[float, float]

RULE_KEYS = ("v_min", "v_max", "delta_v", "t_cr", "n_c", "d_min", "delta_d")
GOLDEN_SCENARIOS = ("registration", "temperature-alert", "incompatible-approach")


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ScenarioSection(_Section):
    name: str = "scenario"
    duration: float = Field(default=200.0, gt=0)
    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=1, ge=0)
    routing: Protocol = "ours"
    drain: float = Field(default=5.0, ge=0)
    application: bool = True
    traffic: TrafficName = "none"
    traffic_start: float = Field(default=10.0, ge=0)
    boot_jitter: float = Field(default=1.0, ge=0)
    default_flavor: Flavor = "full"
    mobility_step: float = Field(default=0.5, gt=0)
    golden: Optional[Literal["registration", "temperature-alert", "incompatible-approach"]] = None


class TopologySection(_Section):
    n_nodes: int = Field(default=50, ge=1)
    area: Point = (300.0, 300.0)
    sink: Optional[Point] = None

    @property
    def sink_xy(self) -> Point:
        return self.sink if self.sink is not None else (self.area[0] / 2.0, 0.0)


class RoutingSection(_Section):
    k_paths: int = Field(default=2, ge=1)
    gradient_period: float = Field(default=100.0, gt=0)
    gradient_start: Optional[float] = Field(default=None, ge=0)
    gathering_window: float = Field(default=0.05, gt=0)
    staleness: float = Field(default=5.0, gt=0)
    inuse_lifetime: float = Field(default=10.0, gt=0)
    rrr_threshold: float = Field(default=3.0, ge=0)
    rrr_window: float = Field(default=5.0, gt=0)
    ttl: Optional[int] = Field(default=None, ge=1)


class RulesSection(_Section):
    """Default rule profile installed by the control center."""

    v_min: float = 0.0
    v_max: float = 40.0
    delta_v: float = 1.0
    t_cr: float = 30.0
    n_c: int = 3
    d_min: float = 5.0
    delta_d: float = 3.0

    @model_validator(mode="after")
    def _check(self) -> "RulesSection":
        StaticRuleConfig(v_min=self.v_min, v_max=self.v_max, delta_v=self.delta_v)
        DynamicRuleConfig(t_cr=self.t_cr, n_c=self.n_c)
        CommunityRuleConfig(d_min=self.d_min, delta_d=self.delta_d)
        return self

    def static(self) -> StaticRuleConfig:
        return StaticRuleConfig(v_min=self.v_min, v_max=self.v_max, delta_v=self.delta_v)

    def dynamic(self) -> DynamicRuleConfig:
        return DynamicRuleConfig(t_cr=self.t_cr, n_c=self.n_c)

    def community(self, matrix: CompatibilityMatrix) -> CommunityRuleConfig:
        return CommunityRuleConfig(d_min=self.d_min, delta_d=self.delta_d, matrix=matrix)


class MatrixSection(_Section):
    path: str


class ProductSection(_Section):
    id: int = Field(ge=1)
    symbol: str = ""
    flavor: Optional[Flavor] = None
    position: Optional[Point] = None
    boot: Optional[float] = Field(default=None, ge=0)
    waypoints: tuple[Point, ...] = ()
    speed: float = Field(default=1.0, ge=0)
    move_start: float = Field(default=0.0, ge=0)
    temperature_start: float = 20.0
    temperature_step: float = 0.0
    temperature_noise: float = Field(default=0.0, ge=0)
    gre_period: float = Field(default=2.0, gt=0)
    sample_period: float = Field(default=8.0, gt=0)
    v_min: Optional[float] = None
    v_max: Optional[float] = None
    delta_v: Optional[float] = None
    t_cr: Optional[float] = None
    n_c: Optional[int] = None
    d_min: Optional[float] = None
    delta_d: Optional[float] = None

    def temperature(self, k: int, noise: float = 0.0) -> float:
        return self.temperature_start + self.temperature_step * k + self.temperature_noise * noise


class OperatorCommandSpec(_Section):
    time: float = Field(ge=0)
    action: str
    target: int = Field(ge=1)

    @field_validator("action")
    @classmethod
    def _known_action(cls, value: str) -> str:
        if value not in OPERATOR_ACTIONS:
            raise ValueError(f"unknown operator action {value!r}; expected one of {OPERATOR_ACTIONS}")
        return value


class OperatorSection(_Section):
    commands: tuple[OperatorCommandSpec, ...] = ()


class SweepSection(_Section):
    densities: tuple[int, ...] = (50, 100, 200)
    profiles: tuple[Literal["congested", "not-congested"], ...] = ("congested",)
    protocols: tuple[Protocol, ...] = ("ours", "rrr")
    master_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _nonempty(self) -> "SweepSection":
        if not (self.densities and self.profiles and self.protocols):
            raise ValueError("densities, profiles and protocols must all be non-empty")
        if any(d < 1 for d in self.densities):
            raise ValueError("densities must be >= 1")
        return self


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    topology: TopologySection = Field(default_factory=TopologySection)
    channel: ChannelModel = Field(default_factory=ChannelModel)
    mac: MacConfig = Field(default_factory=MacConfig)
    energy: EnergyModel = Field(default_factory=EnergyModel)
    routing: RoutingSection = Field(default_factory=RoutingSection)
    rules: RulesSection = Field(default_factory=RulesSection)
    matrix_path: Optional[str] = None
    matrix: CompatibilityMatrix = Field(default_factory=CompatibilityMatrix)
    products: dict[int, ProductSection] = Field(default_factory=dict)
    operator: OperatorSection = Field(default_factory=OperatorSection)
    sweep: Optional[SweepSection] = None

    @property
    def name(self) -> str:
        return self.scenario.name

    def product(self, product_id: int) -> ProductSection:
        return self.products.get(product_id) or ProductSection(id=product_id)

    def flavor(self, product_id: int) -> str:
        return self.product(product_id).flavor or self.scenario.default_flavor

    def effective_rules(self, product_id: int) -> RulesSection:
        section = self.product(product_id)
        overrides = {k: getattr(section, k) for k in RULE_KEYS if getattr(section, k) is not None}
        if not overrides:
            return self.rules
        return RulesSection(**{**self.rules.model_dump(), **overrides})

    def provision(self, product_id: int) -> ProductProvision:
        rules = self.effective_rules(product_id)
        return ProductProvision(
            symbol=self.product(product_id).symbol,
            static_cfg=rules.static(),
            dynamic_cfg=rules.dynamic(),
            community_cfg=rules.community(self.matrix),
        )

    def product_config(self, product_id: int) -> ProductConfig:
        """What the product has preinstalled before talking to the sink."""
        section = self.product(product_id)
        flavor = self.flavor(product_id)
        has_symbols = flavor in ("ncf1", "full")
        has_rules = flavor in ("ncf2", "full")
        rules = self.effective_rules(product_id) if has_rules else self.rules
        return ProductConfig(
            product_id=product_id,
            symbol=section.symbol if has_symbols else "",
            has_symbols=has_symbols,
            has_rules=has_rules,
            static_cfg=rules.static(),
            dynamic_cfg=rules.dynamic(),
            community_cfg=rules.community(self.matrix),
            gre_period=section.gre_period,
            sample_period=section.sample_period,
            channel=self.channel,
        )

    def override(self, **changes) -> "ScenarioConfig":
        """Copy with command-line overrides applied (None values are ignored)."""
        scenario_keys = {"seed", "trials", "duration", "routing", "traffic", "name"}
        scenario = {k: v for k, v in changes.items() if k in scenario_keys and v is not None}
        update: dict = {}
        if scenario:
            update["scenario"] = ScenarioSection(**{**self.scenario.model_dump(), **scenario})
        if changes.get("n_nodes") is not None:
            update["topology"] = TopologySection(**{**self.topology.model_dump(), "n_nodes": changes["n_nodes"]})
        return self.model_copy(update=update) if update else self


# ---------------------------------------------------------------------------
# text -> config
# ---------------------------------------------------------------------------

def _split(value: str, sep: str = ",") -> list[str]:
    return [part.strip() for part in value.split(sep) if part.strip()]


def _point(value: str) -> tuple[str, ...]:
    return tuple(p for p in re.split(r"[\s,]+", value.strip()) if p)


def _none(value: str) -> Optional[str]:
    return None if value.lower() in ("none", "") else value


def _commands(value: str) -> list[dict]:
    commands = []
    for chunk in _split(value, ";"):
        parts = chunk.split()
        if len(parts) != 3:
            raise ValueError(f"expected '<time> <action> <target>', got {chunk!r}")
        commands.append({"time": parts[0], "action": parts[1], "target": parts[2]})
    return commands


_CONVERTERS = {
    "densities": _split,
    "profiles": _split,
    "protocols": _split,
    "area": _point,
    "sink": lambda v: None if _none(v) is None else _point(v),
    "position": lambda v: None if _none(v) is None else _point(v),
    "waypoints": lambda v: [_point(p) for p in _split(v, ";")],
    "commands": _commands,
    "ttl": _none,
    "boot": _none,
    "gradient_start": _none,
    "golden": _none,
    "flavor": _none,
}

_SECTION_MODELS: dict[str, type[BaseModel]] = {
    "scenario": ScenarioSection,
    "topology": TopologySection,
    "channel": ChannelModel,
    "mac": MacConfig,
    "energy": EnergyModel,
    "routing": RoutingSection,
    "rules": RulesSection,
    "matrix": MatrixSection,
    "operator": OperatorSection,
    "sweep": SweepSection,
}


def _validate_section(doc: Document, name: str, model: type[BaseModel], extra: Optional[dict] = None):
    section = doc[name]
    unknown = [k for k in section.entries if k not in model.model_fields]
    if unknown:
        raise ScenarioError(f"[{name}] unknown key {unknown[0]!r}", doc.path, section.line_of(unknown[0]))
    values: dict = dict(extra or {})
    for key, entry in section.entries.items():
        convert = _CONVERTERS.get(key)
        try:
            values[key] = convert(entry.value) if convert else entry.value
        except ValueError as exc:
            raise ScenarioError(f"[{name}] {key}: {exc}", doc.path, entry.line) from exc
    try:
        return model.model_validate(values)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else None
        line = section.line_of(key) if key else section.line
        where = f"[{name}] {key}" if key else f"[{name}]"
        raise ScenarioError(f"{where}: {error['msg']}", doc.path, line) from exc


def build_scenario(doc: Document, base_dir: Optional[Path] = None) -> ScenarioConfig:
    """Validate a parsed document and load the compatibility matrix it names."""
    parts: dict = {}
    products: dict[int, ProductSection] = {}
    for section in doc:
        if section.name.startswith("product."):
            raw_id = section.name.split(".", 1)[1]
            if not raw_id.isdigit() or int(raw_id) < 1:
                raise ScenarioError(f"product id must be a positive integer, got {raw_id!r}", doc.path, section.line)
            products[int(raw_id)] = _validate_section(doc, section.name, ProductSection, {"id": int(raw_id)})
        elif section.name in _SECTION_MODELS:
            parts[section.name] = _validate_section(doc, section.name, _SECTION_MODELS[section.name])
        else:
            raise ScenarioError(f"unknown section [{section.name}]", doc.path, section.line)

    matrix = CompatibilityMatrix()
    matrix_path = None
    if "matrix" in parts:
        matrix_path = parts.pop("matrix").path
        resolved = Path(matrix_path)
        if not resolved.is_absolute() and base_dir is not None:
            resolved = base_dir / resolved
        try:
            matrix = CompatibilityMatrix.load(resolved)
        except OSError as exc:
            raise ScenarioError(f"cannot read matrix file {str(resolved)!r}: {exc.strerror}",
                                doc.path, doc.line_of("matrix", "path")) from exc
        except RuleError as exc:
            raise ScenarioError(f"matrix file {str(resolved)!r}: {exc}", doc.path, doc.line_of("matrix", "path")) from exc

    config = ScenarioConfig(matrix_path=matrix_path, matrix=matrix, products=products, **parts)
    _check_references(config, doc)
    return config


def _check_references(config: ScenarioConfig, doc: Document) -> None:
    n = config.topology.n_nodes
    for pid, product in config.products.items():
        name = f"product.{pid}"
        if pid > n:
            raise ScenarioError(f"product {pid} exceeds topology n_nodes={n}", doc.path, doc.line_of(name))
        if product.symbol and product.symbol not in config.matrix:
            raise ScenarioError(f"symbol {product.symbol!r} is not in the compatibility matrix",
                                doc.path, doc.line_of(name, "symbol"))
        try:
            config.effective_rules(pid)
        except (ValidationError, RuleError) as exc:
            raise ScenarioError(f"[{name}] invalid rule override: {exc}", doc.path, doc.line_of(name)) from exc
    for command in config.operator.commands:
        if command.target > n:
            raise ScenarioError(f"operator command targets unknown product {command.target}",
                                doc.path, doc.line_of("operator", "commands"))


def parse_scenario(text: str, base_dir: Optional[Path] = None, path: Optional[str] = None) -> ScenarioConfig:
    return build_scenario(parse_document(text, path), base_dir)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc.strerror}", str(path)) from exc
    return parse_scenario(text, base_dir=path.parent, path=str(path))


# ---------------------------------------------------------------------------
# config -> text
# ---------------------------------------------------------------------------

def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple) and value and all(isinstance(v, tuple) for v in value):
        return "; ".join(", ".join(_format_value(c) for c in point) for point in value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _entries(model: BaseModel, skip: tuple[str, ...] = (), drop_none: bool = False) -> list[tuple[str, str]]:
    entries = []
    for key in type(model).model_fields:
        if key in skip:
            continue
        value = getattr(model, key)
        if drop_none and value is None:
            continue
        entries.append((key, _format_value(value)))
    return entries


def dump_scenario(config: ScenarioConfig) -> str:
    """Serialize back to the scenario grammar; parsing the result gives an equal config."""
    sections: list[tuple[str, list[tuple[str, str]]]] = [
        ("scenario", _entries(config.scenario)),
        ("topology", _entries(config.topology)),
        ("channel", _entries(config.channel)),
        ("mac", _entries(config.mac)),
        ("energy", _entries(config.energy)),
        ("routing", _entries(config.routing)),
        ("rules", _entries(config.rules)),
    ]
    if config.matrix_path is not None:
        sections.append(("matrix", [("path", config.matrix_path)]))
    if config.operator.commands:
        commands = "; ".join(f"{c.time!r} {c.action} {c.target}" for c in config.operator.commands)
        sections.append(("operator", [("commands", commands)]))
    if config.sweep is not None:
        sections.append(("sweep", _entries(config.sweep)))
    for pid in sorted(config.products):
        sections.append((f"product.{pid}", _entries(config.products[pid], skip=("id",), drop_none=True)))
    return format_document(sections)
