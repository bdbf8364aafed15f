"""Populations and the three-way relational network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, NetworkConfig
from .engine import Network
from .plasticity import LearningRates, Rule, SynapseMatrix

PERIPHERAL = ("A", "B", "C")
HIDDEN = "H"


@dataclass(frozen=True)
class PopulationSpec:
    n_exc: int
    n_inh: int
    n_input: int
    role: str = "peripheral"

    def __post_init__(self):
        if self.role not in ("peripheral", "hidden"):
            raise ConfigError(f"unknown role {self.role!r}")
        if self.n_exc <= 0 or self.n_inh <= 0 or self.n_exc != 4 * self.n_inh:
            raise ConfigError("populations need n_exc : n_inh = 4 : 1")
        if self.role == "hidden" and self.n_input != 0:
            raise ConfigError("hidden populations have no input group")
        if self.role == "peripheral" and self.n_input <= 0:
            raise ConfigError("peripheral populations need an input group")


def rule_for(source_cls: str, target_cls: str) -> Rule:
    """Plasticity rule implied by the cell classes at both ends."""
    if target_cls == "inh":
        return Rule.STATIC
    if source_cls == "inh":
        return Rule.INHIB
    return Rule.TRIPLET  # exc or input onto exc


@dataclass(frozen=True)
class ConnectionSpec:
    source: tuple[str, str]  # (population, cell class)
    target: tuple[str, str]
    probability: float = 0.1
    init_weight_max: float = 0.3
    rule: Rule | None = None

    def __post_init__(self):
        expected = rule_for(self.source[1], self.target[1])
        if self.rule is None:
            object.__setattr__(self, "rule", expected)
        elif Rule(self.rule) != expected:
            raise ConfigError(
                f"{self.source}->{self.target} must use {expected.name}, not {Rule(self.rule).name}")
        if not 0 < self.probability <= 1:
            raise ConfigError("connection probability must lie in (0, 1]")
        if self.init_weight_max < 0:
            raise ConfigError("init_weight_max must be non-negative")


def connect_sparse(n_pre: int, n_post: int, spec: ConnectionSpec,
                   rng: np.random.Generator, same_group: bool = False,
                   w_max: float = 1.0, plasticity=None, name: str = "") -> SynapseMatrix:
    """Independent Bernoulli(p) wiring with uniform initial weights."""
    mask = rng.random((n_pre, n_post)) < spec.probability
    if same_group:
        np.fill_diagonal(mask, False)
    pre, post = np.nonzero(mask)
    w = rng.uniform(0.0, spec.init_weight_max, size=len(pre))
    kw = {}
    if plasticity is not None:
        kw = dict(triplet=plasticity.triplet, inhib=plasticity.inhib)
    target = None
    if spec.rule == Rule.TRIPLET and spec.init_weight_max > 0:
        target = spec.probability * n_pre * spec.init_weight_max / 2.0
    return SynapseMatrix(n_pre, n_post, pre, post, w, rule=spec.rule, w_max=w_max,
                         inhibitory_source=spec.source[1] == "inh",
                         target_sum=target, name=name or _mname(spec), **kw)


def _mname(spec: ConnectionSpec) -> str:
    return f"{spec.source[0]}.{spec.source[1]}->{spec.target[0]}.{spec.target[1]}"


@dataclass
class Population:
    name: str
    spec: PopulationSpec

    @property
    def exc(self) -> str:
        return f"{self.name}_exc"

    @property
    def inh(self) -> str:
        return f"{self.name}_inh"

    @property
    def input(self) -> str | None:
        return f"X_{self.name}" if self.spec.role == "peripheral" else None

    @property
    def peripheral(self) -> bool:
        return self.spec.role == "peripheral"


class ModularNetwork(Network):
    """A network made of structurally equivalent populations."""

    def __init__(self, config: NetworkConfig, seed: int = 0):
        pl = config.plasticity
        super().__init__(dt=config.dt, seed=seed,
                         rates=LearningRates(pl.eta_pre, pl.eta_post, pl.eta_inh))
        self.config = config
        self.seed = seed
        self.populations: dict[str, Population] = {}
        self.tracker = None

    @property
    def peripheral(self) -> list[str]:
        return [n for n, p in self.populations.items() if p.peripheral]

    @property
    def hidden(self) -> list[str]:
        return [n for n, p in self.populations.items() if not p.peripheral]

    def input_matrix(self, pop: str) -> SynapseMatrix:
        p = self.populations[pop]
        return self.matrix(p.input, p.exc)

    def recurrent_matrix(self, pop: str) -> SynapseMatrix:
        p = self.populations[pop]
        return self.matrix(p.exc, p.exc)

    def input_group(self, pop: str):
        return self.inputs[self.populations[pop].input]

    def exc_group(self, pop: str):
        return self.groups[self.populations[pop].exc]


class ThreeWayNetwork(ModularNetwork):
    """Peripheral A, B, C each wired both ways to the hidden population H."""


def _spec(config: NetworkConfig, kind: str, src, tgt) -> ConnectionSpec:
    p, wmax = config.connectivity.for_kind(kind)
    return ConnectionSpec(src, tgt, p, wmax)


def build_population(spec: PopulationSpec, config: NetworkConfig,
                     rng: np.random.Generator, network: ModularNetwork | None = None,
                     name: str = "A") -> Population:
    """Add one population (and its input group if peripheral) to ``network``."""
    if network is None:
        network = ModularNetwork(config)
    pop = Population(name, spec)
    nc = config.neurons
    w_max = config.connectivity.w_max
    pl = config.plasticity
    network.add_lif(pop.exc, spec.n_exc, nc.exc, excitatory=True)
    network.add_lif(pop.inh, spec.n_inh, nc.inh, excitatory=False)
    sizes = {"exc": spec.n_exc, "inh": spec.n_inh, "input": spec.n_input}
    groups = {"exc": pop.exc, "inh": pop.inh, "input": pop.input}
    wiring = [("exc", "exc", "exc_exc"), ("exc", "inh", "exc_inh"),
              ("inh", "exc", "inh_exc"), ("inh", "inh", "inh_inh")]
    if pop.peripheral:
        network.add_input(pop.input, spec.n_input)
        wiring = [("input", "exc", "input_exc"), ("input", "inh", "input_inh")] + wiring
    for s, t, kind in wiring:
        cs = _spec(config, kind, (name, s), (name, t))
        m = connect_sparse(sizes[s], sizes[t], cs, rng, same_group=(s == t),
                           w_max=w_max, plasticity=pl)
        network.connect(groups[s], groups[t], m)
    network.populations[name] = pop
    return pop


def population_spec(config: NetworkConfig, role: str) -> PopulationSpec:
    sc = config.scale
    return PopulationSpec(sc.n_exc, sc.n_inh, sc.n_input if role == "peripheral" else 0, role)


def build_isolated(config: NetworkConfig, seed: int = 0, name: str = "A") -> ModularNetwork:
    """A single peripheral population with its input group and nothing else."""
    net = ModularNetwork(config, seed)
    rng = np.random.default_rng([seed, 1])
    build_population(population_spec(config, "peripheral"), config, rng, net, name)
    net.layout
    return net


def build_three_way(config: NetworkConfig, seed: int = 0) -> ThreeWayNetwork:
    """Three peripheral populations plus the hidden one, wired as in the model."""
    net = ThreeWayNetwork(config, seed)
    rng = np.random.default_rng([seed, 1])  # construction stream, separate from simulation
    for name in PERIPHERAL:
        build_population(population_spec(config, "peripheral"), config, rng, net, name)
    build_population(population_spec(config, "hidden"), config, rng, net, HIDDEN)
    h = net.populations[HIDDEN]
    n = config.scale.n_exc
    w_max = config.connectivity.w_max
    for name in PERIPHERAL:
        p = net.populations[name]
        for src, tgt, kind in ((p, h, "periph_hidden"), (h, p, "hidden_periph")):
            cs = _spec(config, kind, (src.name, "exc"), (tgt.name, "exc"))
            m = connect_sparse(n, n, cs, rng, w_max=w_max, plasticity=config.plasticity)
            net.connect(src.exc, tgt.exc, m)
    net.layout
    return net
