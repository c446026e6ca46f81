"""Monte-Carlo runs of the two four-party star-network QKD protocols.

A run has two parts.  The witness rounds test full network nonlocality
(trilocal variant) or CHSH violation on every link (CHSH variant).  The key
rounds use random MUB choices per party and link, keep rounds in which every
link matched, and estimate the QBER on the resulting raw keys.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, InsufficientStatistics, LengthMismatch, NotPositive
from .measurement import MubCollection, QubitBasis, bipartite_statistics, trilocal_statistics_factorized
from .qber import MubAssignment, lab_axes, link_bases, principal_mubs, qber_from_axes
from .qstate import TwoQubitState, depolarize, parse_state
from .security import Threshold, ThresholdKind, threshold
from .trilocal import (
    CHSH_LOCAL_BOUND,
    CLASSICAL_BOUND,
    _HUB_SIGNS,
    _SETTING_SIGNS,
    optimize_chsh,
    optimize_trilocal,
    trilocal_value_from_correlators,
)

MIN_ROUNDS = 1000
MIN_SIFTED = 100
WITNESS_SIGMAS = 2.0


class Variant(str, Enum):
    TRILOCAL = "N4_Trilocal"
    CHSH = "N4_Chsh"

    @classmethod
    def parse(cls, value: str) -> "Variant":
        aliases = {"trilocal": cls.TRILOCAL, "chsh": cls.CHSH}
        if isinstance(value, str) and value.lower() in aliases:
            return aliases[value.lower()]
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown variant {value!r}; use N4_Trilocal or N4_Chsh") from None


class AbortStage(str, Enum):
    WITNESS = "WitnessTest"
    QBER = "QberTest"


EVE_STRATEGY = "InterceptResendRandomMub"


@dataclass(frozen=True)
class EveConfig:
    links: tuple[int, ...]
    strategy: str = EVE_STRATEGY

    def __post_init__(self) -> None:
        if not set(self.links) <= {1, 2, 3}:
            raise ConfigError(f"Eve links must be a subset of {{1, 2, 3}}, got {list(self.links)}")
        if self.strategy != EVE_STRATEGY:
            raise ConfigError(f"unsupported Eve strategy {self.strategy!r}")


@dataclass(frozen=True, eq=False)
class ProtocolConfig:
    """Everything needed to reproduce one simulated run.

    ``mubs`` are given in each link's canonical frame; ``None`` picks the two
    principal directions of every declared state.  ``identical`` defaults to
    whether the three declared states coincide.
    """

    variant: Variant
    states: tuple[TwoQubitState, TwoQubitState, TwoQubitState]
    noise: tuple[float, float, float] = (0.0, 0.0, 0.0)
    eve: EveConfig | None = None
    rounds: int = 200_000
    witness_fraction: float = 0.5
    mubs: MubAssignment | None = None
    seed: int = 0
    identical: bool | None = None
    sampled: bool = False
    force_continue: bool = False
    optimizer_restarts: int = 20
    raw: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.states) != 3:
            raise ConfigError("a run needs three source states")
        if not isinstance(self.rounds, (int, np.integer)) or self.rounds < MIN_ROUNDS:
            raise ConfigError(f"rounds must be an integer >= {MIN_ROUNDS}")
        if not 0.0 < self.witness_fraction < 1.0:
            raise ConfigError("witness_fraction must lie in (0, 1)")
        if len(self.noise) != 3 or any(not 0.0 <= p <= 1.0 for p in self.noise):
            raise ConfigError("noise must be three depolarizing probabilities in [0, 1]")
        if self.optimizer_restarts < 1:
            raise ConfigError("optimizer_restarts must be positive")

    @property
    def mub_assignment(self) -> MubAssignment:
        if self.mubs is not None:
            return self.mubs
        return MubAssignment(tuple(principal_mubs(s) for s in self.states))

    @property
    def declared_identical(self) -> bool:
        if self.identical is not None:
            return self.identical
        return self.states[0] == self.states[1] == self.states[2]

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], **overrides) -> "ProtocolConfig":
        """Build a config from its JSON form; keyword overrides replace fields."""
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {"variant", "states", "noise", "eve", "rounds", "witness_fraction", "mubs", "seed",
                 "identical", "sampled", "force_continue", "optimizer_restarts"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        merged = dict(data)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        try:
            descs = merged["states"]
            if isinstance(descs, Mapping):
                descs = [descs]
            if len(descs) not in (1, 3):
                raise ConfigError("states must hold one or three descriptors")
            states = tuple(parse_state(d) for d in descs)
            if len(states) == 1:
                states = states * 3
        except KeyError:
            raise ConfigError("config needs a 'states' field") from None
        except (NotPositive, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid state descriptor: {exc}") from exc
        noise = merged.get("noise", 0.0)
        noise = (float(noise),) * 3 if np.isscalar(noise) else tuple(float(p) for p in noise)
        eve = merged.get("eve")
        if eve is not None:
            eve = EveConfig(tuple(int(i) for i in eve.get("links", (1, 2, 3))), eve.get("strategy", EVE_STRATEGY))
        return cls(
            variant=Variant.parse(merged.get("variant", "N4_Trilocal")),
            states=states,
            noise=noise,
            eve=eve,
            rounds=int(merged.get("rounds", 200_000)),
            witness_fraction=float(merged.get("witness_fraction", 0.5)),
            mubs=_parse_mubs(merged.get("mubs")),
            seed=int(merged.get("seed", 0)),
            identical=merged.get("identical"),
            sampled=bool(merged.get("sampled", False)),
            force_continue=bool(merged.get("force_continue", False)),
            optimizer_restarts=int(merged.get("optimizer_restarts", 20)),
            raw=dict(data),
        )


def _parse_mubs(value) -> MubAssignment | None:
    if value is None or value == "principal":
        return None
    if value == "zx":
        return MubAssignment.uniform()
    try:
        links = [value] * 3 if len(value) == 2 and np.ndim(value[0]) == 1 else list(value)
        if len(links) != 3:
            raise ConfigError("mubs needs one pair of axes per link")
        return MubAssignment(tuple(MubCollection(QubitBasis.from_vector(a), QubitBasis.from_vector(b))
                                   for a, b in links))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid mubs: {exc}") from exc


def load_config(path: str | Path, **overrides) -> ProtocolConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ProtocolConfig.from_dict(data, **overrides)


# --- channels ------------------------------------------------------------------


def intercept_resend_kraus(mubs: MubCollection) -> list[np.ndarray]:
    """Kraus operators of measuring in a uniformly chosen basis and resending the eigenstate."""
    return [np.sqrt(0.5) * P for basis in mubs for P in basis.projectors()]


def eve_channel(state: TwoQubitState, mubs: MubCollection, strategy: str = EVE_STRATEGY) -> TwoQubitState:
    """Intercept-resend on the edge qubit of one link, averaged over the link's two bases."""
    if strategy != EVE_STRATEGY:
        raise ConfigError(f"unsupported Eve strategy {strategy!r}")
    I2 = np.eye(2)
    out = np.zeros((4, 4), dtype=complex)
    for K in intercept_resend_kraus(mubs):
        A = np.kron(I2, K)
        out += A @ state.matrix @ A.conj().T
    return TwoQubitState(0.5 * (out + out.conj().T))


def edge_mubs(state: TwoQubitState, mubs: MubCollection) -> MubCollection:
    """Lab-frame bases the edge party uses on a link."""
    pairs = link_bases(state, mubs)
    return MubCollection(pairs[0][1], pairs[1][1])


def channel_states(config: ProtocolConfig) -> tuple[TwoQubitState, ...]:
    """States the parties actually share after noise and interception."""
    out = []
    eve_links = set(config.eve.links) if config.eve else set()
    for i, (state, p, coll) in enumerate(zip(config.states, config.noise, config.mub_assignment.links)):
        actual = depolarize(state, p, "B") if p > 0 else state
        if i + 1 in eve_links:
            actual = eve_channel(actual, edge_mubs(state, coll), config.eve.strategy)
        out.append(actual)
    return tuple(out)


# --- key statistics --------------------------------------------------------------


def _as_bits(key) -> np.ndarray:
    if isinstance(key, str):
        return np.array([int(c) for c in key if c in "01"], dtype=np.uint8)
    return np.asarray(key, dtype=np.uint8).ravel()


def estimate_qber(hub_key, edge_keys: Sequence) -> tuple[float, float]:
    """Fraction of sifted rounds where the hub disagrees with at least one edge party.

    ``hub_key`` holds 3-bit blocks (array of shape (n, 3), flat array or
    block string); ``edge_keys`` holds three keys of length n.  Returns the
    estimate and its binomial standard error.
    """
    hub = _as_bits(hub_key)
    if len(edge_keys) != 3:
        raise LengthMismatch("need three edge keys")
    edges = [_as_bits(k) for k in edge_keys]
    n = len(edges[0])
    if any(len(e) != n for e in edges) or len(hub) != 3 * n:
        raise LengthMismatch(f"hub key has {len(hub)} bits, edge keys {[len(e) for e in edges]}")
    if n == 0:
        raise InsufficientStatistics("empty keys")
    hub = hub.reshape(n, 3)
    errors = np.any(hub != np.stack(edges, axis=1), axis=1)
    q = float(np.mean(errors))
    return q, float(np.sqrt(q * (1.0 - q) / n))


def hub_key_string(hub_key: np.ndarray) -> str:
    return " ".join("".join(str(b) for b in block) for block in np.asarray(hub_key).reshape(-1, 3))


def key_string(key: np.ndarray) -> str:
    return "".join(str(int(b)) for b in key)


# --- run ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RunResult:
    variant: Variant
    abort_stage: AbortStage | None
    witness_value: float
    witness_se: float
    witness_bound: float
    witness_passed: bool
    witness_detail: dict
    witness_rounds: int
    sifting_rounds: int
    sifted_length: int
    qber_estimate: float | None
    qber_se: float | None
    qber_model: float
    threshold: Threshold
    hub_key: np.ndarray
    edge_keys: tuple[np.ndarray, np.ndarray, np.ndarray]
    seed: int

    def __post_init__(self) -> None:
        if self.hub_key.size != 3 * self.sifted_length or any(len(k) != self.sifted_length for k in self.edge_keys):
            raise LengthMismatch("key lengths disagree with the sifted length")

    @property
    def witness_sigmas(self) -> float:
        """Violation margin in standard errors (infinite for exact statistics)."""
        margin = self.witness_value - self.witness_bound
        return float(np.inf) if self.witness_se == 0 else margin / self.witness_se

    def to_dict(self, include_keys: bool = False) -> dict:
        d = {
            "variant": self.variant.value,
            "abort_stage": None if self.abort_stage is None else self.abort_stage.value,
            "witness": {"value": self.witness_value, "se": self.witness_se, "bound": self.witness_bound,
                        "passed": self.witness_passed, "rounds": self.witness_rounds, **self.witness_detail},
            "sifting_rounds": self.sifting_rounds,
            "sifted_length": self.sifted_length,
            "qber": {"estimate": self.qber_estimate, "se": self.qber_se, "model": self.qber_model},
            "threshold": {"kind": self.threshold.label, "value": self.threshold.value},
            "seed": self.seed,
        }
        if include_keys:
            d["hub_key"] = hub_key_string(self.hub_key)
            d["edge_keys"] = [key_string(k) for k in self.edge_keys]
        return d

    def to_json(self, include_keys: bool = False) -> str:
        return json.dumps(self.to_dict(include_keys), indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _trilocal_witness(config, actual, rng, n):
    settings = optimize_trilocal(config.states, restarts=config.optimizer_restarts)
    stats = trilocal_statistics_factorized(actual, settings.edge, settings.ghz)
    p = stats.p.reshape(8, 8, 8)  # setting, hub label, edge outcomes
    edge_parity = np.array([(-1) ** bin(k).count("1") for k in range(8)], dtype=float)
    setting_signs = _SETTING_SIGNS.reshape(4, 8)
    if not config.sampled:
        corr = np.einsum("sge,ig,e->is", p, _HUB_SIGNS, edge_parity)
        J = np.clip(np.sum(corr * setting_signs, axis=1) / 8.0, -1.0, 1.0)
        return trilocal_value_from_correlators(J), 0.0, {"correlators": J.tolist()}
    settings_drawn = rng.integers(0, 8, size=n)
    outcomes = np.empty(n, dtype=int)
    for s in range(8):
        idx = np.flatnonzero(settings_drawn == s)
        if idx.size:
            probs = p[s].ravel()
            outcomes[idx] = rng.choice(64, size=idx.size, p=probs / probs.sum())
    g, e = outcomes // 8, outcomes % 8
    z = _HUB_SIGNS[:, g] * edge_parity[e] * setting_signs[:, settings_drawn]  # (4, n)
    J = z.mean(axis=1)
    cov = np.cov(z) / n
    grad = np.sign(J) * np.maximum(np.abs(J), 1e-9) ** (-2.0 / 3.0) / 6.0
    value = trilocal_value_from_correlators(J)
    return value, float(np.sqrt(max(grad @ cov @ grad, 0.0))), {"correlators": J.tolist()}


_CHSH_SIGNS = np.array([[1.0, 1.0], [1.0, -1.0]])


def _chsh_witness(config, actual, rng, n):
    values, ses = [], []
    for declared, state in zip(config.states, actual):
        opt = optimize_chsh(declared, restarts=config.optimizer_restarts)
        stats = bipartite_statistics(state, opt.bases_a, opt.bases_b)
        if not config.sampled:
            E = np.array([[stats.correlator(x, y) for y in range(2)] for x in range(2)])
            values.append(float(np.sum(_CHSH_SIGNS * E)))
            ses.append(0.0)
            continue
        xy = rng.integers(0, 4, size=n)
        out = np.empty(n, dtype=int)
        for s in range(4):
            idx = np.flatnonzero(xy == s)
            if idx.size:
                probs = stats.p[s // 2, s % 2].ravel()
                out[idx] = rng.choice(4, size=idx.size, p=probs / probs.sum())
        parity = np.where((out // 2) == (out % 2), 1.0, -1.0)
        z = 4.0 * _CHSH_SIGNS[xy // 2, xy % 2] * parity
        values.append(float(z.mean()))
        ses.append(float(z.std(ddof=1) / np.sqrt(n)))
    worst = int(np.argmin(np.array(values) - WITNESS_SIGMAS * np.array(ses)))
    detail = {"links": values, "link_se": ses,
              "link_passed": [v - WITNESS_SIGMAS * s > CHSH_LOCAL_BOUND for v, s in zip(values, ses)]}
    return values[worst], ses[worst], detail


def _sift(config, actual, rng, n1):
    mubs = config.mub_assignment
    choices = rng.integers(0, 2, size=(n1, 3, 2))  # round, link, (hub, edge)
    kept = np.all(choices[:, :, 0] == choices[:, :, 1], axis=1)
    basis = choices[kept, :, 0]
    n2 = int(basis.shape[0])
    hub = np.empty((n2, 3), dtype=np.uint8)
    edges = []
    for i, (declared, state, coll) in enumerate(zip(config.states, actual, mubs.links)):
        pairs = link_bases(declared, coll)
        stats = bipartite_statistics(state, [h for h, _ in pairs], [e for _, e in pairs])
        edge = np.empty(n2, dtype=np.uint8)
        for j in range(2):
            idx = np.flatnonzero(basis[:, i] == j)
            if idx.size:
                probs = stats.p[j, j].ravel()
                out = rng.choice(4, size=idx.size, p=probs / probs.sum())
                hub[idx, i] = out // 2
                edge[idx] = out % 2
        edges.append(edge)
    return hub, tuple(edges), n2


def applicable_threshold(variant: Variant, identical: bool) -> Threshold:
    if variant is Variant.TRILOCAL:
        return threshold(ThresholdKind.TRILOCAL_IDENTICAL if identical else ThresholdKind.TRILOCAL_GENERAL)
    return threshold(ThresholdKind.CHSH_COUNT, 3 if identical else 1)


def run(config: ProtocolConfig) -> RunResult:
    """Simulate one run through raw-key generation.

    Raises
    ------
    InsufficientStatistics
        If fewer than 100 rounds survive sifting.
    """
    witness_rng, sift_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    actual = channel_states(config)
    n_witness = int(round(config.rounds * config.witness_fraction))
    n1 = config.rounds - n_witness
    if config.variant is Variant.TRILOCAL:
        value, se, detail = _trilocal_witness(config, actual, witness_rng, n_witness)
        bound = CLASSICAL_BOUND
        passed = value - WITNESS_SIGMAS * se > bound
    else:
        value, se, detail = _chsh_witness(config, actual, witness_rng, n_witness)
        bound = CHSH_LOCAL_BOUND
        passed = all(detail["link_passed"])
    thr = applicable_threshold(config.variant, config.declared_identical)
    # parties keep the lab axes chosen for the declared states
    model = qber_from_axes(actual, *lab_axes(config.states, config.mub_assignment))
    empty = np.zeros((0, 3), dtype=np.uint8), tuple(np.zeros(0, dtype=np.uint8) for _ in range(3))
    common = dict(variant=config.variant, witness_value=value, witness_se=se, witness_bound=bound,
                  witness_passed=passed, witness_detail=detail, witness_rounds=n_witness,
                  sifting_rounds=n1, qber_model=model, threshold=thr, seed=config.seed)
    if not passed and not config.force_continue:
        return RunResult(abort_stage=AbortStage.WITNESS, sifted_length=0, qber_estimate=None, qber_se=None,
                         hub_key=empty[0], edge_keys=empty[1], **common)
    hub, edges, n2 = _sift(config, actual, sift_rng, n1)
    if n2 < MIN_SIFTED:
        raise InsufficientStatistics(f"only {n2} sifted rounds; need at least {MIN_SIFTED}")
    q, q_se = estimate_qber(hub, edges)
    stage = None
    if not passed:
        stage = AbortStage.WITNESS
    elif q >= thr.value:
        stage = AbortStage.QBER
    return RunResult(abort_stage=stage, sifted_length=n2, qber_estimate=q, qber_se=q_se,
                     hub_key=hub, edge_keys=edges, **common)

