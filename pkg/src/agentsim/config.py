"""YAML run configuration: loading, env interpolation, and validation.

A single config file drives every command. ``validate_config`` reports all
problems at once rather than stopping at the first, so a config can be fixed
in one pass.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import yaml

from agentsim.embedding import EmbeddingProviderConfig
from agentsim.seeding import STRATEGIES, SeedingConfig
from agentsim.simulation import BackendConfig, SimulationConfig
from agentsim.validation import ValidationConfig

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass
class Diagnostic:
    severity: str  # error | warning
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.field}: {self.message}"


@dataclass
class RunConfig:
    corpus_path: str = ""
    stopwords_path: str = ""
    queries_path: str = ""
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    seeding: SeedingConfig = field(default_factory=lambda: SeedingConfig(budget=0))
    simulation: SimulationConfig | None = None
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    output_dir: str = "out"
    parallelism: int = 4
    rng_seed: int = 0


def _interpolate(value):
    if isinstance(value, str):
        return _ENV_PATTERN.sub(lambda m: os.environ.get(m.group(1), ""), value)
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    return value


def _backend_from_dict(obj: dict, default_id: str) -> BackendConfig:
    rules = tuple(
        (rule["when"], rule["respond"]) for rule in obj.get("rules", [])
    )
    return BackendConfig(
        backend_id=obj.get("backend_id", default_id),
        kind=obj.get("kind", "remote_chat"),
        endpoint_url=obj.get("endpoint_url", ""),
        model_name=obj.get("model_name", ""),
        responses=tuple(obj.get("responses", [])),
        rules=rules,
        temperature=float(obj.get("temperature", 0.0)),
        timeout=float(obj.get("timeout", 30.0)),
    )


def load_config_lenient(path: str | Path) -> tuple[RunConfig | None, list[Diagnostic]]:
    """Parse a YAML config; ``${VAR}`` in strings is replaced from the env.

    Each section is built independently so that one malformed section does
    not mask problems in the others; rejected sections fall back to defaults
    and are reported as error diagnostics naming the section.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        return None, [Diagnostic("error", "config", f"config file not found: {path}")]
    except yaml.YAMLError as exc:
        return None, [Diagnostic("error", "config", f"invalid YAML: {exc}")]
    raw = _interpolate(raw)

    diagnostics: list[Diagnostic] = []

    def build(section: str, fn, fallback):
        try:
            return fn()
        except (ValueError, KeyError, TypeError) as exc:
            diagnostics.append(Diagnostic("error", section, str(exc)))
            return fallback

    rng_seed = build("rng_seed", lambda: int(raw.get("rng_seed", 0)), 0)

    emb = raw.get("embedding", {}) or {}
    embedding = build(
        "embedding",
        lambda: EmbeddingProviderConfig(
            kind=emb.get("kind", "hashing"),
            dim=int(emb.get("dim", EmbeddingProviderConfig.dim)),
            endpoint_url=emb.get("endpoint_url", ""),
            model_name=emb.get("model_name", ""),
            timeout=float(emb.get("timeout", 30.0)),
            max_concurrency=int(emb.get("max_concurrency", 4)),
            batch_size=int(emb.get("batch_size", 32)),
        ),
        EmbeddingProviderConfig(),
    )

    sd = raw.get("seeding", {}) or {}
    seeding = build(
        "seeding",
        lambda: SeedingConfig(
            budget=int(sd.get("budget", 0)),
            k=int(sd.get("clusters", 50)),
            tau=float(sd.get("tau", 0.4)),
            mmr_lambda=float(sd.get("lambda", 0.7)),
            strategy=sd.get("strategy", "corpus_aware"),
            seed_retrieval_depth=int(sd.get("seed_retrieval_depth", 10)),
            rng_seed=rng_seed,
        ),
        SeedingConfig(budget=0),
    )

    vd = raw.get("validation", {}) or {}
    validation = build(
        "validation",
        lambda: ValidationConfig(
            theta=float(vd.get("theta", 0.4)),
            grounding_threshold=float(vd.get("grounding_threshold", 0.3)),
            double_annotation_rate=float(vd.get("double_annotation_rate", 0.10)),
            max_reretrievals=int(vd.get("max_reretrievals", 2)),
        ),
        ValidationConfig(),
    )

    simulation: SimulationConfig | None = None
    sim = raw.get("simulation")
    if sim:
        def build_sim() -> SimulationConfig:
            analyst = _backend_from_dict(sim.get("analyst", {}), "analyst")
            critics = tuple(
                _backend_from_dict(c, f"critic-{i}")
                for i, c in enumerate(sim.get("critics", []))
            )
            return SimulationConfig(
                analyst=analyst,
                critics=critics,
                max_cycles=int(sim.get("max_cycles", 7)),
                retrieval_depth=int(sim.get("retrieval_depth", 10)),
                validation=validation,
                adaptive_consultation=bool(sim.get("adaptive_consultation", False)),
                explorations_per_seed=int(sim.get("explorations_per_seed", 1)),
                context_token_budget=int(sim.get("context_token_budget", 4000)),
                rng_seed=rng_seed,
            )

        simulation = build("simulation", build_sim, None)

    config = RunConfig(
        corpus_path=str((raw.get("corpus") or {}).get("path", "")),
        stopwords_path=str((raw.get("corpus") or {}).get("stopwords_path", "")),
        queries_path=str((raw.get("queries") or {}).get("path", "")),
        embedding=embedding,
        seeding=seeding,
        simulation=simulation,
        validation=validation,
        output_dir=str(raw.get("output_dir", "out")),
        parallelism=int(raw.get("parallelism", 4)),
        rng_seed=rng_seed,
    )
    return config, diagnostics


def load_config(path: str | Path) -> RunConfig:
    """Strict variant: raise on the first configuration problem."""
    config, diagnostics = load_config_lenient(path)
    errors = [d for d in diagnostics if d.severity == "error"]
    if config is None or errors:
        raise ValueError("; ".join(str(d) for d in errors) or "invalid config")
    return config


def _check_range(
    diagnostics: list[Diagnostic], name: str, value: float, low: float, high: float
) -> None:
    if not low <= value <= high:
        diagnostics.append(
            Diagnostic("error", name, f"value {value} outside [{low}, {high}]")
        )


def _probe_endpoint(url: str, timeout: float = 5.0) -> str | None:
    """Return an error string when the endpoint is unreachable."""
    try:
        httpx.get(url, timeout=timeout)
        return None
    except httpx.HTTPError as exc:
        return str(exc)


def validate_config(config: RunConfig, probe: bool = False) -> list[Diagnostic]:
    """Schema/range/file checks; with ``probe``, also backend reachability."""
    diagnostics: list[Diagnostic] = []

    if not config.corpus_path:
        diagnostics.append(Diagnostic("error", "corpus.path", "missing corpus path"))
    elif not Path(config.corpus_path).exists():
        diagnostics.append(
            Diagnostic("error", "corpus.path", f"file not found: {config.corpus_path}")
        )
    if config.queries_path and not Path(config.queries_path).exists():
        diagnostics.append(
            Diagnostic("error", "queries.path", f"file not found: {config.queries_path}")
        )
    if config.stopwords_path and not Path(config.stopwords_path).exists():
        diagnostics.append(
            Diagnostic(
                "error", "corpus.stopwords_path", f"file not found: {config.stopwords_path}"
            )
        )

    _check_range(diagnostics, "seeding.tau", config.seeding.tau, 0.0, 1.0)
    _check_range(diagnostics, "seeding.lambda", config.seeding.mmr_lambda, 0.0, 1.0)
    if config.seeding.budget < 0:
        diagnostics.append(Diagnostic("error", "seeding.budget", "budget must be >= 0"))
    if config.seeding.k < 1:
        diagnostics.append(Diagnostic("error", "seeding.clusters", "cluster count must be >= 1"))
    if config.seeding.strategy not in STRATEGIES:
        diagnostics.append(
            Diagnostic(
                "error",
                "seeding.strategy",
                f"unknown strategy {config.seeding.strategy!r}; choose from {STRATEGIES}",
            )
        )
    if config.seeding.seed_retrieval_depth < 1:
        diagnostics.append(
            Diagnostic("error", "seeding.seed_retrieval_depth", "depth must be >= 1")
        )

    _check_range(diagnostics, "validation.theta", config.validation.theta, 0.0, 1.0)
    _check_range(
        diagnostics,
        "validation.grounding_threshold",
        config.validation.grounding_threshold,
        0.0,
        1.0,
    )
    _check_range(
        diagnostics,
        "validation.double_annotation_rate",
        config.validation.double_annotation_rate,
        0.0,
        1.0,
    )

    if config.embedding.kind not in ("hashing", "remote"):
        diagnostics.append(
            Diagnostic("error", "embedding.kind", f"unknown kind {config.embedding.kind!r}")
        )
    if config.embedding.dim < 2:
        diagnostics.append(Diagnostic("error", "embedding.dim", "dim must be >= 2"))
    if config.embedding.kind == "remote" and not config.embedding.endpoint_url:
        diagnostics.append(
            Diagnostic("error", "embedding.endpoint_url", "remote embedding requires an endpoint")
        )

    if config.parallelism < 1:
        diagnostics.append(Diagnostic("error", "parallelism", "parallelism must be >= 1"))

    sim = config.simulation
    if sim is not None:
        if sim.max_cycles < 1:
            diagnostics.append(Diagnostic("error", "simulation.max_cycles", "must be >= 1"))
        if sim.retrieval_depth < 1:
            diagnostics.append(Diagnostic("error", "simulation.retrieval_depth", "must be >= 1"))
        backends = [("simulation.analyst", sim.analyst)] + [
            (f"simulation.critics[{i}]", c) for i, c in enumerate(sim.critics)
        ]
        for name, backend in backends:
            if backend.kind == "remote_chat":
                if not backend.endpoint_url:
                    diagnostics.append(
                        Diagnostic("error", f"{name}.endpoint_url", "missing endpoint")
                    )
                elif probe:
                    problem = _probe_endpoint(backend.endpoint_url)
                    if problem:
                        diagnostics.append(
                            Diagnostic("error", f"{name}.endpoint_url", f"unreachable: {problem}")
                        )
    if probe and config.embedding.kind == "remote" and config.embedding.endpoint_url:
        problem = _probe_endpoint(config.embedding.endpoint_url)
        if problem:
            diagnostics.append(
                Diagnostic("error", "embedding.endpoint_url", f"unreachable: {problem}")
            )

    return diagnostics
