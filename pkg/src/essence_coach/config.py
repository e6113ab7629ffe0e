"""Application configuration: one JSON file, overridable by CLI flags.

Paths inside the file resolve against the file's own directory so a
checked-in config works from any working directory.  Every field has a
default, so commands also run with no config file at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import ChunkPolicy
from .embedding import EmbedderConfig
from .ensemble import EnsembleConfig
from .generation import ProviderConfig

DEFAULT_PROVIDER = ProviderConfig(
    provider_id="mock", endpoint="mock:echo", model_name="mock-echo"
)


class ConfigError(Exception):
    pass


@dataclass
class AppConfig:
    manifest: Path = Path("data/corpus_manifest.json")
    data_dir: Path = Path("var")
    chunks_file: Path = Path("var/chunks.jsonl")
    index_dir: Path = Path("var/index")
    questions: Path = Path("data/questions.json")
    judgments: Path = Path("data/judgments.csv")
    chunk_policy: ChunkPolicy = field(default_factory=ChunkPolicy)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    providers: dict[str, ProviderConfig] = field(
        default_factory=lambda: {DEFAULT_PROVIDER.provider_id: DEFAULT_PROVIDER}
    )
    default_provider: str = DEFAULT_PROVIDER.provider_id
    host: str = "127.0.0.1"
    port: int = 8000
    system_prompt: Path | None = None

    def provider(self, provider_id: str | None = None) -> ProviderConfig:
        chosen = provider_id or self.default_provider
        if chosen not in self.providers:
            raise ConfigError(f"unknown provider: {chosen}")
        return self.providers[chosen]

    def system_prompt_text(self) -> str | None:
        if self.system_prompt is None:
            return None
        try:
            return Path(self.system_prompt).read_text(encoding="utf-8").strip()
        except FileNotFoundError:
            raise ConfigError(
                f"system prompt file not found: {self.system_prompt}"
            ) from None


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_config(path: str | Path) -> AppConfig:
    """Parse a config file; missing keys keep their defaults."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file must hold a JSON object: {path}")
    base = path.parent
    config = AppConfig()
    try:
        for name in ("manifest", "data_dir", "chunks_file", "index_dir", "questions", "judgments"):
            if name in data:
                setattr(config, name, _resolve(base, data[name]))
        if data.get("system_prompt"):
            config.system_prompt = _resolve(base, data["system_prompt"])
        if "chunk_policy" in data:
            policy = data["chunk_policy"]
            config.chunk_policy = ChunkPolicy(
                split_levels=frozenset(policy.get("split_levels", (1, 2))),
                max_chars=policy.get("max_chars", 4000),
                min_chars=policy.get("min_chars", 200),
            )
        if "embedder" in data:
            embedder = data["embedder"]
            config.embedder = EmbedderConfig(
                backend=embedder.get("backend", "hashed"),
                dim=embedder.get("dim", 384),
                endpoint=embedder.get("endpoint"),
                model_name=embedder.get("model_name"),
                timeout=embedder.get("timeout", 30.0),
            )
        if "ensemble" in data:
            ensemble = data["ensemble"]
            config.ensemble = EnsembleConfig(
                k_each=ensemble.get("k_each", 2),
                weight_vector=ensemble.get("weight_vector", 0.5),
                weight_lexical=ensemble.get("weight_lexical", 0.5),
                normalization_pool=ensemble.get("normalization_pool", 10),
            )
        if "providers" in data:
            providers = {}
            for item in data["providers"]:
                provider = ProviderConfig(
                    provider_id=item["provider_id"],
                    endpoint=item["endpoint"],
                    model_name=item["model_name"],
                    auth_env=item.get("auth_env"),
                    timeout=item.get("timeout", 60.0),
                    max_retries=item.get("max_retries", 2),
                    response_path=item.get("response_path"),
                )
                if provider.provider_id in providers:
                    raise ConfigError(f"duplicate provider_id: {provider.provider_id}")
                providers[provider.provider_id] = provider
            if not providers:
                raise ConfigError("providers list must not be empty")
            config.providers = providers
            config.default_provider = data.get(
                "default_provider", next(iter(providers))
            )
        elif "default_provider" in data:
            config.default_provider = data["default_provider"]
        config.host = data.get("host", config.host)
        config.port = int(data.get("port", config.port))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value in {path}: {exc}") from exc
    if config.default_provider not in config.providers:
        raise ConfigError(f"unknown default_provider: {config.default_provider}")
    return config


def apply_overrides(config: AppConfig, **overrides) -> AppConfig:
    """Return a copy with non-None override values applied; flags win."""
    updates = {key: value for key, value in overrides.items() if value is not None}
    return replace(config, **updates)
