"""
Scenario files: TOML or JSON documents with one table per config section.

    preset = "paper_fig4_high"      # optional, applied first

    [mobility]
    speed_kmh = 120
"""
import json
import copy
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import fields
from pathlib import Path

from .scenario import SECTIONS, ScenarioConfig, section_field_names
from .protocols import PROTOCOL_STACKS
from dnsim.forms import SECTION_FORMS
from dnsim.presets import PRESETS


class ConfigError(ValueError):
    """Carries every problem found, each as ``section.key: message``."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


def load_document(path) -> dict:
    path = Path(path)
    try:
        if path.suffix == '.toml':
            with open(path, 'rb') as f:
                return tomllib.load(f)
        if path.suffix == '.json':
            with open(path, 'r', encoding='utf-8') as f:
                document = json.load(f)
            if not isinstance(document, dict):
                raise ConfigError([f"{path.name}: top level must be an object"])
            return document
    except FileNotFoundError:
        raise ConfigError([f"{path}: no such file"]) from None
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError([f"{path.name}: {e}"]) from None
    raise ConfigError([f"{path.name}: unsupported format (use .toml or .json)"])


def parse_config(path) -> ScenarioConfig:
    return build_config(load_document(path))


def merge_documents(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for section, values in override.items():
        if isinstance(values, dict) and isinstance(merged.get(section), dict):
            merged[section].update(values)
        else:
            merged[section] = copy.deepcopy(values)
    return merged


def build_config(document: dict) -> ScenarioConfig:
    """Validate a parsed document into a ``ScenarioConfig``, defaults filled in."""
    messages = []
    document = dict(document)
    preset = document.pop('preset', None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([f"preset: unknown preset {preset!r} (choose from {', '.join(PRESETS)})"])
        document = merge_documents(PRESETS[preset].sections, document)

    for section in sorted(document):
        if section not in SECTIONS:
            messages.append(f"{section}: unknown section")
        elif not isinstance(document[section], dict):
            messages.append(f"{section}: must be a table of keys")

    sections = {}
    for name, record in SECTIONS.items():
        values = document.get(name) if isinstance(document.get(name), dict) else {}
        known = section_field_names(name)
        messages.extend(f"{name}.{key}: unknown key" for key in sorted(set(values) - set(known)))
        defaults = record()
        data = {f.name: getattr(defaults, f.name) for f in fields(record)}
        data.update({k: v for k, v in values.items() if k in known})
        form = SECTION_FORMS[name](data=data)
        if form.is_valid():
            sections[name] = record(**form.cleaned_data)
        else:
            messages.extend(form.error_messages_with_paths())
    if messages:
        raise ConfigError(messages)

    config = ScenarioConfig(**sections)
    messages = consistency_errors(config)
    if messages:
        raise ConfigError(messages)
    return config


def consistency_errors(config: ScenarioConfig) -> list:
    """Cross-section rules the per-section forms cannot see."""
    messages = []
    stack = PROTOCOL_STACKS[config.protocol.name]
    carried = 'video' if stack.traffic_class == 'video' else 'best_effort'
    if config.traffic.traffic_class != carried:
        messages.append(f"protocol.name: {stack.name} carries {carried} traffic, "
                        f"not traffic.traffic_class={config.traffic.traffic_class}")
    if config.run.tti_s > config.run.dispatch_interval_s:
        messages.append("run.tti_s: must not exceed run.dispatch_interval_s")
    if config.traffic.payload_mode == 'bytes' and config.traffic.file_size_bits % 8:
        messages.append("traffic.file_size_bits: must be a whole number of bytes in bytes mode")
    return messages


def echo(config: ScenarioConfig) -> str:
    """Effective configuration as canonical JSON; ``build_config(json.loads(echo(c))) == c``."""
    return config.to_json()
