"""Layer rosters, context templates and chain construction."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any

import yaml

from hmaw.errors import AblationUnsupportedForChain, ConfigError, InvalidLayerCount, UnknownTheme
from hmaw.workflow import LayerChain, LayerSpec, Role, Theme

R = Role

COMPANY_ROSTERS: dict[int, tuple[Role, ...]] = {
    1: (R.Worker,),
    2: (R.CEO, R.Worker),
    3: (R.CEO, R.Manager, R.Worker),
    4: (R.CEO, R.SeniorManager, R.Manager, R.Worker),
    5: (R.CEO, R.SeniorManager, R.Manager, R.Supervisor, R.Worker),
    6: (R.CEO, R.SeniorVicePresident, R.VicePresident, R.Director, R.Manager, R.Worker),
}

# Themes other than company only define a three-level hierarchy; shorter
# chains keep the top and the responder.
_THREE_LEVEL = {
    Theme.Government: (R.President, R.Minister, R.Officer),
    Theme.University: (R.Dean, R.DepartmentHead, R.Lecturer),
    Theme.Temple: (R.Abbot, R.Prior, R.Monk),
}

ROSTERS: dict[Theme, dict[int, tuple[Role, ...]]] = {Theme.Company: COMPANY_ROSTERS}
for _theme, (_top, _mid, _resp) in _THREE_LEVEL.items():
    ROSTERS[_theme] = {1: (_resp,), 2: (_top, _resp), 3: (_top, _mid, _resp)}

RESPONDER = {
    Theme.Company: R.Worker,
    Theme.Government: R.Officer,
    Theme.University: R.Lecturer,
    Theme.Temple: R.Monk,
}


class Ablation(str, enum.Enum):
    DropCEO = "drop-ceo"
    DropManager = "drop-manager"
    NoSkipManager = "no-skip-manager"
    NoSkipWorker = "no-skip-worker"
    DropBothSkips = "no-skips"


_ABLATION_ROSTERS = {
    Ablation.DropCEO: (R.Manager, R.Worker),
    Ablation.DropManager: (R.CEO, R.Worker),
}
_ABLATION_SKIPS = {
    Ablation.NoSkipManager: (True, False, True),
    Ablation.NoSkipWorker: (True, True, False),
    Ablation.DropBothSkips: (True, False, False),
}


@dataclass(frozen=True)
class ChainConfig:
    theme: Theme = Theme.Company
    num_layers: int = 3
    reversed: bool = False
    skip_flags: tuple[bool, ...] | None = None
    ablation: Ablation | None = None
    # per-layer override files; None entries use the packaged templates
    context_files: tuple[str | None, ...] | None = None
    contexts_dir: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "theme": self.theme.value,
            "num_layers": self.num_layers,
            "reversed": self.reversed,
            "skip_flags": list(self.skip_flags) if self.skip_flags is not None else None,
            "ablation": self.ablation.value if self.ablation else None,
            "context_files": list(self.context_files) if self.context_files is not None else None,
            "contexts_dir": self.contexts_dir,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ChainConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown chain config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "theme" in kwargs:
            kwargs["theme"] = parse_theme(kwargs["theme"])
        if kwargs.get("ablation") is not None:
            try:
                kwargs["ablation"] = Ablation(kwargs["ablation"])
            except ValueError:
                raise ConfigError(f"unknown ablation {kwargs['ablation']!r}") from None
        for key in ("skip_flags", "context_files"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        if not isinstance(kwargs.get("num_layers", 3), int):
            raise InvalidLayerCount(f"num_layers must be an integer, got {kwargs['num_layers']!r}")
        return cls(**kwargs)


def parse_theme(value: str | Theme) -> Theme:
    if isinstance(value, Theme):
        return value
    try:
        return Theme(str(value).lower())
    except ValueError:
        raise UnknownTheme(f"unknown theme {value!r}") from None


def load_chain_config(path: str | Path) -> ChainConfig:
    """Read a YAML or JSON chain configuration file."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    config = ChainConfig.from_dict(data)
    if config.context_files:
        # relative override paths are resolved against the config file
        files = tuple(
            None if f is None else str((path.parent / f) if not Path(f).is_absolute() else Path(f))
            for f in config.context_files
        )
        config = replace(config, context_files=files)
    return config


def roster(theme: Theme, num_layers: int) -> tuple[Role, ...]:
    if not 1 <= num_layers <= 6:
        raise InvalidLayerCount(f"num_layers must be in 1..6, got {num_layers}")
    by_length = ROSTERS[theme]
    if num_layers not in by_length:
        raise InvalidLayerCount(
            f"the {theme.value} hierarchy defines at most {max(by_length)} layers, got {num_layers}"
        )
    return by_length[num_layers]


# -- context templates -------------------------------------------------------


def _packaged_contexts() -> Path:
    return Path(str(resources.files("hmaw") / "contexts"))


def _read_template(relative: str, contexts_dir: str | None) -> str | None:
    roots = [Path(contexts_dir)] if contexts_dir else []
    roots.append(_packaged_contexts())
    for root in roots:
        candidate = root / relative
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8").strip()
    return None


def role_template(theme: Theme, role: Role, variant: str | None = None, contexts_dir: str | None = None) -> str:
    if variant:
        text = _read_template(f"{theme.value}/{role.value}.{variant}.txt", contexts_dir)
        if text is not None:
            return text
    text = _read_template(f"{theme.value}/{role.value}.txt", contexts_dir)
    if text is None:
        raise ConfigError(f"no context template for {theme.value}/{role.value}")
    return text


def function_template(name: str, contexts_dir: str | None = None) -> str:
    text = _read_template(f"functions/{name}.txt", contexts_dir)
    if text is None:
        raise ConfigError(f"no function template {name!r}")
    return text


def _layer_variables(roles: tuple[Role, ...], index: int) -> dict[str, str]:
    n = len(roles)
    superior = f"the {roles[index - 1].title}" if index > 0 else "the user"
    subordinate = f"the {roles[index + 1].title}" if index < n - 1 else "the user"
    if n == 1:
        guidance = "You receive the user's request directly."
    else:
        guidance = f"Instructions prepared by {superior} are included below; use them to shape your answer."
    return {
        "role": roles[index].title,
        "hierarchy": " → ".join(r.title for r in roles),
        "superior": superior,
        "Superior": superior[0].upper() + superior[1:],
        "subordinate": subordinate,
        "position": str(index + 1),
        "depth": str(n),
        "guidance": guidance,
    }


def compose_context(
    theme: Theme,
    roles: tuple[Role, ...],
    index: int,
    *,
    variant: str | None = None,
    contexts_dir: str | None = None,
    override_file: str | None = None,
) -> str:
    """Context text for the layer at ``index``.

    The role template says who the agent is and where it sits; the function
    template (lead, relay or respond) says what this position must produce.
    An override file replaces both.
    """
    variables = _layer_variables(roles, index)
    if override_file is not None:
        try:
            raw = Path(override_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read context file {override_file}: {exc}") from exc
        return Template(raw.strip()).safe_substitute(variables)

    n = len(roles)
    if index == n - 1:
        function = "respond"
    elif index == 0:
        function = "lead"
    else:
        function = "relay"
    role_text = role_template(theme, roles[index], variant, contexts_dir)
    function_text = function_template(function, contexts_dir)
    return Template(f"{role_text}\n\n{function_text}").safe_substitute(variables)


# -- chain construction ------------------------------------------------------


def build_chain(config: ChainConfig) -> LayerChain:
    theme = parse_theme(config.theme)
    n = config.num_layers
    ablation = config.ablation
    variant = None

    if ablation is not None:
        if theme is not Theme.Company or n != 3 or config.reversed:
            raise AblationUnsupportedForChain(
                f"ablation {ablation.value} needs the 3-layer company chain"
            )
        if config.skip_flags is not None:
            raise ConfigError("skip_flags cannot be combined with an ablation")

    if ablation in _ABLATION_ROSTERS:
        roles = _ABLATION_ROSTERS[ablation]
        variant = ablation.value
    else:
        roles = roster(theme, n)
    if config.reversed:
        roles = tuple(reversed(roles))

    if ablation in _ABLATION_SKIPS:
        skips = _ABLATION_SKIPS[ablation]
    elif config.skip_flags is not None:
        skips = tuple(bool(s) for s in config.skip_flags)
        if len(skips) != len(roles):
            raise ConfigError(f"skip_flags has {len(skips)} entries for {len(roles)} layers")
        if not skips[0]:
            raise ConfigError("the first layer always receives the query")
    else:
        skips = (True,) * len(roles)

    overrides = config.context_files
    if overrides is not None and len(overrides) != len(roles):
        raise ConfigError(f"context_files has {len(overrides)} entries for {len(roles)} layers")

    layers = []
    for i, role in enumerate(roles):
        text = compose_context(
            theme,
            roles,
            i,
            variant=variant,
            contexts_dir=config.contexts_dir,
            override_file=overrides[i] if overrides else None,
        )
        layers.append(
            LayerSpec(
                role=role,
                context_text=text,
                receives_skip=skips[i],
                is_responder=i == len(roles) - 1,
                reports_to=roles[i - 1] if i > 0 else None,
            )
        )
    return LayerChain(
        theme=theme,
        layers=tuple(layers),
        reversed=config.reversed,
        ablation=ablation.value if ablation else None,
    )


# -- named configurations for sweeps -----------------------------------------

ABLATION_NAMES = (
    "full",
    *(a.value for a in Ablation),
    *(f"layers={n}" for n in range(1, 7)),
    *(f"theme={t.value}" for t in Theme),
    "reversed",
)


def config_for_name(name: str, base: ChainConfig | None = None) -> ChainConfig:
    """Map a sweep entry such as ``drop-ceo`` or ``layers=4`` to a config."""
    base = base or ChainConfig()
    if name == "full":
        return base
    if name == "reversed":
        return replace(base, reversed=True)
    if name.startswith("layers="):
        try:
            n = int(name.split("=", 1)[1])
        except ValueError:
            raise ConfigError(f"bad layer count in {name!r}") from None
        return replace(base, num_layers=n)
    if name.startswith("theme="):
        return replace(base, theme=parse_theme(name.split("=", 1)[1]))
    try:
        return replace(base, ablation=Ablation(name))
    except ValueError:
        raise ConfigError(f"unknown ablation {name!r}; choose from {', '.join(ABLATION_NAMES)}") from None
