"""Hierarchical prompt-refinement engine.

A chain is an ordered list of layers. Every layer but the last asks its
backend for an instruction addressed to the layer below; the last layer
(the responder) answers the user. The rendered prompt of the responder is
the optimized prompt, and its reply is the final response.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

from hmaw.backend import ChatBackend, ChatRequest, Message
from hmaw.errors import BackendError, EmptyBackendReply, MissingUpstreamInstruction

CONTEXT_HEADER = "### Context"
INSTRUCTION_HEADER = "### Instruction from {role}"
QUERY_HEADER = "### Original user query"
BLOCK_SEPARATOR = "\n\n"

ZERO_COT_SUFFIX = "Let's think step by step."


class Role(str, enum.Enum):
    CEO = "CEO"
    SeniorVicePresident = "SeniorVicePresident"
    VicePresident = "VicePresident"
    Director = "Director"
    SeniorManager = "SeniorManager"
    Manager = "Manager"
    Supervisor = "Supervisor"
    Worker = "Worker"
    President = "President"
    Minister = "Minister"
    Officer = "Officer"
    Dean = "Dean"
    DepartmentHead = "DepartmentHead"
    Lecturer = "Lecturer"
    Abbot = "Abbot"
    Prior = "Prior"
    Monk = "Monk"

    @property
    def title(self) -> str:
        return _TITLES.get(self, self.value)


_TITLES = {
    Role.SeniorVicePresident: "Senior Vice President",
    Role.VicePresident: "Vice President",
    Role.SeniorManager: "Senior Manager",
    Role.DepartmentHead: "Department Head",
}


class Theme(str, enum.Enum):
    Company = "company"
    Government = "government"
    University = "university"
    Temple = "temple"


class BaselineStrategy(str, enum.Enum):
    NoPrompting = "no-prompting"
    ZeroCot = "zero-cot"


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    gold_answer: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class LayerSpec:
    role: Role
    context_text: str
    receives_skip: bool = True
    is_responder: bool = False
    # None for the first layer of a chain
    reports_to: Role | None = None

    @property
    def is_first(self) -> bool:
        return self.reports_to is None


@dataclass(frozen=True)
class LayerChain:
    theme: Theme
    layers: tuple[LayerSpec, ...]
    reversed: bool = False
    ablation: str | None = None

    def __post_init__(self):
        if not 1 <= len(self.layers) <= 6:
            raise ValueError(f"chain length must be 1..6, got {len(self.layers)}")
        responders = [i for i, layer in enumerate(self.layers) if layer.is_responder]
        if responders != [len(self.layers) - 1]:
            raise ValueError("exactly one responder layer is allowed and it must be last")
        if not self.layers[0].is_first or any(l.is_first for l in self.layers[1:]):
            raise ValueError("only the first layer may lack a superior")
        for layer in self.layers:
            if not layer.context_text.strip():
                raise ValueError(f"empty context for {layer.role.value}")

    @property
    def roles(self) -> list[Role]:
        return [layer.role for layer in self.layers]

    def describe(self) -> dict[str, Any]:
        return {
            "theme": self.theme.value,
            "roles": [r.value for r in self.roles],
            "reversed": self.reversed,
            "ablation": self.ablation,
            "skip_flags": [layer.receives_skip for layer in self.layers],
        }


@dataclass
class StepRecord:
    role: str
    rendered_prompt: str
    backend_reply: str
    latency: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    attempts: int = 1


@dataclass
class WorkflowTrace:
    query_id: str
    steps: list[StepRecord]
    chain: dict[str, Any] = field(default_factory=dict)

    @property
    def optimized_prompt(self) -> str:
        return self.steps[-1].rendered_prompt

    @property
    def final_response(self) -> str:
        return self.steps[-1].backend_reply

    @property
    def total_latency(self) -> float:
        return sum(step.latency for step in self.steps)

    @property
    def token_usage(self) -> dict[str, int | None]:
        def total(attr):
            values = [getattr(s, attr) for s in self.steps]
            if any(v is None for v in values):
                return None
            return sum(values)

        return {"prompt_tokens": total("prompt_tokens"), "completion_tokens": total("completion_tokens")}

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "chain": self.chain,
            "steps": [
                {
                    "index": i,
                    "role": s.role,
                    "rendered_prompt": s.rendered_prompt,
                    "backend_reply": s.backend_reply,
                    "latency": s.latency,
                    "prompt_tokens": s.prompt_tokens,
                    "completion_tokens": s.completion_tokens,
                    "attempts": s.attempts,
                }
                for i, s in enumerate(self.steps)
            ],
            "optimized_prompt": self.optimized_prompt,
            "final_response": self.final_response,
            "wall_time": {"steps": [s.latency for s in self.steps], "total": self.total_latency},
            "token_usage": self.token_usage,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> WorkflowTrace:
        steps = [
            StepRecord(
                role=s["role"],
                rendered_prompt=s["rendered_prompt"],
                backend_reply=s["backend_reply"],
                latency=s["latency"],
                prompt_tokens=s.get("prompt_tokens"),
                completion_tokens=s.get("completion_tokens"),
                attempts=s.get("attempts", 1),
            )
            for s in data["steps"]
        ]
        return cls(query_id=data["query_id"], steps=steps, chain=data.get("chain", {}))


def render_prompt(
    layer: LayerSpec, upstream_instruction: str | None, query: Query
) -> str:
    """Concatenate context, upstream instruction and (optionally) the query.

    Blocks appear in that fixed order under labeled headers. The query is
    included for the first layer and for every layer with a skip
    connection.
    """
    if upstream_instruction is None and not layer.is_first:
        raise MissingUpstreamInstruction(
            f"{layer.role.value} reports to {layer.reports_to.value} but got no instruction"
        )
    if upstream_instruction is not None and layer.is_first:
        raise ValueError("the first layer does not receive an upstream instruction")

    blocks = [f"{CONTEXT_HEADER}\n{layer.context_text}"]
    if upstream_instruction is not None:
        header = INSTRUCTION_HEADER.format(role=layer.reports_to.title)
        blocks.append(f"{header}\n{upstream_instruction}")
    if layer.is_first or layer.receives_skip:
        blocks.append(f"{QUERY_HEADER}\n{query.text}")
    return BLOCK_SEPARATOR.join(blocks)


def _call(backend: ChatBackend, prompt: str, model: str, temperature: float, max_tokens: int | None):
    request = ChatRequest(
        model=model,
        messages=(Message("user", prompt),),
        temperature=temperature,
        max_tokens=max_tokens,
    )
    response = backend.chat(request)
    return response, response.latency


def run_workflow(
    chain: LayerChain,
    query: Query,
    backend: ChatBackend,
    *,
    model: str = "default",
    temperature: float = 0.0,
    max_tokens: int | None = None,
) -> WorkflowTrace:
    steps: list[StepRecord] = []
    instruction = None
    for index, layer in enumerate(chain.layers):
        prompt = render_prompt(layer, instruction, query)
        try:
            response, latency = _call(backend, prompt, model, temperature, max_tokens)
        except BackendError as exc:
            exc.step_index = index
            raise
        if not response.content.strip():
            raise EmptyBackendReply(index, layer.role.value)
        steps.append(
            StepRecord(
                role=layer.role.value,
                rendered_prompt=prompt,
                backend_reply=response.content,
                latency=latency,
                prompt_tokens=response.prompt_tokens,
                completion_tokens=response.completion_tokens,
                attempts=response.attempts,
            )
        )
        instruction = response.content
    return WorkflowTrace(query_id=query.id, steps=steps, chain=chain.describe())


def apply_baseline(strategy: BaselineStrategy, query: Query) -> str:
    if strategy is BaselineStrategy.NoPrompting:
        return query.text
    if strategy is BaselineStrategy.ZeroCot:
        return f"{query.text}\n{ZERO_COT_SUFFIX}"
    raise ValueError(f"unknown baseline {strategy!r}")


def run_baseline(
    strategy: BaselineStrategy,
    query: Query,
    backend: ChatBackend,
    *,
    model: str = "default",
    temperature: float = 0.0,
    max_tokens: int | None = None,
) -> WorkflowTrace:
    """Answer the query with a single call, recorded as a one-step trace."""
    prompt = apply_baseline(strategy, query)
    try:
        response, latency = _call(backend, prompt, model, temperature, max_tokens)
    except BackendError as exc:
        exc.step_index = 0
        raise
    if not response.content.strip():
        raise EmptyBackendReply(0, strategy.value)
    step = StepRecord(
        role=strategy.value,
        rendered_prompt=prompt,
        backend_reply=response.content,
        latency=latency,
        prompt_tokens=response.prompt_tokens,
        completion_tokens=response.completion_tokens,
        attempts=response.attempts,
    )
    return WorkflowTrace(query_id=query.id, steps=[step], chain={"baseline": strategy.value})
