"""Prompt templates that turn a candidate emotion label into a premise.

A template contains exactly one ``{}`` placeholder; rendering substitutes
the label verbatim, with no casing changes or article insertion.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "DEFAULT_PROMPT_ID",
    "PromptTemplate",
    "builtin_catalog",
    "get_prompt",
    "load_prompt_file",
    "render",
]

PLACEHOLDER = "{}"

# Catalog of built-in prompt templates, in fixed order.  p09 performed best
# in our evaluations and is the default.
_BUILTIN = (
    ("p01", "This example is {}."),
    ("p02", "I am {}."),
    ("p03", "I feel {}."),
    ("p04", "I am feeling {}."),
    ("p05", "This person is expressing {} emotion."),
    ("p06", "A speech seems to express a feeling like {}."),
    ("p07", "A transcript seems to express a feeling like {}."),
    ("p08", "A conversation seems to express some feelings like {}."),
    ("p09", "The emotion of the conversation is {}."),
    ("p10", "The emotion of the previous conversation is {}."),
    ("p11", "The overall emotion of the conversation is {}."),
)

DEFAULT_PROMPT_ID = "p09"


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt string with exactly one ``{}`` placeholder."""

    id: str
    template: str

    def __post_init__(self) -> None:
        count = self.template.count(PLACEHOLDER)
        if count != 1:
            raise ValueError(
                f"prompt {self.id!r} must contain exactly one {PLACEHOLDER!r} "
                f"placeholder, found {count}"
            )

    def render(self, label: str) -> str:
        return render(self, label)


def render(template: PromptTemplate, label: str) -> str:
    """Substitute ``label`` verbatim into the template's placeholder."""
    if not label:
        raise ValueError("label must be nonempty")
    return template.template.replace(PLACEHOLDER, label)


def builtin_catalog() -> list[PromptTemplate]:
    """The built-in prompt catalog, in stable order with stable ids."""
    return [PromptTemplate(id=pid, template=tpl) for pid, tpl in _BUILTIN]


def get_prompt(prompt_id: str) -> PromptTemplate:
    """Look up a built-in prompt by id."""
    for tpl in builtin_catalog():
        if tpl.id == prompt_id:
            return tpl
    known = ", ".join(pid for pid, _ in _BUILTIN)
    raise KeyError(f"unknown prompt id {prompt_id!r} (built-ins: {known})")


def load_prompt_file(path: str | Path) -> list[PromptTemplate]:
    """Load custom prompts from a file of ``id<TAB>template`` lines."""
    path = Path(path)
    prompts = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'id<TAB>template'")
        pid, template = line.split("\t", 1)
        pid = pid.strip()
        if pid in seen:
            raise ValueError(f"{path}:{lineno}: duplicate prompt id {pid!r}")
        seen.add(pid)
        prompts.append(PromptTemplate(id=pid, template=template))
    if not prompts:
        raise ValueError(f"prompt file {path} contains no prompts")
    return prompts
