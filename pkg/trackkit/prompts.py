"""Question templates for the tracking and expression generation tasks.

Several phrasings are kept for each task and one is chosen per request, so that
a model isn't tied to a single question format. Templates use the placeholders
:code:`{init}` (box text or expression) and :code:`{frames}` (number of frames).

"""

from typing import Optional
from dataclasses import dataclass, field

import numpy as np
import yaml

from .models import Pathlike
from .errors import TrackkitError


DEFAULT_TEMPLATES = {
    "sot": ["This is a video showing an object with coordinates {init} in frame 1. "
            "Provide the object's coordinates in each of the {frames} frames.",
            "Track the object at {init} in the first frame across all {frames} frames "
            "and give its coordinates in every frame.",
            "The target is at {init} in the first frame. Where is it in each frame?"],
    "rsot": ["Please find {init} in the video and give its coordinates in each of the "
             "{frames} frames.",
             "Track {init} throughout the video. Provide its coordinates in every frame.",
             "Where is {init} in each of the {frames} frames of this video?"],
    "reg": ["What is the object at {init} in this video? Describe it briefly.",
            "Give a short referring expression for the object at {init}.",
            "Describe the object located at {init} so that it can be told apart from others."],
}


@dataclass(frozen=True)
class PromptBank:
    templates: dict[str, list[str]] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))

    def __post_init__(self):
        for task, templates in self.templates.items():
            if not templates:
                raise TrackkitError(f"No templates for task {task}")

    def template(self, task: str, rng: Optional[np.random.Generator] = None,
                 index: Optional[int] = None) -> str:
        """Choose a template for :code:`task`, by :code:`index` if given, else with
        :code:`rng`, else the first one.

        """
        if task not in self.templates:
            raise TrackkitError(f"Unknown task {task}")
        templates = self.templates[task]
        if index is None:
            index = int(rng.integers(len(templates))) if rng is not None else 0
        return templates[index % len(templates)]

    def render(self, task: str, init: str, n_frames: int,
               rng: Optional[np.random.Generator] = None, index: Optional[int] = None) -> str:
        return self.template(task, rng, index).format(init=init, frames=n_frames)


def load_prompts(path: Optional[Pathlike]) -> PromptBank:
    """Load a YAML mapping of task to a list of templates. Tasks not in the file
    keep the default templates.

    """
    if path is None:
        return PromptBank()
    with open(path) as f:
        data = yaml.load(f, Loader=yaml.SafeLoader) or {}
    templates = dict(DEFAULT_TEMPLATES)
    templates.update({str(k): [str(x) for x in v] for k, v in data.items()})
    return PromptBank(templates)
