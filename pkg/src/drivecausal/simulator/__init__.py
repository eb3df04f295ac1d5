from .annotations import Annotation, AnnotationError, ingest_annotations
from .captions import caption_text, split_caption, template_caption, vocabulary
from .dataset_io import DatasetFormatError, dataset_io, read_episodes, write_episodes
from .episodes import (Episode, ScenarioConfig, SimulatorError, cooccurrence, episode_seed,
                       eventful_changes, generate_episode, inject_spurious, render_clip, replay,
                       scripted_episode, synth_signals)
from .render import Layout, RenderError, check_dims

__all__ = [
    "Annotation", "AnnotationError", "ingest_annotations", "caption_text", "split_caption",
    "template_caption", "vocabulary", "DatasetFormatError", "dataset_io", "read_episodes",
    "write_episodes", "Episode", "ScenarioConfig", "SimulatorError", "cooccurrence",
    "episode_seed", "eventful_changes", "generate_episode", "inject_spurious", "render_clip",
    "replay", "scripted_episode", "synth_signals", "Layout", "RenderError", "check_dims",
]
