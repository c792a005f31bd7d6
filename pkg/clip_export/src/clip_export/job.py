"""Export job description and label-vocabulary loading."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import EmptyLabelFile, InvalidJob


@dataclass(frozen=True)
class ExportJob:
    output_prefix: str
    model_id: str = "offline:64"
    label_file: str | None = None
    image_dir: str | None = None
    prompt_template: str = "A photo of {}"
    batch_size: int = 8
    device: str = "cpu"

    def __post_init__(self):
        if self.prompt_template.count("{}") != 1:
            raise InvalidJob(
                f"prompt template must contain exactly one {{}} placeholder, got {self.prompt_template!r}"
            )
        if self.batch_size < 1:
            raise InvalidJob(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def labels_path(self) -> str:
        return f"{self.output_prefix}.labels.emb"

    @property
    def images_path(self) -> str:
        return f"{self.output_prefix}.images.emb"

    @property
    def image_ids_path(self) -> str:
        return f"{self.output_prefix}.images.ids.json"

    @classmethod
    def from_json(cls, path: str) -> "ExportJob":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidJob(f"cannot read job config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InvalidJob(f"job config {path} must be a JSON object")
        allowed = {
            "output_prefix", "model_id", "label_file", "image_dir",
            "prompt_template", "batch_size", "device",
        }
        unknown = set(raw) - allowed
        if unknown:
            raise InvalidJob(f"unknown job config keys: {sorted(unknown)}")
        if "output_prefix" not in raw:
            raise InvalidJob("job config needs an output_prefix")
        return cls(**raw)


def read_label_file(path: str) -> list[str]:
    """One label name per line; names must be non-empty and unique."""
    try:
        with open(path, encoding="utf-8") as fh:
            names = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise InvalidJob(f"cannot read label file {path}: {exc}") from exc
    if not names:
        raise EmptyLabelFile(f"label file {path} contains no label names")
    seen = set()
    for name in names:
        if name in seen:
            raise InvalidJob(f"duplicate label name {name!r} in {path}")
        seen.add(name)
    return names
