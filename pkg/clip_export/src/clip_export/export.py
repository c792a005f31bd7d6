"""Run an encoder over a label vocabulary / image folder and write files."""

from __future__ import annotations

import json
import logging
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import load_encoder
from .errors import InvalidJob, NoImagesFound
from .job import ExportJob, read_label_file
from .writer import write_embedding_file

logger = logging.getLogger("clip_export")


def _batched(items, size):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def export_label_embeddings(job: ExportJob) -> tuple[str, list[str]]:
    """Embed one prompt per vocabulary entry, in file order."""
    if not job.label_file:
        raise InvalidJob("label export needs a label_file")
    names = read_label_file(job.label_file)
    encoder = load_encoder(job.model_id, job.device)
    prompts = [job.prompt_template.format(name) for name in names]
    chunks = [encoder.encode_texts(batch) for batch in _batched(prompts, job.batch_size)]
    matrix = np.vstack(chunks)
    write_embedding_file(
        job.labels_path,
        matrix,
        label_names=names,
        prompt_template=job.prompt_template,
        source=job.model_id,
    )
    logger.info("wrote %s (%d labels, dim %d)", job.labels_path, matrix.shape[0], matrix.shape[1])
    return job.labels_path, names


def _decodable_images(image_dir: str) -> tuple[list[str], list[Image.Image]]:
    filenames, images = [], []
    for name in sorted(os.listdir(image_dir)):
        path = os.path.join(image_dir, name)
        if not os.path.isfile(path):
            continue
        try:
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
            filenames.append(name)
        except (UnidentifiedImageError, OSError) as exc:
            logger.warning("skipping unreadable image %s: %s", path, exc)
    return filenames, images


def export_image_embeddings(job: ExportJob) -> tuple[str, list[str]]:
    """Embed every decodable image in the folder; row order is sorted filename order."""
    if not job.image_dir:
        raise InvalidJob("image export needs an image_dir")
    filenames, images = _decodable_images(job.image_dir)
    if not filenames:
        raise NoImagesFound(f"no decodable images in {job.image_dir}")
    encoder = load_encoder(job.model_id, job.device)
    chunks = [encoder.encode_images(batch) for batch in _batched(images, job.batch_size)]
    matrix = np.vstack(chunks)
    write_embedding_file(job.images_path, matrix, source=job.model_id)
    with open(job.image_ids_path, "w", encoding="utf-8") as fh:
        json.dump(filenames, fh, indent=2)
        fh.write("\n")
    logger.info("wrote %s (%d images, dim %d)", job.images_path, matrix.shape[0], matrix.shape[1])
    return job.images_path, filenames
