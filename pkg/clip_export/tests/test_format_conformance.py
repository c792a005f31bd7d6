"""Cross-component acceptance: exported files must load through vlpl-lab."""

import sys

import numpy as np

from clip_export.export import export_image_embeddings, export_label_embeddings
from clip_export.job import ExportJob

from vlpl_lab.embedding_store import load_embeddings


def report(name, ok, detail=""):
    line = f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line, file=sys.stderr)
    assert ok, line


def test_format_conformance(tmp_path, toy_folder, label_file):
    job = ExportJob(
        output_prefix=str(tmp_path / "export"),
        model_id="offline:32",
        label_file=str(label_file),
        image_dir=str(toy_folder),
    )
    labels_path, names = export_label_embeddings(job)
    images_path, filenames = export_image_embeddings(job)

    label_matrix, label_manifest = load_embeddings(labels_path)
    image_matrix, _ = load_embeddings(images_path)

    vocabulary = [line.strip() for line in open(label_file) if line.strip()]
    order_ok = list(label_manifest.label_names) == vocabulary
    kinds_ok = label_matrix.kind == "label" and image_matrix.kind == "image"
    shapes_ok = label_matrix.rows == 6 and image_matrix.rows == 10

    norms = np.concatenate([
        np.linalg.norm(label_matrix.data.astype(np.float64), axis=1),
        np.linalg.norm(image_matrix.data.astype(np.float64), axis=1),
    ])
    norms_ok = bool(np.abs(norms - 1.0).max() < 1e-4)

    report(
        "clip-export-format-conformance",
        order_ok and kinds_ok and shapes_ok and norms_ok,
        f"max |norm-1| = {np.abs(norms - 1.0).max():.2e}",
    )
