"""clip-export: write image/label embeddings in the vlpl-lab binary format.

Usage: ``clip-export labels --config job.json`` or
``clip-export images --config job.json``. The job config mirrors the
ExportJob fields. Exit codes: 0 success, 1 runtime failure, 2 bad usage
or config.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ExportError, InvalidJob
from .export import export_image_embeddings, export_label_embeddings
from .job import ExportJob


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clip-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("labels", "images"):
        p = sub.add_parser(name, help=f"export {name[:-1]} embeddings")
        p.add_argument("--config", required=True, help="job config JSON")
        p.add_argument("--model-id", default=None, help="override the configured model id")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob.from_json(args.config)
        if args.model_id:
            import dataclasses

            job = dataclasses.replace(job, model_id=args.model_id)
        if args.command == "labels":
            path, names = export_label_embeddings(job)
            print(f"wrote {path} ({len(names)} labels)")
        else:
            path, filenames = export_image_embeddings(job)
            print(f"wrote {path} ({len(filenames)} images)")
        return 0
    except InvalidJob as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
