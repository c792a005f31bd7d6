"""Export vision-language embeddings into the vlpl-lab binary format."""

from .encoders import ClipEncoder, OfflineHashEncoder, load_encoder
from .errors import EmptyLabelFile, ExportError, InvalidJob, ModelLoadFailure, NoImagesFound
from .export import export_image_embeddings, export_label_embeddings
from .job import ExportJob, read_label_file
from .writer import write_embedding_file

__version__ = "0.1.0"
