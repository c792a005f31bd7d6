class ExportError(Exception):
    """Base class for exporter failures."""


class InvalidJob(ExportError):
    pass


class ModelLoadFailure(ExportError):
    pass


class EmptyLabelFile(ExportError):
    pass


class NoImagesFound(ExportError):
    pass
