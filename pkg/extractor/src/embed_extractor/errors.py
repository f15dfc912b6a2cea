class ExtractorError(Exception):
    exit_code = 1


class SpecError(ExtractorError):
    """Invalid extraction spec, prompt file, or image index."""
    exit_code = 2


class ModelLoadError(ExtractorError):
    exit_code = 2


class ImageDecodeError(ExtractorError):
    exit_code = 3
