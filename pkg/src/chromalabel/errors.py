class PipelineError(Exception):
    """An input file, frame, or parameter set violates a pipeline contract."""
