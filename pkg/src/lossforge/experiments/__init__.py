"""Portfolio documents, figure presets, CSV output and the command line."""
from .documents import DocumentError, parse_portfolio_document, portfolio_from_document
from .io import RunManifest, emit_density_csv, read_csv, read_density_csv, write_csv
from .presets import PRESETS, Baseline, ExperimentPreset, replay, run_preset

__all__ = ["DocumentError", "parse_portfolio_document", "portfolio_from_document", "RunManifest",
           "emit_density_csv", "read_csv", "read_density_csv", "write_csv", "PRESETS", "Baseline",
           "ExperimentPreset", "replay", "run_preset"]
