"""Vision-backbone bridge: PPRJ projection images in, PFEA token grids out."""

from .backbone import BackboneError, TokenBackbone, normalize_planes
from .exporter import ExportSummary, export_features
from .formats import FormatError, ProjectionFile, read_pprj, write_pfea
from .manifest import ExportManifest, FrameSpec, ManifestError, load_manifest

__version__ = "0.1.0"
