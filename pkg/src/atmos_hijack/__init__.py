"""Atmospheric retrieval-hijacking attack and evaluation harness."""

from .atmosphere import AtmosParams, CloudField, ParamBounds, render
from .encoders import EncoderDescriptor, RemoteEncoder, ToyEncoder, make_encoder, normalize
from .imaging import Image, load_image, save_image
from .objective import EvidenceSplit, ObjectiveConfig, total_objective
from .optimizer import AttackRecord, DEConfig, optimize_query
from .retrieval import EvidenceCorpus, EvidenceEntry, RetrievalResult, topk
from .runner import RunConfig, cmd_attack

__version__ = "0.1.0"

__all__ = [
    "AtmosParams",
    "AttackRecord",
    "CloudField",
    "DEConfig",
    "EncoderDescriptor",
    "EvidenceCorpus",
    "EvidenceEntry",
    "EvidenceSplit",
    "Image",
    "ObjectiveConfig",
    "ParamBounds",
    "RemoteEncoder",
    "RetrievalResult",
    "RunConfig",
    "ToyEncoder",
    "cmd_attack",
    "load_image",
    "make_encoder",
    "normalize",
    "optimize_query",
    "render",
    "save_image",
    "topk",
    "total_objective",
    "__version__",
]
