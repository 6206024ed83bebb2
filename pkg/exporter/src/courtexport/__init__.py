"""Offline exporter producing tracker-ready keypoint and feature files."""

from .export import ExportError, ExportJob, ExportReport, export, iter_frames
from .gridmap import CROP_SIZE, LAYER_GRIDS, CropBox, cells_for_point, person_crop
from .models import ModelLoadError, PART_NAMES, coco_to_parts
from .pfv import FormatError, read_features, write_features

__all__ = [
    "CROP_SIZE",
    "LAYER_GRIDS",
    "CropBox",
    "ExportError",
    "ExportJob",
    "ExportReport",
    "FormatError",
    "ModelLoadError",
    "PART_NAMES",
    "cells_for_point",
    "coco_to_parts",
    "export",
    "iter_frames",
    "person_crop",
    "read_features",
    "write_features",
]
