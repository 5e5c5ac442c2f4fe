"""
Slide pipeline: pyramid tiling, tissue masking, patch mining and tiled inference.
"""

from medpatch.histology.pyramid import (TiledImage, TileStats, box_downsample, build_tiled_pyramid, read_pyramid,
                                        write_pyramid)
from medpatch.histology.tissue import TissueMask, gray_histogram, otsu_threshold, tissue_mask, to_gray
from medpatch.histology.mining import (Coordinate, CoordinateList, mine_patches, parse_coordinates,
                                       read_coordinates)
from medpatch.histology.inference import TiledPrediction, tiled_infer

__all__ = [
    "TiledImage", "TileStats", "box_downsample", "build_tiled_pyramid", "read_pyramid", "write_pyramid",
    "TissueMask", "gray_histogram", "otsu_threshold", "tissue_mask", "to_gray",
    "Coordinate", "CoordinateList", "mine_patches", "parse_coordinates", "read_coordinates",
    "TiledPrediction", "tiled_infer",
]
