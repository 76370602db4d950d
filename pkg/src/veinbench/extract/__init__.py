"""Template extractors: MC, PC, Log-Gabor/LBP texture and keypoints."""

from .curvature import CurvatureParams, EmptyPatternWarning, extract_mc, extract_pc
from .features import (
    BinaryVeinPattern,
    KeypointFeature,
    TextureFeature,
    decode_feature,
    encode_feature,
    feature_filename,
    load_feature,
    save_feature,
)
from .keypoints import KeypointParams, NoKeypointsWarning, extract_keypoints
from .texture import extract_lbp

__all__ = [
    "BinaryVeinPattern",
    "CurvatureParams",
    "EmptyPatternWarning",
    "KeypointFeature",
    "KeypointParams",
    "NoKeypointsWarning",
    "TextureFeature",
    "decode_feature",
    "encode_feature",
    "extract_keypoints",
    "extract_lbp",
    "extract_mc",
    "extract_pc",
    "feature_filename",
    "load_feature",
    "save_feature",
]
