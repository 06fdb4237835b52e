"""Style-transfer augmentation: extractor, CIN stylizer, blending and interpolation."""

from .augment import (
    STYLE_SOURCES,
    NoiseStyle,
    SasslParams,
    StyleDraw,
    StyleTransfer,
    blend_embeddings,
    draw_style_params,
    interpolate_pixels,
)
from .networks import (
    CIN_EPS,
    EMBED_DIM,
    STYLED_PRESETS,
    CinLayer,
    StyleExtractor,
    StylizationNetwork,
    cin_normalize,
    resolve_styled_layers,
)

__all__ = [
    "STYLE_SOURCES", "NoiseStyle", "SasslParams", "StyleDraw", "StyleTransfer",
    "blend_embeddings", "draw_style_params", "interpolate_pixels", "CIN_EPS",
    "EMBED_DIM", "STYLED_PRESETS", "CinLayer", "StyleExtractor",
    "StylizationNetwork", "cin_normalize", "resolve_styled_layers",
]
