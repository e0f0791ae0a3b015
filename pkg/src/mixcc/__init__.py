"""Multi-illuminant color constancy toolkit.

Image formation and Von Kries correction, classical illuminant estimators,
gray-pixel seeding, N-illuminant probability maps with their supervised
losses, multi-illuminant dataset augmentation and angular-error evaluation.
"""

from .augment import (
    AugmentedSample,
    augment,
    build_illumination_map,
    shuffle_illuminant,
    split_dataset,
    voronoi_segments,
)
from .color import (
    apparent_illumination,
    apply_illumination,
    linear_to_srgb,
    normalize,
    srgb_to_linear,
    von_kries_correct,
)
from .estimators import (
    EstimatorConfig,
    doing_nothing,
    grey_edge,
    grey_world,
    grey_world_family,
    shades_of_grey,
    white_patch,
)
from .grayness import SeedSet, cluster_gray_pixels, grayness_map, sample_seeds_from_gt
from .metrics import ErrorStats, angular_error, map_angular_error, summarize
from .mixture import (
    LossReport,
    export_probability_map,
    import_probability_map,
    l1_image_distance,
    mask_loss,
    oracle_probabilities,
    reconstruct_illumination,
    seed_diffusion_estimate,
    total_loss,
)

__version__ = "0.1.0"
