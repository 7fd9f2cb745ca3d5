"""Differentiable dense SURF: detector maps, dense descriptors, gradients and losses."""
from .autograd import descriptor_jvp, descriptor_vjp, detector_jvp, detector_vjp, gradcheck
from .config import RunConfig, read_config
from .descriptor import (
    DenseDescriptorMap,
    DescriptorLUT,
    HaarResponses,
    build_lut,
    dense_descriptor_pyramid,
    dense_descriptors_fast,
    dense_descriptors_naive,
    describe_keypoints,
    haar_responses,
)
from .detector import (
    Keypoint,
    ResponsePyramid,
    ScaleSpec,
    default_scales,
    detector_response,
    extract_keypoints,
    hessian_filters,
)
from .image import BoxFilterSpec, IntegralImage, box_sum, convolve_box_filter, integral, load_image, save_image
from .losses import (
    LossReport,
    LossWeights,
    ScoreMap,
    adv_loss,
    desc_loss,
    det_loss,
    disc_loss,
    finetune_objective,
    generator_objective,
    loss_grad,
    rec_loss,
)
from .matching import Match, PairReport, VerificationResult, evaluate_pair, match_descriptors, ransac_verify
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"
