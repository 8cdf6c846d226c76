"""Doubly smoothed kernel density estimation for fixed-camera image stacks."""
from .bandwidth import (BandwidthPlan, DegenerateInputError, cd_bandwidth, ds_bandwidth, empirical_sigma,
                        gpa_bandwidth, mse_constants, plan_bandwidths)
from .estimators import (DensityMap, FrameStack, GpaTable, cd_estimate, cd_grid, density_map, ds_direct,
                         ds_smooth, gpa_fit, gpa_query)
from .evaluation import Annotation, evaluate, f1, iou
from .extract import BBox, DetectionParams, detect
from .kernel import KernelMoments, gauss_kernel, kernel_moments, product_kernel

__version__ = "0.1.0"
