"""Hyperspectral light-field stereo matching, completion, and refocusing."""

__version__ = "0.1.0"

from .config import Params, load_params
from .model import (CameraSpectralResponse, DisparityMap,
                    HyperspectralLightField, SpectralImage, ViewIndex,
                    load_camera_response, load_dataset, read_disparity,
                    read_pfm, save_camera_response, save_dataset,
                    write_disparity, write_pfm)
from .descriptor import describe, describe_field
from .metric import bwncc, bwncc_map
from .mrf import MrfProblem, alpha_expansion, mrf_energy, solve_grid
from .pairwise import match_pair, match_pair_vertical
from .stereo import (DisparityResult, correspondence_volume, defocus_volume,
                     estimate_disparity, select_views)
from .completion import (PlenopticCube, complete_cube,
                         complete_views_disparity, load_cube, refine_disparity,
                         run_completion, save_cube, warp_disparity)
from .render import emulate_color, profile_to_rgb, refocus, sharpness
from .bench import (bad_n, interior_mask, psnr, reference_camera_response,
                    rmse, synth_hlf, two_plane_scene)
