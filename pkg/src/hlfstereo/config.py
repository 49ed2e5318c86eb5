"""Run parameters.

Every tuned constant in the pipeline lives here with its default, so any of
them can be overridden from a YAML/JSON config file, an environment variable
(prefix HLFSTEREO_, e.g. HLFSTEREO_GAMMA_C_REAL=0.7), or a CLI flag.
Precedence: defaults < config file < environment < explicit CLI values.
"""

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import yaml

ENV_PREFIX = "HLFSTEREO_"


@dataclass
class Params:
    # descriptor
    bin_width: float = 1.0 / 64.0        # histogram bin width
    bin_overlap: float = 1.0 / 16.0      # fraction of bin shared with the next
    level_widths: tuple = (3, 5, 9)      # descriptor window widths per level
    sigma_g_factor: float = 1.0 / 3.0    # spatial Gaussian sigma = factor * w
    blend_beta: float = 0.5              # cap of the h1/h2 blend weight
    blend_sigma: float = 0.16            # decay of blend weight vs magnitude^2
    mag_percentile: float = 99.0         # gradient magnitude normalizer
    # matching metric
    ncc_window: int = 9                  # window for element-wise NCC
    clamp_floor: float = 1e-6            # score clamp so -log stays finite
    var_eps: float = 1e-12               # zero-variance threshold
    # mrf
    tau: int = 2                         # truncation of |a - b| in label steps
    sigma_c: float = 0.1                 # contrast sensitivity of edge weights
    lambda_s_factor: float = 0.4         # auto smoothness = factor * mean unary range
    lambda_s: float = None               # explicit smoothness weight (overrides auto)
    max_sweeps: int = 5                  # alpha-expansion sweep cap
    # pairwise matcher
    occlusion_factor: float = 1.2        # occlusion cost = factor * median data cost
    # hlf stereo
    gamma_c_synthetic: float = 0.45      # correspondence weight, synthetic scenes
    gamma_c_real: float = 0.6            # correspondence weight, real scenes
    real_scene: bool = False
    edge_mag_percentile: float = 90.0    # edges for occlusion candidates
    occl_radius_px: int = 2              # distance to edge that marks a candidate
    # defocus cue
    sigma_d: float = 96.5                # nm, width of the spectral prior
    kl_floor: float = 1e-6               # floor on the observed profile
    defocus_max_cost: float = -math.log(1e-6)  # cost for an all-zero profile
    achromatic_nm: float = 550.0         # fallback wavelength for gray colors
    achromatic_eps: float = 1e-6         # saturation below this counts as gray
    hue_table_range: tuple = (410.0, 700.0)
    hue_table_step: float = 1.0
    # completion
    conf_decay: float = 0.9              # confidence multiplier per hop
    sigma_e: float = 0.3                 # edge-magnitude term in WLS weights
    lambda_r: float = 1.0                # WLS smoothness weight
    wls_tol: float = 1e-6                # iterative solver tolerance
    data_weight: float = 1.0             # WLS data weight, merged estimates
    prior_weight: float = 0.5            # WLS data weight, warped-prior-only pixels
    ztest_tol_steps: float = 1.0         # z-test slack in label steps
    # render
    render_gamma: float = 1.0            # output gamma (1.0 = linear)
    # execution
    threads: int = None                  # worker/thread cap (None = all cores)
    seed: int = 0

    def resolve_gamma_c(self):
        return self.gamma_c_real if self.real_scene else self.gamma_c_synthetic

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["level_widths"] = list(self.level_widths)
        d["hue_table_range"] = list(self.hue_table_range)
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping, base=None):
        """Build Params from a dict, validating key names."""
        base = base or cls()
        known = set(cls.field_names())
        updates = {}
        for k, v in mapping.items():
            if k not in known:
                raise KeyError(f"unknown config key: {k}")
            if k in ("level_widths", "hue_table_range") and v is not None:
                v = tuple(v)
            updates[k] = v
        return base.replace(**updates)

    @classmethod
    def from_file(cls, path, base=None):
        with open(path) as f:
            if path.endswith(".json"):
                data = json.load(f)
            else:
                data = yaml.safe_load(f)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a mapping")
        return cls.from_mapping(data, base=base)

    @classmethod
    def from_env(cls, base=None, environ=None):
        environ = os.environ if environ is None else environ
        base = base or cls()
        updates = {}
        for name in cls.field_names():
            key = ENV_PREFIX + name.upper()
            if key in environ:
                updates[name] = yaml.safe_load(environ[key])
        return cls.from_mapping(updates, base=base) if updates else base


def load_params(config_path=None, overrides=None, environ=None):
    """Standard layering: defaults, then file, then env, then overrides."""
    params = Params()
    if config_path:
        params = Params.from_file(config_path, base=params)
    params = Params.from_env(base=params, environ=environ)
    if overrides:
        params = Params.from_mapping(
            {k: v for k, v in overrides.items() if v is not None}, base=params)
    return params
