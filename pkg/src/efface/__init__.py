"""efface: object-and-effect removal toolkit.

Data construction (counterfactual annotation, alpha extraction, scene
compositing), a small trainable denoiser with supervised object-effect
cross-attention, attention-guided fusion, and a metrics harness.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
