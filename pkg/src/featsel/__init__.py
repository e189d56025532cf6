"""featsel: task-aware feature-channel importance, selection and compression.

Quantifies how much each feature channel of a multi-task visual model
matters for each task via a patch/cluster/bin MI estimate, validates the
estimator against closed-form Gaussian truth, and applies hard or soft
(compressive) channel selection with multi-objective analysis over task
preference weights.
"""

__version__ = "0.1.0"

from .errors import DomainError, FeatselError, FormatError  # noqa: F401
