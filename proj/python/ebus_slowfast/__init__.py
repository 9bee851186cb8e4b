# Copyright 2026 The ebus-slowfast Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from ebus_slowfast._core import (
    EbusError,
    FormatError,
    Model,
    ShapeError,
    apply_cutmix,
    auc,
    classify_prob,
    crop_resize,
    enumerate_clips,
    gradient_suite,
    hflip,
    metrics_from_counts,
    read_pgm,
    run_cli,
    sinkhorn_codes,
    write_pgm,
)

__all__ = [
    "EbusError",
    "FormatError",
    "Model",
    "ShapeError",
    "apply_cutmix",
    "auc",
    "classify_prob",
    "crop_resize",
    "enumerate_clips",
    "gradient_suite",
    "hflip",
    "metrics_from_counts",
    "read_pgm",
    "run_cli",
    "sinkhorn_codes",
    "write_pgm",
]
