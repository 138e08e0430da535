# Copyright 2026 The CrossPT Authors
# SPDX-License-Identifier: Apache-2.0
"""Cross-task prompt composition on a frozen toy transformer."""

from ._crosspt import *  # noqa: F401,F403
from ._crosspt import __version__  # noqa: F401
