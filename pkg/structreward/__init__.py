# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
"""
structreward: structured-consistency rewards for caption generation
"""

__version__ = "0.1.0"
