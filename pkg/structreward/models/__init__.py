# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Caption IR, verifier bindings and the caption policy
from structreward.models.caption_ir import StructuredCaption
