// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#include "fv2es/errors.hpp"
