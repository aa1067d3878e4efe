// Copyright 2026 The CuteMaxVar Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include "cutemaxvar/cli.hpp"
#include "cutemaxvar/compressor.hpp"
#include "cutemaxvar/config_json.hpp"
#include "cutemaxvar/datagen.hpp"
#include "cutemaxvar/error.hpp"
#include "cutemaxvar/matcore.hpp"
#include "cutemaxvar/matrix_io.hpp"
#include "cutemaxvar/metrics.hpp"
#include "cutemaxvar/node.hpp"
#include "cutemaxvar/oracle.hpp"
#include "cutemaxvar/protocol.hpp"
#include "cutemaxvar/rng.hpp"
#include "cutemaxvar/schedule.hpp"
#include "cutemaxvar/server.hpp"
#include "cutemaxvar/transform.hpp"
