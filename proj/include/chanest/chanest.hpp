// SPDX-License-Identifier: Apache-2.0
//
// chanest - three-stage cascaded channel estimation for RIS-aided mmWave
// MU-MIMO uplinks with hybrid analog/digital arrays
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef CHANEST_CHANEST_HPP
#define CHANEST_CHANEST_HPP

#include "chanest/array.hpp"
#include "chanest/channel.hpp"
#include "chanest/design.hpp"
#include "chanest/estimator.hpp"
#include "chanest/harness.hpp"
#include "chanest/linalg.hpp"
#include "chanest/metrics.hpp"
#include "chanest/pilot.hpp"
#include "chanest/solvers.hpp"
#include "chanest/types.hpp"

#endif  // CHANEST_CHANEST_HPP
