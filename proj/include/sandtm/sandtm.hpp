/*
 * Copyright 2026 The sandtm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "sandtm/arena.hpp"
#include "sandtm/config.hpp"
#include "sandtm/det_scheduler.hpp"
#include "sandtm/heap.hpp"
#include "sandtm/helper.hpp"
#include "sandtm/history.hpp"
#include "sandtm/logs.hpp"
#include "sandtm/runtime.hpp"
#include "sandtm/sandbox.hpp"
#include "sandtm/scheduler.hpp"
#include "sandtm/stm.hpp"
#include "sandtm/tx.hpp"
#include "sandtm/types.hpp"
