/*
 * Copyright 2026 The hierloss Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "hierloss/common.hpp"
#include "hierloss/dataset.hpp"
#include "hierloss/datasplit.hpp"
#include "hierloss/evaluate.hpp"
#include "hierloss/experiment.hpp"
#include "hierloss/losses.hpp"
#include "hierloss/metrics.hpp"
#include "hierloss/model.hpp"
#include "hierloss/random.hpp"
#include "hierloss/sampler.hpp"
#include "hierloss/synthdata.hpp"
#include "hierloss/taxonomy.hpp"
#include "hierloss/training.hpp"
