// Copyright 2026 The sdedup Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>

#include "sdedup/common/bytes.hpp"

namespace sdedup {

// Writes through a temp file and renames, fsyncing file and directory.
// Throws Error(kIo).
void write_file_atomic(const std::filesystem::path& path, ByteView data);
void fsync_dir(const std::filesystem::path& dir);

}  // namespace sdedup
