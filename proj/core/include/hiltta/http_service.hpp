// Copyright 2026 The hiltta Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "hiltta/annotation.hpp"

namespace hiltta
{
/// HTTP/JSON front end of an AnnotationSession.
///
///   GET  /api/session   {session_id, num_classes, class_names, batch_index, timeout_s}
///   GET  /api/pending   [{sample_id, batch_index, point, background, top}]
///   POST /api/labels    {sample_id, label} -> 202 | 400 | 404 | 409 | 422
///   GET  /api/progress  {labeled, pending, batch_index, overall_error_so_far}
///   GET  /              console assets from `assets_dir`
class AnnotationServer
{
public:
    AnnotationServer(AnnotationSession& session, std::filesystem::path assets_dir = {});
    ~AnnotationServer();

    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Bind to host:port; port 0 picks a free port. Returns the bound port.
    /// Throws if the port is busy.
    int bind(const std::string& host, int port);
    /// Serve on a background thread after bind().
    void start();
    /// Serve on the calling thread after bind(); returns after stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace hiltta
