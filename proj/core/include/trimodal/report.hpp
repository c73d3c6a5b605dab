// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace trimodal {

// Renders a static HTML report from result JSON files. When a retrieval
// result carries a rankings file and a dataset directory is supplied,
// each query gets a row of top-10 gallery thumbnails (first stored view),
// outlined by relevance.
void render_report(const std::vector<std::string>& result_paths, const std::string& out_html,
                   const std::string& data_dir = "");

}  // namespace trimodal
