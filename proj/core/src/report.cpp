// SPDX-License-Identifier: Apache-2.0
#include "trimodal/report.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "trimodal/archive.hpp"
#include "trimodal/experiment.hpp"
#include "trimodal/image_io.hpp"

namespace trimodal {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

void emit_metric_table(std::ostream& os, const json& doc) {
  os << "<table class=\"metrics\"><tr><th>metric</th><th>value</th></tr>\n";
  for (const auto& [k, v] : doc.at("metrics").items())
    os << "<tr><td>" << html_escape(k) << "</td><td>" << v.dump() << "</td></tr>\n";
  os << "</table>\n";
}

void emit_gallery(std::ostream& os, const json& doc, const std::string& rankings_path,
                  const ArchiveReader& data, int top_k = 10) {
  std::ifstream rf(rankings_path);
  if (!rf) throw std::runtime_error("cannot open rankings " + rankings_path);

  auto thumb = [&](const std::string& id) {
    int64_t idx = data.index_of(id);
    return png_data_uri(data.load_view(idx, 0).pixels);
  };

  os << "<p>top-" << top_k << " ranked lists (green = same class as query)</p>\n";
  std::string line;
  while (std::getline(rf, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    std::string qid = rec.at("query").get<std::string>();
    os << "<div class=\"row\"><figure class=\"query\"><img src=\"" << thumb(qid)
       << "\"/><figcaption>" << html_escape(qid) << "</figcaption></figure>\n";
    const json& ids = rec.at("gallery");
    const json& rel = rec.at("relevant");
    for (int i = 0; i < top_k && i < static_cast<int>(ids.size()); ++i) {
      bool good = rel[i].get<bool>();
      os << "<figure class=\"" << (good ? "hit" : "miss") << "\"><img src=\""
         << thumb(ids[i].get<std::string>()) << "\"/></figure>\n";
    }
    os << "</div>\n";
  }
  (void)doc;
}

}  // namespace

void render_report(const std::vector<std::string>& result_paths, const std::string& out_html,
                   const std::string& data_dir) {
  std::ostringstream os;
  os << "<!doctype html><html><head><meta charset=\"utf-8\"><title>results</title>\n"
     << "<style>\n"
     << "body{font-family:sans-serif;margin:2em;}\n"
     << "table.metrics{border-collapse:collapse;margin:1em 0;}\n"
     << "table.metrics td,table.metrics th{border:1px solid #999;padding:4px 10px;}\n"
     << ".row{display:flex;gap:6px;margin:8px 0;align-items:flex-end;}\n"
     << ".row img{width:72px;height:72px;image-rendering:pixelated;}\n"
     << "figure{margin:0;}\n"
     << "figure.query img{border:3px solid #333;}\n"
     << "figure.hit img{border:3px solid #2a2;}\n"
     << "figure.miss img{border:3px solid #c33;}\n"
     << "figcaption{font-size:10px;max-width:78px;overflow-wrap:anywhere;}\n"
     << "</style></head><body>\n";

  std::unique_ptr<ArchiveReader> data;
  if (!data_dir.empty()) data = std::make_unique<ArchiveReader>(data_dir);

  for (const std::string& path : result_paths) {
    json doc = json::parse(read_file_text(path));
    os << "<h2>" << html_escape(doc.value("task", std::string("result"))) << "</h2>\n";
    os << "<p class=\"src\">" << html_escape(path) << "</p>\n";
    emit_metric_table(os, doc);
    if (doc.contains("rankings") && data) {
      fs::path rp = doc["rankings"].get<std::string>();
      if (rp.is_relative()) rp = fs::path(path).parent_path() / rp;
      emit_gallery(os, doc, rp.string(), *data);
    }
  }
  os << "</body></html>\n";
  write_file_text(out_html, os.str());
}

}  // namespace trimodal
