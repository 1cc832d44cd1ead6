#include <chrono>
#include <sstream>

#include "forge/assistant.hpp"
#include "text_util.hpp"

namespace forge::assistant {

namespace fs = std::filesystem;

Millis SystemClock::now() const {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Millis ManualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::set(Millis t) {
  std::lock_guard lock(mu_);
  now_ = t;
}

void ManualClock::advance(Millis delta) {
  std::lock_guard lock(mu_);
  now_ += delta;
}

EventStore::EventStore(std::optional<fs::path> path) : path_(std::move(path)) {
  if (!path_) return;
  if (path_->has_parent_path()) fs::create_directories(path_->parent_path());
}

std::vector<nlohmann::json> EventStore::replay() {
  std::lock_guard lock(mu_);
  std::vector<nlohmann::json> events;
  if (!path_ || !fs::exists(*path_)) return events;

  std::string content;
  {
    std::ifstream in(*path_, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot read " + path_->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  // A crash mid-append leaves a line without its newline; drop it so the
  // next append starts on a clean line.
  if (!content.empty() && content.back() != '\n') {
    auto nl = content.rfind('\n');
    content.resize(nl == std::string::npos ? 0 : nl + 1);
    fs::resize_file(*path_, content.size());
  }

  std::size_t line_no = 0;
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorKind::malformed_record, path_->string() + ":" + std::to_string(line_no) + ": bad event");
    }
    events.push_back(std::move(j));
  }
  return events;
}

void EventStore::append(const nlohmann::json& event) {
  std::lock_guard lock(mu_);
  if (!path_) return;
  if (!out_.is_open()) {
    out_.open(*path_, std::ios::app | std::ios::binary);
    if (!out_) throw Error(ErrorKind::io, "cannot append to " + path_->string());
  }
  out_ << event.dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorKind::io, "write failed for " + path_->string());
}

}  // namespace forge::assistant
