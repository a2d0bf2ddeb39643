#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "semlink/systems.hpp"

namespace httplib {
class Server;
}

namespace semlink {

inline constexpr std::size_t kMaxRequestBytes = 16u << 20;
inline constexpr int kMaxUploadSide = 4096;
inline constexpr int kMaxProcessedSide = 512;
inline constexpr std::size_t kMaxSweepPoints = 16;
inline constexpr int kMaxSweepRepeats = 16;

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

// Request handling for the live demo. Handlers are const and share the
// loaded model read-only; every random draw comes from the request's seed.
class DemoService {
 public:
  // `dnn` may be null, in which case only qam256 is offered.
  DemoService(std::shared_ptr<const DnnLink> dnn, std::string checkpoint_id);

  ServiceReply transmit(std::string_view request_body) const;
  ServiceReply sweep(std::string_view request_body) const;
  nlohmann::json info() const;

  // Registers /api/* routes, permissive CORS headers, and (optionally) static
  // files for the UI bundle at "/".
  void mount(httplib::Server& server, const std::optional<std::filesystem::path>& ui_dir = std::nullopt) const;

 private:
  std::shared_ptr<const DnnLink> dnn_;
  std::string checkpoint_id_;
};

// Stable short identifier for a checkpoint file (FNV-1a over its bytes).
std::string checkpoint_fingerprint(const std::filesystem::path& path);

}  // namespace semlink
